"""Long-term (statistical CSI) design loops and the benchmark schemes.

Every scheme shares one loop: draw a mini-batch of channel samples, obtain
the receive APVs of every sample and user (short-term optimization or fixed
positions, depending on the scheme), fold the mini-batch gradients into the
recursive surrogates, solve the convex surrogate problem and move the
long-term variables a diminishing step towards its solution.

Schemes differ only in the receive policy and in which variables are long-term:

=================  =======================================  ====================
scheme             receive APVs inside the loop             long-term variables
=================  =======================================  ====================
proposed-gmm       gradient ascent per sample (shared area)  t, Q
proposed-pmm       gradient projection per sample (squares)  t, Q
decoupled-gmm      frozen at the initial APV                 t, Q
scsit-gmm          long-term variables                       t, Q, r
scsit-upa          fixed half-wavelength arrays              Q
=================  =======================================  ====================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import (
    Link,
    RegionSpec,
    StatisticalState,
    draw_channel_sample,
    receive_region,
    transmit_region,
    upa_positions,
)
from .config import SystemConfig
from .convex_solver import SurrogateProblem, solve_surrogate
from .short_term import (
    ReceiveObjective,
    ShortTermResult,
    ga_optimize,
    gp_optimize,
    pairwise_min_distance,
)
from .surrogate import (
    SurrogateState,
    blend_variables,
    mini_batch_gradients,
    step_sizes,
    surrogate_update,
)

__all__ = [
    "SchemeId",
    "LongTermSolution",
    "ReceivePolicy",
    "initial_transmit",
    "initial_receive",
    "initial_covariance",
    "upa_transmit",
    "upa_receive",
    "draw_links",
    "cssca_gmm",
    "pdd_ssca_pmm",
    "run_scheme",
    "evaluate_design",
]

log = logging.getLogger(__name__)


class SchemeId(str, Enum):
    PROPOSED_GMM = "proposed-gmm"
    PROPOSED_PMM = "proposed-pmm"
    DECOUPLED_GMM = "decoupled-gmm"
    SCSIT_GMM = "scsit-gmm"
    SCSIT_UPA = "scsit-upa"

    @classmethod
    def parse(cls, value) -> "SchemeId":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scheme {value!r}; choose from {names}") from None

    @property
    def movement_mode(self) -> str:
        return "pmm" if self is SchemeId.PROPOSED_PMM else "gmm"

    @property
    def short_term(self) -> str | None:
        """Short-term optimizer used at evaluation time (None: fixed receive APVs)."""
        if self is SchemeId.PROPOSED_PMM:
            return "gp"
        if self in (SchemeId.PROPOSED_GMM, SchemeId.DECOUPLED_GMM):
            return "ga"
        return None


# ---------------------------------------------------------------------------
# initial points


def _region_center(region: RegionSpec):
    r = region.rects[0]
    return (0.5 * (r[0] + r[1]), 0.5 * (r[2] + r[3]))


def initial_transmit(config: SystemConfig) -> np.ndarray:
    """UPA centred in the transmit region with spacing ``D + X_t / 2``."""
    region = transmit_region(config)
    spacing = config.min_distance_m + 0.5 * config.tx_region_m
    return upa_positions(config.n_tx, spacing, _region_center(region))


def initial_receive(config: SystemConfig, mode: str = "gmm") -> np.ndarray:
    """Initial receive APV ``(M, 2)``.

    GMM: a single row centred in the shared region with spacing
    ``D + X_r / 2``.  PMM: the centre of every antenna's square.
    """
    region = receive_region(config, mode)
    if mode == "pmm":
        r = region.rects
        return np.stack([0.5 * (r[:, 0] + r[:, 1]), 0.5 * (r[:, 2] + r[:, 3])], axis=-1)
    spacing = config.min_distance_m + 0.5 * config.rx_region_m
    return upa_positions(config.n_rx, spacing, _region_center(region), rows=1)


def initial_covariance(config: SystemConfig) -> np.ndarray:
    """Equal diagonal covariances whose traces sum to the power budget, ``(K, N, N)``."""
    K, N = config.n_users, config.n_tx
    eye = np.eye(N, dtype=complex) * (config.power_w / (K * N))
    return np.repeat(eye[None], K, axis=0)


def _corner_upa(n, spacing, rows, region: RegionSpec, what):
    pos = upa_positions(n, spacing, (0.0, 0.0), rows=rows)
    pos = pos - pos.min(axis=0) + region.rects[0, [0, 2]]
    if not region.contains(pos, atol=1e-12):
        raise ValueError(f"a {what} UPA with spacing {spacing:g} m does not fit its region")
    return pos


def upa_transmit(config: SystemConfig) -> np.ndarray:
    """Fixed transmit UPA anchored at the region corner.

    The spacing is ``upa_tx_spacing_wl`` wavelengths (raised to ``D`` if that
    is larger); anchoring at the corner keeps the array identical when the
    region size changes.
    """
    spacing = max(config.upa_tx_spacing_wl * config.wavelength_m, config.min_distance_m)
    return _corner_upa(config.n_tx, spacing, None, transmit_region(config), "transmit")


def upa_receive(config: SystemConfig) -> np.ndarray:
    """Fixed single-row receive array anchored at the region corner, ``(M, 2)``."""
    spacing = max(config.upa_rx_spacing_wl * config.wavelength_m, config.min_distance_m)
    return _corner_upa(config.n_rx, spacing, 1, receive_region(config, "gmm"), "receive")


# ---------------------------------------------------------------------------
# channel batches and receive policies


def draw_links(stat: StatisticalState, rng: np.random.Generator, n_samples: int,
               config: SystemConfig) -> Link:
    """``n_samples`` independent channel samples as one link batch, gains ``(S, K, L)``."""
    samples = [draw_channel_sample(stat, rng, config.redraw_angles_per_sample)
               for _ in range(n_samples)]
    per = [Link.from_sample(s, config.wavelength_m) for s in samples]
    gains = np.stack([p.gains for p in per])
    if config.redraw_angles_per_sample:
        tx_dir = np.stack([p.tx_dir for p in per])
        rx_dir = np.stack([p.rx_dir for p in per])
    else:
        tx_dir = np.broadcast_to(per[0].tx_dir, gains.shape + (2,))
        rx_dir = np.broadcast_to(per[0].rx_dir, gains.shape + (2,))
    return Link(gains, tx_dir, rx_dir)


def _flatten(links: Link) -> Link:
    S, K, L = links.gains.shape
    shape = (S, K, L, 2)
    return Link(
        links.gains.reshape(S * K, L),
        np.broadcast_to(links.tx_dir, shape).reshape(S * K, L, 2),
        np.broadcast_to(links.rx_dir, shape).reshape(S * K, L, 2),
    )


@dataclass(frozen=True)
class ReceivePolicy:
    """How a scheme places the receive antennas for one channel sample.

    ``kind`` is ``"ga"``, ``"gp"`` (short-term optimization started from
    ``start``) or ``"fixed"`` (``fixed`` gives the ``(K, M, 2)`` APVs).
    """

    kind: str
    start: np.ndarray
    region: RegionSpec
    min_distance: float
    fixed: np.ndarray | None = None

    def _objective(self, links: Link, t, Q, config: SystemConfig):
        S, K, _ = links.gains.shape
        return ReceiveObjective.from_link(_flatten(links), t, Q, np.tile(np.arange(K), S),
                                          config.noise_w)

    def solve(self, links: Link, t, Q, config: SystemConfig) -> ShortTermResult:
        """Short-term solve for every (sample, user) pair, batched sample-major."""
        objective = self._objective(links, t, Q, config)
        if self.kind == "ga":
            return ga_optimize(objective, self.start, self.region, self.min_distance,
                               config.backtrack)
        if self.kind == "gp":
            return gp_optimize(objective, self.start, self.region, config.backtrack,
                               early_exit=config.gp_early_exit)
        raise ValueError(f"receive policy {self.kind!r} has no short-term solve")

    def place(self, links: Link, t, Q, config: SystemConfig):
        """Receive APVs ``(S, K, M, 2)`` and per-user rates ``(S, K)`` for a link batch."""
        S, K, _ = links.gains.shape
        M = self.start.shape[0]
        if self.kind == "fixed":
            objective = self._objective(links, t, Q, config)
            r = np.broadcast_to(self.fixed, (S, K, M, 2)).reshape(S * K, M, 2)
            return r.reshape(S, K, M, 2).copy(), objective.rate(r).reshape(S, K)
        res = self.solve(links, t, Q, config)
        positions = np.asarray(res.positions).reshape(S, K, M, 2)
        return positions, np.asarray(res.rate).reshape(S, K)


# ---------------------------------------------------------------------------
# solution container


@dataclass
class LongTermSolution:
    """Long-term design of one scheme plus its convergence record.

    ``r`` holds the long-term receive APVs ``(K, M, 2)`` of the S-CSIT
    schemes (None otherwise); ``receive_start`` is the starting APV of the
    short-term optimizer.  ``trace`` maps names to per-iteration arrays of
    length ``n_iter`` (``eval_sum_rate`` additionally starts with the value at
    the initial point).
    """

    scheme: SchemeId
    t: np.ndarray
    Q: np.ndarray
    r: np.ndarray | None
    receive_start: np.ndarray
    trace: dict = field(default_factory=dict)
    iterates: list | None = None

    @property
    def n_iter(self) -> int:
        return len(self.trace.get("solver_status", ()))

    @property
    def flagged(self) -> list[int]:
        """Iterations (1-based) whose surrogate solve did not reach the KKT tolerances."""
        return [i + 1 for i, s in enumerate(self.trace.get("solver_status", ())) if s != "converged"]

    def policy(self, config: SystemConfig) -> ReceivePolicy:
        """Receive policy used to evaluate this design."""
        kind = self.scheme.short_term or "fixed"
        mode = self.scheme.movement_mode
        return ReceivePolicy(kind, self.receive_start, receive_region(config, mode),
                             config.min_distance_m, self.r)

    def trace_table(self) -> dict:
        """JSON-friendly copy of the trace."""
        out = {}
        for key, val in self.trace.items():
            arr = np.asarray(val)
            out[key] = arr.tolist()
        return out


def _empty_trace(n_iter):
    keys = ("surrogate_value", "alpha", "batch_sum_rate", "min_distance", "total_power",
            "min_eigenvalue", "stationarity", "rho", "gamma")
    trace = {k: np.full(n_iter, np.nan) for k in keys}
    trace["objective_mode"] = np.zeros(n_iter, dtype=bool)
    trace["solver_status"] = []
    return trace


def _record_feasibility(trace, i, t, Q):
    trace["min_distance"][i] = float(pairwise_min_distance(t))
    trace["total_power"][i] = float(np.real(np.trace(Q, axis1=-2, axis2=-1)).sum())
    trace["min_eigenvalue"][i] = float(np.linalg.eigvalsh(Q).min())


# ---------------------------------------------------------------------------
# the loop


def _long_term(scheme: SchemeId, stat: StatisticalState, config: SystemConfig, rng,
               trace_links: Link | None = None, keep_iterates: bool = False) -> LongTermSolution:
    rng = np.random.default_rng(rng)
    K, N, M = config.n_users, config.n_tx, config.n_rx
    if stat.n_users != K or stat.n_paths != config.n_paths:
        raise ValueError("statistical state does not match the configured sizes")
    D, P = config.min_distance_m, config.power_w
    tx_region = transmit_region(config)
    rx_region = receive_region(config, scheme.movement_mode)
    start = initial_receive(config, scheme.movement_mode)
    Q = initial_covariance(config)

    optimize_t = scheme is not SchemeId.SCSIT_UPA
    long_receive = scheme is SchemeId.SCSIT_GMM
    if scheme is SchemeId.SCSIT_UPA:
        t = upa_transmit(config)
        r_long = np.repeat(upa_receive(config)[None], K, axis=0)
    else:
        t = initial_transmit(config)
        r_long = np.repeat(start[None], K, axis=0) if long_receive else None

    # receive policy inside the loop
    if scheme.short_term is None or scheme is SchemeId.DECOUPLED_GMM:
        fixed = r_long if r_long is not None else np.repeat(start[None], K, axis=0)
        train_policy = ReceivePolicy("fixed", start, rx_region, D, fixed)
    else:
        train_policy = ReceivePolicy(scheme.short_term, start, rx_region, D)

    state = SurrogateState.zero(K, N, config.tau_t, config.tau_q_value,
                                n_rx=M if long_receive else None, tau_r=config.tau_r)
    I = config.n_iter
    trace = _empty_trace(I)
    eval_curve = []
    iterates = [] if keep_iterates else None

    def snapshot():
        sol = LongTermSolution(scheme, t, Q, r_long, start)
        if trace_links is not None:
            _, rates = sol.policy(config).place(trace_links, t, Q, config)
            eval_curve.append(float(rates.sum(axis=1).mean()))
        if keep_iterates:
            iterates.append((t.copy(), Q.copy(), None if r_long is None else r_long.copy()))

    snapshot()
    for ell in range(1, I + 1):
        i = ell - 1
        links = draw_links(stat, rng, config.batch_size, config)
        if train_policy.kind == "fixed" and long_receive:
            train_policy = ReceivePolicy("fixed", start, rx_region, D, r_long)
        receive, _ = train_policy.place(links, t, Q, config)
        grads = mini_batch_gradients(links, t, Q, receive, config.noise_w,
                                     with_receive=long_receive)
        rho, gamma = (float(v) for v in step_sizes(ell, config.rho_exp, config.gamma_exp))
        state = surrogate_update(state, rho, t, Q, grads,
                                 r_anchor=r_long if long_receive else None)
        problem = SurrogateProblem(
            state, t, Q, tx_region, D, config.tau_h, P, config.rate_min_bps,
            config.wavelength_m,
            r_anchor=r_long if long_receive else None,
            rx_region=rx_region if long_receive else None,
            optimize_t=optimize_t,
        )
        report = solve_surrogate(problem)
        if not report.converged:
            log.info("%s iteration %d: surrogate solve %s (residuals %s)", scheme.value, ell,
                     report.status, report.residuals)
        t_new, Q_new, r_new = blend_variables(
            (t, Q, r_long if long_receive else None), (report.t, report.Q, report.r), gamma)
        t = t_new
        Q = 0.5 * (Q_new + np.conj(np.swapaxes(Q_new, -1, -2)))
        if long_receive:
            r_long = r_new

        trace["surrogate_value"][i] = report.value
        trace["alpha"][i] = np.nan if report.alpha is None else report.alpha
        trace["objective_mode"][i] = report.mode == "objective"
        trace["solver_status"].append(report.status)
        trace["stationarity"][i] = report.residuals[0]
        trace["batch_sum_rate"][i] = float(grads.rate.sum())
        trace["rho"][i], trace["gamma"][i] = rho, gamma
        _record_feasibility(trace, i, t, Q)
        snapshot()

    if trace_links is not None:
        trace["eval_sum_rate"] = np.asarray(eval_curve)
    return LongTermSolution(scheme, t, Q, r_long, start, trace, iterates)


def cssca_gmm(stat: StatisticalState, config: SystemConfig, rng=None, **kwargs):
    """Two-timescale design with per-sample gradient ascent in a shared receive area."""
    return _long_term(SchemeId.PROPOSED_GMM, stat, config, rng, **kwargs)


def pdd_ssca_pmm(stat: StatisticalState, config: SystemConfig, rng=None, **kwargs):
    """Two-timescale design with per-sample gradient projection over per-antenna squares.

    Long-term gradients treat the short-term APVs as constants (the
    sensitivity of the short-term solution is dropped).
    """
    return _long_term(SchemeId.PROPOSED_PMM, stat, config, rng, **kwargs)


def run_scheme(scheme, stat: StatisticalState, config: SystemConfig, rng=None,
               trace_links: Link | None = None, keep_iterates: bool = False) -> LongTermSolution:
    """Run the long-term loop of ``scheme`` (a :class:`SchemeId` or its name).

    ``rng`` seeds the mini-batches.  With ``trace_links`` (a link batch
    ``(S, K, L)``) the average sum rate of the design on those samples is
    recorded after every iteration.
    """
    scheme = SchemeId.parse(scheme)
    return _long_term(scheme, stat, config, rng, trace_links=trace_links,
                      keep_iterates=keep_iterates)


def evaluate_design(solution: LongTermSolution, links: Link, config: SystemConfig) -> dict:
    """Per-sample rates ``(S, K)`` and receive APVs ``(S, K, M, 2)`` of a design.

    Short-term schemes optimize the receive APVs afresh for every sample.
    """
    receive, rates = solution.policy(config).place(links, solution.t, solution.Q, config)
    return {"rates": rates, "receive": receive}
