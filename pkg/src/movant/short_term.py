"""Short-term receive-APV optimizers.

Both optimizers work on a batch of independent problems at once (leading axis
``P``): gradient ascent that moves one antenna at a time under pairwise
distance constraints (general movement mode), and whole-vector gradient
projection over per-antenna rectangles (planar movement mode).

The sufficient-increase test compares the gain against ``xi * ||x_new -
x_old||**2 / tau``; for a step that is not clipped by the region this is the
usual ``xi * tau * ||grad||**2``, and on the boundary it remains satisfiable
whenever the projected direction is an ascent direction.

Backtracking tries the step sizes ``s, s*tau, s*tau**2, ...`` in order and
keeps the first that passes.  Candidates are evaluated a few step sizes at a
time for all problems that are still searching, which selects exactly the
step a sequential search would.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import Link, RegionSpec
from .config import BacktrackParams
from .rate import (
    _cache_from_parts,
    _logdet,
    LN2,
    channel_sensitivity,
    grad_r_single,
    inv_update,
)

__all__ = [
    "ReceiveObjective",
    "ShortTermResult",
    "project_region",
    "active_mask",
    "pairwise_min_distance",
    "ga_optimize",
    "gp_optimize",
    "kkt_residual_short",
]

log = logging.getLogger(__name__)


def _herm(A):
    return np.conj(np.swapaxes(A, -1, -2))


def _expand(a, n_extra):
    """Insert ``n_extra`` singleton axes after the batch axis."""
    return a.reshape(a.shape[:1] + (1,) * n_extra + a.shape[1:])


@dataclass(frozen=True)
class ReceiveObjective:
    """Rate of a batch of users as a function of their receive APVs only.

    Everything that does not depend on the receive positions is precomputed:
    ``weighted_tx = Sigma G(t)`` (``(P, L, N)``), the receive direction
    coefficients (``(P, L, 2)``) and the two covariance sums (``(P, N, N)``).
    """

    weighted_tx: np.ndarray
    rx_dir: np.ndarray
    s_all: np.ndarray
    s_int: np.ndarray
    noise: float

    @classmethod
    def from_link(cls, link: Link, t, Q, users, noise) -> "ReceiveObjective":
        """Build from a batched ``link`` (``gains`` of shape ``(P, L)``).

        ``users`` gives, per problem, the index of the user whose rate is
        maximized (an int applies to all problems).
        """
        gains = np.atleast_2d(link.gains)
        P = gains.shape[0]
        link = Link(gains, link.tx_dir.reshape(P, -1, 2), link.rx_dir.reshape(P, -1, 2))
        Q = np.asarray(Q)
        users = np.broadcast_to(np.asarray(users), (P,))
        if Q.ndim == 3:
            Q = np.broadcast_to(Q, (P,) + Q.shape)
        s_all = Q.sum(axis=1)
        s_int = s_all - Q[np.arange(P), users]
        t = np.asarray(t, dtype=float)
        return cls(link.weighted_tx(t), link.rx_dir, s_all, s_int, float(noise))

    @property
    def size(self) -> int:
        return self.weighted_tx.shape[0]

    def take(self, idx) -> "ReceiveObjective":
        return ReceiveObjective(
            self.weighted_tx[idx], self.rx_dir[idx], self.s_all[idx], self.s_int[idx], self.noise
        )

    def channel(self, r):
        """``H`` for receive APVs ``(P, ..., M, 2)`` -> ``(P, ..., M, N)``."""
        r = np.asarray(r, dtype=float)
        extra = r.ndim - 3
        rx_dir = _expand(self.rx_dir, extra)
        phase = r @ np.swapaxes(rx_dir, -1, -2)  # (P, ..., M, L)
        return np.exp(-1j * phase) @ _expand(self.weighted_tx, extra)

    def rate(self, r):
        r = np.asarray(r, dtype=float)
        extra = r.ndim - 3
        H = self.channel(r)
        Hh = _herm(H)
        I = self.noise * np.eye(H.shape[-2])
        c_all = I + H @ _expand(self.s_all, extra) @ Hh
        c_int = I + H @ _expand(self.s_int, extra) @ Hh
        return (_logdet(c_all) - _logdet(c_int)) / LN2

    def grad(self, r):
        """Gradient w.r.t. all receive positions, ``(P, M, 2)``."""
        r = np.asarray(r, dtype=float)
        phase = r @ np.swapaxes(self.rx_dir, -1, -2)
        Fh = np.exp(-1j * phase)  # (P, M, L)
        H = Fh @ self.weighted_tx
        A = channel_sensitivity(H, self.s_all, self.s_int, self.noise)  # (P, N, M)
        out = []
        for c in range(2):
            B = (Fh * (-1j * self.rx_dir[:, None, :, c])) @ self.weighted_tx
            out.append(np.real(np.einsum("pmn,pnm->pm", B, A)))
        return np.stack(out, axis=-1)

    def inverse_cache(self, r):
        return _cache_from_parts(self.weighted_tx, self.rx_dir, self.s_all, self.s_int, r,
                                 self.noise)


@dataclass
class ShortTermResult:
    """Output of a batched short-term solve.

    ``trace`` holds the objective after every sweep/iteration,
    ``(P, iterations + 1)``; entries after a problem stopped repeat its last
    value.  ``mask`` is the active-coordinate mask of the last iteration
    (gradient projection only).
    """

    positions: np.ndarray
    rate: np.ndarray
    trace: np.ndarray
    iterations: np.ndarray
    exhausted: int = 0
    mask: np.ndarray | None = None
    fallbacks: int = 0


def project_region(x, region: RegionSpec):
    """Box projection of positions ``(..., n, 2)`` onto ``region``."""
    return region.project(x)


def active_mask(pre_projection, region: RegionSpec):
    """1 where a coordinate of the unprojected update lies inside its range, else 0."""
    pre = np.asarray(pre_projection, dtype=float)
    lo, hi = region.bounds(pre.shape[-2])
    return ((pre >= lo) & (pre <= hi)).astype(float)


def pairwise_min_distance(x):
    """Smallest pairwise distance within each APV ``(..., n, 2)`` (inf if n < 2)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-2]
    if n < 2:
        return np.full(x.shape[:-2], np.inf)
    diff = x[..., :, None, :] - x[..., None, :, :]
    d = np.sqrt(np.sum(diff**2, axis=-1))
    iu = np.triu_indices(n, 1)
    return d[..., iu[0], iu[1]].min(axis=-1)


def _batched(objective, r0):
    r0 = np.asarray(r0, dtype=float)
    single = r0.ndim == 2
    if single:
        r0 = np.broadcast_to(r0, (objective.size,) + r0.shape)
    elif r0.shape[0] != objective.size:
        raise ValueError("initial APV batch does not match the objective batch")
    return np.array(r0), single


def _unbatch(result: ShortTermResult, single: bool) -> ShortTermResult:
    if not single or result.positions.shape[0] != 1:
        return result
    return ShortTermResult(
        result.positions[0], result.rate[0], result.trace[0], result.iterations[0],
        result.exhausted, None if result.mask is None else result.mask[0], result.fallbacks,
    )


def _step_sizes(params: BacktrackParams):
    return params.step * params.shrink ** np.arange(params.max_backtracks + 1)


_CHUNK = 20  # step sizes evaluated together per line-search round


def _line_search(n_rows, n_steps, trial):
    """Index of the first passing step size per row (-1 if none) and its value/point.

    ``trial(rows, sl)`` evaluates step sizes ``sl`` for the given rows and
    returns ``(ok, vals, points)`` shaped ``(p, c)``, ``(p, c)`` and
    ``(p, c, ...)``.
    """
    choice = np.full(n_rows, -1)
    values = np.zeros(n_rows)
    points = None
    pending = np.arange(n_rows)
    for start in range(0, n_steps, _CHUNK):
        if pending.size == 0:
            break
        ok, vals, pts = trial(pending, slice(start, min(start + _CHUNK, n_steps)))
        if points is None:
            points = np.zeros((n_rows,) + pts.shape[2:])
        has = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        hit = np.flatnonzero(has)
        choice[pending[hit]] = start + first[hit]
        values[pending[hit]] = vals[hit, first[hit]]
        points[pending[hit]] = pts[hit, first[hit]]
        pending = pending[~has]
    return choice, values, points


def ga_optimize(objective: ReceiveObjective, r0, region: RegionSpec, min_distance: float,
                params: BacktrackParams, use_cache: bool | None = None) -> ShortTermResult:
    """Antenna-by-antenna gradient ascent with backtracking.

    Sweeps ``m = 1..M`` in order; for each antenna the step starts at
    ``params.step`` and shrinks until both the sufficient-increase test and
    the minimum-distance constraints hold.  If no step passes within
    ``max_backtracks`` shrinks the antenna stays where it is for that sweep.
    A problem stops once a full sweep gains less than ``params.tol``, or after
    ``params.max_iter`` sweeps.

    ``use_cache`` selects the rank-two inverse updates for the gradients; by
    default they are used only when ``M >= 3``.
    """
    r, single = _batched(objective, r0)
    P, M, _ = r.shape
    if not region.contains(r, atol=1e-12):
        raise ValueError("initial receive APV lies outside its region")
    if M > 1 and np.any(pairwise_min_distance(r) < min_distance):
        raise ValueError("initial receive APV violates the minimum distance")
    if use_cache is None:
        use_cache = M >= 3

    taus = _step_sizes(params)
    lo, hi = region.bounds(M)
    d2 = min_distance**2
    value = objective.rate(r)
    trace = np.empty((P, params.max_iter + 1))
    trace[:, 0] = value
    iterations = np.zeros(P, dtype=int)
    active = np.ones(P, dtype=bool)
    exhausted = 0
    cache = objective.inverse_cache(r) if use_cache else None
    fallbacks = 0

    for sweep in range(params.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            trace[:, sweep + 1 :] = trace[:, sweep : sweep + 1]
            break
        sub = objective.take(idx)
        start = value[idx].copy()
        for m in range(M):
            rs = r[idx]
            if use_cache:
                sub_cache = _take_cache(cache, idx)
                g = grad_r_single(sub_cache, rs, m)
            else:
                g = sub.grad(rs)[:, m]
            base = value[idx]

            def trial(rows, sl, rs=rs, g=g, m=m, base=base):
                t = taus[sl]
                cand_m = np.clip(rs[rows, None, m, :] + t[None, :, None] * g[rows, None, :],
                                 lo[m], hi[m])  # (p, c, 2)
                cand = np.repeat(rs[rows, None], len(t), axis=1)
                cand[:, :, m] = cand_m
                vals = sub.take(rows).rate(cand)
                step2 = np.sum((cand_m - rs[rows, None, m, :]) ** 2, axis=-1)
                ok = vals >= base[rows, None] + params.armijo * step2 / t[None, :]
                if M > 1:
                    others = np.delete(rs[rows], m, axis=1)  # (p, M-1, 2)
                    dist2 = np.sum((cand_m[:, :, None, :] - others[:, None, :, :]) ** 2, axis=-1)
                    ok &= np.all(dist2 >= d2, axis=-1)
                return ok, vals, cand_m

            choice, vals, new_pos = _line_search(idx.size, len(taus), trial)
            has = choice >= 0
            exhausted += int(np.sum(~has))
            moved = idx[has]
            if moved.size:
                if use_cache:
                    cache = _update_cache(cache, moved, m, new_pos[has])
                r[moved, m] = new_pos[has]
                value[moved] = vals[has]
        iterations[idx] += 1
        trace[:, sweep + 1] = value
        done = value[idx] - start < params.tol
        active[idx[done]] = False
    if exhausted:
        log.debug("ga_optimize: %d line searches hit the backtracking cap", exhausted)
    if use_cache:
        fallbacks = cache.fallbacks
    return _unbatch(ShortTermResult(r, value, trace, iterations, exhausted, None, fallbacks),
                    single)


def _take_cache(cache, idx):
    from dataclasses import replace

    return replace(
        cache,
        proj_plus=cache.proj_plus[idx],
        proj_minus=cache.proj_minus[idx],
        rx_dir=cache.rx_dir[idx],
        positions=cache.positions[idx],
        inv_plus=cache.inv_plus[idx],
        inv_minus=cache.inv_minus[idx],
    )


def _update_cache(cache, rows, m, new_pos):
    from dataclasses import replace

    sub = inv_update(_take_cache(cache, rows), m, new_pos)
    positions = cache.positions.copy()
    inv_plus = cache.inv_plus.copy()
    inv_minus = cache.inv_minus.copy()
    positions[rows] = sub.positions
    inv_plus[rows] = sub.inv_plus
    inv_minus[rows] = sub.inv_minus
    return replace(cache, positions=positions, inv_plus=inv_plus, inv_minus=inv_minus,
                   fallbacks=sub.fallbacks)


def gp_optimize(objective: ReceiveObjective, r0, region: RegionSpec, params: BacktrackParams,
                early_exit: bool = False) -> ShortTermResult:
    """Whole-vector gradient projection for exactly ``params.max_iter`` iterations.

    Each iteration backtracks from ``params.step`` until the sufficient-
    increase test holds; when the cap is hit the iterate does not move.  With
    ``early_exit`` a problem stops once an iteration gains less than
    ``params.tol``.
    """
    r, single = _batched(objective, r0)
    P, M, _ = r.shape
    if not region.contains(r, atol=1e-12):
        raise ValueError("initial receive APV lies outside its region")
    taus = _step_sizes(params)
    lo, hi = region.bounds(M)
    value = objective.rate(r)
    trace = np.empty((P, params.max_iter + 1))
    trace[:, 0] = value
    iterations = np.zeros(P, dtype=int)
    mask = np.ones_like(r)
    active = np.ones(P, dtype=bool)
    exhausted = 0
    for it in range(params.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            trace[:, it + 1 :] = trace[:, it : it + 1]
            break
        sub = objective.take(idx)
        rs = r[idx]
        g = sub.grad(rs)
        base = value[idx]

        def trial(rows, sl, rs=rs, g=g, base=base):
            t = taus[sl]
            cand = np.clip(rs[rows, None] + t[None, :, None, None] * g[rows, None], lo, hi)
            vals = sub.take(rows).rate(cand)
            step2 = np.sum((cand - rs[rows, None]) ** 2, axis=(-2, -1))
            ok = vals >= base[rows, None] + params.armijo * step2 / t[None, :]
            return ok, vals, cand

        choice, vals, cand = _line_search(idx.size, len(taus), trial)
        has = choice >= 0
        used = taus[np.where(has, choice, len(taus) - 1)]
        pre = rs + used[:, None, None] * g
        mask[idx] = ((pre >= lo) & (pre <= hi)).astype(float)
        exhausted += int(np.sum(~has))
        start = value[idx].copy()
        r[idx[has]] = cand[has]
        value[idx[has]] = vals[has]
        iterations[idx] += 1
        trace[:, it + 1] = value
        if early_exit:
            active[idx[value[idx] - start < params.tol]] = False
    if exhausted:
        log.debug("gp_optimize: %d line searches hit the backtracking cap", exhausted)
    return _unbatch(ShortTermResult(r, value, trace, iterations, exhausted, mask), single)


def kkt_residual_short(objective: ReceiveObjective, r_final, mask):
    """``||mask * grad_r R||`` per problem: the stationarity error left after a finite run."""
    r, single = _batched(objective, r_final)
    g = objective.grad(r)
    res = np.sqrt(np.sum((np.asarray(mask) * g) ** 2, axis=(-2, -1)))
    return res[0] if single and res.shape[0] == 1 else res
