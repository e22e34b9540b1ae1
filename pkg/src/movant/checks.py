"""Oracle and invariant suites behind the ``check`` command.

Each suite draws its own random instances from a fixed seed, compares the
library against an independent oracle (finite differences, direct inversion,
exhaustive grids, unfolded recursions) and returns a :class:`CheckResult`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import Link, RegionSpec, draw_statistical_state, receive_region, transmit_region
from .config import SystemConfig, preset
from .convex_solver import (
    PRIMAL_TOL,
    STATIONARITY_TOL,
    SurrogateProblem,
    kkt_residuals,
    solve_feasibility,
    solve_surrogate,
)
from .rate import (
    achievable_rate,
    build_inverse_cache,
    grad_q,
    grad_r_full,
    grad_r_single,
    grad_t,
    inv_update,
    rate_reformulated,
)
from .short_term import ReceiveObjective, ga_optimize, gp_optimize, pairwise_min_distance
from .surrogate import (
    BatchGradients,
    SurrogateState,
    distance_surrogate,
    mini_batch_gradients,
    step_sizes,
    surrogate_update,
)
from .two_timescale import (
    draw_links,
    initial_covariance,
    initial_receive,
    initial_transmit,
    run_scheme,
)

__all__ = ["CheckResult", "SUITES", "run_checks", "random_instance", "random_covariances"]

WAVELENGTH = 0.06


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    count: int
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e} "
                f"n={self.count} ({self.seconds:.1f}s)")


def random_covariances(rng, K, N, power=10.0):
    """``K`` random PSD covariances with total trace ``power``."""
    A = rng.standard_normal((K, N, N)) + 1j * rng.standard_normal((K, N, N))
    Q = A @ np.conj(np.swapaxes(A, -1, -2))
    return Q * (power / np.real(np.trace(Q, axis1=-2, axis2=-1)).sum())


def random_instance(rng, K=None, N=None, M=None, L=None, span=2.0):
    """A random single-user link plus positions and a covariance set.

    Unit noise and unit-variance path gains keep rates of order one.
    Positions are uniform in a ``span`` wavelength square.
    """
    K = K or int(rng.integers(1, 4))
    N = N or int(rng.integers(1, 5))
    M = M or int(rng.integers(1, 4))
    L = L or int(rng.integers(1, 6))
    k_wave = 2 * np.pi / WAVELENGTH
    theta = rng.uniform(0, np.pi, (2, L))
    phi = rng.uniform(0, np.pi, (2, L))
    dirs = k_wave * np.stack([np.sin(theta) * np.cos(phi), np.cos(theta)], axis=-1)
    gains = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2)
    link = Link(gains, dirs[0], dirs[1])
    t = rng.uniform(0, span * WAVELENGTH, (N, 2))
    r = rng.uniform(0, span * WAVELENGTH, (M, 2))
    Q = random_covariances(rng, K, N)
    return dict(link=link, t=t, r=r, Q=Q, k=int(rng.integers(K)), noise=1.0)


def _rel(err, ref, floor=1e-8):
    return float(np.linalg.norm(err) / max(np.linalg.norm(ref), floor))


def _rate(inst, t=None, r=None, Q=None):
    t = inst["t"] if t is None else t
    r = inst["r"] if r is None else r
    Q = inst["Q"] if Q is None else Q
    return achievable_rate(inst["link"].matrix(t, r), Q, inst["k"], inst["noise"])


def _fd_positions(f, x, h):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def hermitian_basis(n):
    """Orthonormal basis of the real space of ``n x n`` Hermitian matrices."""
    out = []
    for a in range(n):
        E = np.zeros((n, n), complex)
        E[a, a] = 1.0
        out.append(E)
        for b in range(a + 1, n):
            E = np.zeros((n, n), complex)
            E[a, b] = E[b, a] = 1 / np.sqrt(2)
            out.append(E)
            E = np.zeros((n, n), complex)
            E[a, b], E[b, a] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            out.append(E)
    return out


# ---------------------------------------------------------------------------
# suites


GRADIENT_FLOOR = 1e-3  # gradients smaller than this are compared on an absolute scale


def check_gradients(n_instances=50, seed=0, tol=1e-4, h_pos=1e-6, h_q=1e-6) -> CheckResult:
    """All analytic gradients against central finite differences.

    Errors are relative to the finite-difference gradient, with the norm
    floored at ``GRADIENT_FLOOR``: with a single path the rate does not depend
    on the positions and the difference quotient is pure round-off.
    """
    rng = np.random.default_rng(seed)
    worst = {"grad_q": 0.0, "grad_t": 0.0, "grad_r_full": 0.0, "grad_r_single": 0.0}
    for _ in range(n_instances):
        inst = random_instance(rng)
        link, t, r, Q, k, noise = (inst[x] for x in ("link", "t", "r", "Q", "k", "noise"))
        K, N = Q.shape[0], Q.shape[1]
        for i in range(K):
            G = grad_q(link.matrix(t, r), Q, k, noise, i)
            an, fd = [], []
            for E in hermitian_basis(N):
                Qp, Qm = Q.copy(), Q.copy()
                Qp[i] += h_q * E
                Qm[i] -= h_q * E
                fd.append((_rate(inst, Q=Qp) - _rate(inst, Q=Qm)) / (2 * h_q))
                an.append(np.real(np.trace(np.conj(G).T @ E)))
            worst["grad_q"] = max(worst["grad_q"], _rel(np.subtract(an, fd), fd, GRADIENT_FLOOR))
        fd_t = _fd_positions(lambda x: _rate(inst, t=x), t, h_pos)
        worst["grad_t"] = max(worst["grad_t"],
                              _rel(grad_t(link, t, r, Q, k, noise) - fd_t, fd_t, GRADIENT_FLOOR))
        fd_r = _fd_positions(lambda x: _rate(inst, r=x), r, h_pos)
        full = grad_r_full(link, t, r, Q, k, noise)
        worst["grad_r_full"] = max(worst["grad_r_full"], _rel(full - fd_r, fd_r, GRADIENT_FLOOR))
        cache = build_inverse_cache(link, t, r, Q, k, noise)
        single = np.stack([grad_r_single(cache, r, m) for m in range(r.shape[0])])
        worst["grad_r_single"] = max(worst["grad_r_single"], _rel(single - fd_r, fd_r, GRADIENT_FLOOR))
    w = max(worst.values())
    return CheckResult("gradients", w <= tol, w, tol, n_instances, detail=worst)


def check_rate_identity(n_instances=100, seed=1, tol=1e-9) -> CheckResult:
    """Direct and determinant-swapped rate forms agree."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        inst = random_instance(rng)
        H = inst["link"].matrix(inst["t"], inst["r"])
        a = achievable_rate(H, inst["Q"], inst["k"], inst["noise"])
        b = rate_reformulated(H, inst["Q"], inst["k"], inst["noise"])
        worst = max(worst, abs(a - b))
    return CheckResult("rate_identity", worst <= tol, worst, tol, n_instances)


def _inverse_error(cache):
    A_plus, A_minus = cache.assemble()
    return max(_rel(cache.inv_plus - np.linalg.inv(A_plus), np.linalg.inv(A_plus)),
               _rel(cache.inv_minus - np.linalg.inv(A_minus), np.linalg.inv(A_minus)))


def check_inverse_updates(n_chains=10, n_steps=90, seed=2, step_tol=1e-8,
                          chain_tol=1e-6) -> CheckResult:
    """Rank-two inverse updates against direct inversion.

    The per-step error applies one update to freshly inverted matrices; the
    chain error follows ``n_steps`` consecutive updates without refreshing.
    """
    rng = np.random.default_rng(seed)
    worst_step = worst_chain = 0.0
    fallbacks = 0
    for _ in range(n_chains):
        inst = random_instance(rng, M=3)
        args = (inst["link"], inst["t"])
        rest = (inst["Q"], inst["k"], inst["noise"])
        cache = build_inverse_cache(*args, inst["r"], *rest)
        for s in range(n_steps):
            m = s % cache.positions.shape[0]
            new = cache.positions[m] + rng.normal(0, 0.2 * WAVELENGTH, 2)
            fresh = build_inverse_cache(*args, cache.positions, *rest)
            worst_step = max(worst_step, _inverse_error(inv_update(fresh, m, new)))
            cache = inv_update(cache, m, new)
        worst_chain = max(worst_chain, _inverse_error(cache))
        fallbacks += cache.fallbacks
    ok = worst_step <= step_tol and worst_chain <= chain_tol
    return CheckResult("inverse_updates", ok, worst_chain, chain_tol, n_chains * n_steps,
                       detail=dict(step=worst_step, chain=worst_chain, fallbacks=fallbacks))


def _grid_best(objective: ReceiveObjective, region: RegionSpec, n=400):
    lo, hi = region.bounds(1)
    xs = np.linspace(lo[0, 0], hi[0, 0], n)
    ys = np.linspace(lo[0, 1], hi[0, 1], n)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 1, 2)
    best = np.empty(objective.size)
    for p in range(objective.size):
        best[p] = objective.take([p]).rate(grid[None])[0].max()
    return best


def short_term_grid_config(**overrides) -> SystemConfig:
    """Single receive antenna in a small (0.1 wavelength) region."""
    base = dict(n_rx=1, rx_region_wl=0.1)
    return preset("desk", **{**base, **overrides})


def check_short_term_grid(n_instances=20, seed=3, tol=1e-3, resolution=400) -> CheckResult:
    """Gradient ascent and gradient projection against an exhaustive grid, one antenna."""
    worst = {"ga": 0.0, "gp": 0.0}
    for i in range(n_instances):
        rng = np.random.default_rng([seed, i])
        cfg = short_term_grid_config(n_paths=int(rng.integers(2, 6)))
        stat = draw_statistical_state(cfg, rng)
        link = draw_links(stat, rng, 1, cfg)[0]
        t, Q = initial_transmit(cfg), initial_covariance(cfg)
        objective = ReceiveObjective.from_link(link, t, Q, np.arange(cfg.n_users), cfg.noise_w)
        for kind, mode in (("ga", "gmm"), ("gp", "pmm")):
            region = receive_region(cfg, mode)
            lo, hi = region.bounds(1)
            r0 = np.broadcast_to((lo + hi) / 2, (cfg.n_users, 1, 2))
            if kind == "ga":
                res = ga_optimize(objective, r0, region, cfg.min_distance_m, cfg.backtrack)
            else:
                res = gp_optimize(objective, r0, region, cfg.backtrack)
            gap = np.abs(_grid_best(objective, region, resolution) - res.rate)
            worst[kind] = max(worst[kind], float(gap.max()))
    w = max(worst.values())
    return CheckResult("short_term_grid", w <= tol, w, tol, 2 * n_instances, detail=worst)


def check_ga_monotone(n_instances=100, seed=4, tol=1e-12) -> CheckResult:
    """Gradient-ascent rate traces never decrease and end feasible."""
    cfg = preset("desk")
    rng = np.random.default_rng(seed)
    stat_rng = np.random.default_rng([seed, 1])
    links_all = []
    for _ in range(n_instances // cfg.n_users + 1):
        stat = draw_statistical_state(cfg, stat_rng)
        links_all.append(draw_links(stat, rng, 1, cfg)[0])
    gains = np.concatenate([l.gains for l in links_all])[:n_instances]
    tx = np.concatenate([np.broadcast_to(l.tx_dir, l.gains.shape + (2,)) for l in links_all])
    rx = np.concatenate([np.broadcast_to(l.rx_dir, l.gains.shape + (2,)) for l in links_all])
    link = Link(gains, tx[:n_instances], rx[:n_instances])
    users = np.arange(n_instances) % cfg.n_users
    Q = initial_covariance(cfg)
    objective = ReceiveObjective.from_link(link, initial_transmit(cfg), Q, users, cfg.noise_w)
    region = receive_region(cfg, "gmm")
    res = ga_optimize(objective, initial_receive(cfg, "gmm"), region, cfg.min_distance_m,
                      cfg.backtrack)
    drop = float(max(0.0, -np.diff(res.trace, axis=1).min()))
    dist_ok = bool(np.all(pairwise_min_distance(res.positions) >= cfg.min_distance_m))
    inside = region.contains(res.positions)
    ok = drop <= tol and dist_ok and inside
    return CheckResult("ga_monotone", ok, drop, tol, n_instances,
                       detail=dict(distance_ok=dist_ok, inside=inside))


def iterate_violations(iterates, config: SystemConfig) -> dict:
    """Worst constraint violations over long-term iterates ``(t, Q, r)``."""
    D, P = config.min_distance_m, config.power_w
    out = dict(distance=0.0, power=0.0, psd=0.0)
    for t, Q, _ in iterates:
        out["distance"] = max(out["distance"], (D - pairwise_min_distance(t)) / D)
        out["power"] = max(out["power"], float(np.real(np.trace(Q, axis1=-2, axis2=-1)).sum()) - P)
        out["psd"] = max(out["psd"], -float(np.linalg.eigvalsh(Q).min()))
    return out


def check_long_term_feasibility(n_realizations=2, seed=5, n_iter=30) -> CheckResult:
    """Every long-term iterate of both two-timescale designs is feasible.

    Distances are compared relative to ``D`` with a 1e-12 allowance for
    round-off; power and PSD violations within 1e-9.
    """
    cfg = preset("desk", n_iter=n_iter)
    worst = dict(distance=0.0, power=0.0, psd=0.0)
    count = 0
    for j in range(n_realizations):
        rng = np.random.default_rng([seed, j])
        stat = draw_statistical_state(cfg, rng)
        for scheme in ("proposed-gmm", "proposed-pmm"):
            sol = run_scheme(scheme, stat, cfg, rng=np.random.default_rng([seed, j, 1]),
                             keep_iterates=True)
            v = iterate_violations(sol.iterates, cfg)
            worst = {k: max(worst[k], v[k]) for k in worst}
            count += len(sol.iterates)
    ok = worst["distance"] <= 1e-12 and worst["power"] <= 1e-9 and worst["psd"] <= 1e-9
    return CheckResult("long_term_feasibility", ok, max(worst.values()), 1e-9, count,
                       detail=worst)


def _random_batch(rng, K, N, M=None):
    rate = rng.uniform(0, 3, K)
    gt = rng.normal(0, 5, (K, N, 2))
    A = rng.normal(size=(K, K, N, N)) + 1j * rng.normal(size=(K, K, N, N))
    gq = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    gr = None if M is None else rng.normal(0, 5, (K, M, 2))
    return BatchGradients(rate, gt, gq, gr)


def check_surrogate_recursion(n_iter=50, n_points=20, seed=6, tol=1e-10) -> CheckResult:
    """Compact recursion equals the explicitly weighted sum of sample surrogates."""
    rng = np.random.default_rng(seed)
    K, N, M = 2, 3, 2
    tau_t, tau_q, tau_r = -1.0, -0.5, -2.0
    state = SurrogateState.zero(K, N, tau_t, tau_q, n_rx=M, tau_r=tau_r)
    history = []
    points = [(rng.normal(size=(N, 2)), random_covariances(rng, K, N, 1.0),
               rng.normal(size=(K, M, 2))) for _ in range(n_points)]
    worst = 0.0
    for ell in range(1, n_iter + 1):
        rho = float(step_sizes(ell)[0])
        at, AQ, ar = rng.normal(size=(N, 2)), random_covariances(rng, K, N, 1.0), \
            rng.normal(size=(K, M, 2))
        g = _random_batch(rng, K, N, M)
        state = surrogate_update(state, rho, at, AQ, g, r_anchor=ar)
        history.append((rho, at, AQ, ar, g))
        weights = np.array([h[0] for h in history])
        for j in range(len(history)):
            weights[j] *= np.prod([1 - h[0] for h in history[j + 1:]])
        for t, Q, r in points:
            unfolded = np.zeros(K)
            for w, (_, a_t, A, a_r, gg) in zip(weights, history):
                sample = (gg.rate + np.einsum("knc,nc->k", gg.grad_t, t - a_t)
                          + tau_t * np.sum((t - a_t) ** 2)
                          + np.real(np.einsum("kiab,iab->k", np.conj(gg.grad_q), Q - A))
                          + tau_q * np.sum(np.abs(Q - A) ** 2)
                          + np.einsum("kmc,kmc->k", gg.grad_r, r - a_r)
                          + tau_r * np.sum((r - a_r) ** 2, axis=(-2, -1)))
                unfolded = unfolded + w * sample
            compact = state.evaluate(t, Q, r)
            worst = max(worst, float(np.max(np.abs(compact - unfolded))
                                     / max(1.0, np.max(np.abs(unfolded)))))
    return CheckResult("surrogate_recursion", worst <= tol, worst, tol, n_iter * n_points)


def check_distance_minorant(n_probes=1000, seed=7) -> CheckResult:
    """The distance surrogate never exceeds the squared distance and is exact at its anchor."""
    rng = np.random.default_rng(seed)
    scale = WAVELENGTH
    a = rng.uniform(0, 2 * scale, (n_probes, 2, 2))
    x = a + rng.normal(0, scale, (n_probes, 2, 2)) * rng.uniform(0, 2, (n_probes, 1, 1))
    taus = -np.logspace(-2, 1, 10)
    tau = np.repeat(taus, -(-n_probes // taus.size))[:n_probes]
    excess = exact = 0.0
    for tv in taus:
        sel = tau == tv
        ai, aj, xi, xj = a[sel, 0], a[sel, 1], x[sel, 0], x[sel, 1]
        h = distance_surrogate(ai, aj, xi, xj, tv)
        excess = max(excess, float(np.max(h - np.sum((xi - xj) ** 2, -1))))
        at_anchor = distance_surrogate(ai, aj, ai, aj, tv) - np.sum((ai - aj) ** 2, -1)
        exact = max(exact, float(np.max(np.abs(at_anchor))))
    tol = 1e-15
    ok = excess <= tol and exact <= 1e-15
    return CheckResult("distance_minorant", ok, max(excess, exact), tol, n_probes)


def solver_problems(n_problems=12, seed=8):
    """Surrogate problems as they arise early in the long-term loop (desk sizes)."""
    cfg = preset("desk")
    out = []
    for j in range(n_problems):
        rng = np.random.default_rng([seed, j])
        stat = draw_statistical_state(cfg, rng)
        K, N, M = cfg.n_users, cfg.n_tx, cfg.n_rx
        t, Q = initial_transmit(cfg), initial_covariance(cfg)
        r = np.repeat(initial_receive(cfg)[None], K, axis=0)
        long_receive = j % 3 == 2
        state = SurrogateState.zero(K, N, cfg.tau_t, cfg.tau_q_value,
                                    n_rx=M if long_receive else None, tau_r=cfg.tau_r)
        for ell in range(1, 1 + j % 4 + 1):
            links = draw_links(stat, rng, cfg.batch_size, cfg)
            g = mini_batch_gradients(links, t, Q, np.broadcast_to(r, (cfg.batch_size, K, M, 2)),
                                     cfg.noise_w, with_receive=long_receive)
            state = surrogate_update(state, float(step_sizes(ell)[0]), t, Q, g,
                                     r_anchor=r if long_receive else None)
        rate_min = cfg.rate_min_bps * (0.5 + j % 2)
        out.append(SurrogateProblem(
            state, t, Q, transmit_region(cfg), cfg.min_distance_m, cfg.tau_h, cfg.power_w, rate_min,
            cfg.wavelength_m, r_anchor=r if long_receive else None,
            rx_region=receive_region(cfg, "gmm") if long_receive else None))
    return out


def check_solver_kkt(n_problems=12, seed=8) -> CheckResult:
    """Converged surrogate solves meet the KKT tolerances and rerun bit-identically."""
    worst_stat = worst_primal = 0.0
    converged = 0
    deterministic = True
    for prob in solver_problems(n_problems, seed):
        rep = solve_surrogate(prob)
        again = solve_surrogate(prob)
        for a, b in ((rep.t, again.t), (rep.Q, again.Q), (rep.r, again.r)):
            if a is not None and a.tobytes() != b.tobytes():
                deterministic = False
        if rep.status != "converged":
            continue
        converged += 1
        stat, primal, _ = kkt_residuals(prob, rep.mode, rep.t, rep.Q, rep.r, rep.alpha,
                                        rep.multipliers)
        worst_stat = max(worst_stat, stat)
        worst_primal = max(worst_primal, primal)
    ok = (converged > 0 and worst_stat <= STATIONARITY_TOL and worst_primal <= PRIMAL_TOL
          and deterministic)
    return CheckResult("solver_kkt", ok, worst_stat, STATIONARITY_TOL, converged,
                       detail=dict(primal=worst_primal, deterministic=deterministic,
                                   problems=n_problems))


def grid_problem(rng, power=0.1, wavelength=WAVELENGTH):
    """One-antenna, one-user surrogate problem with a known separable structure."""
    region = RegionSpec("transmit-GMM", [[0.0, 1.5 * wavelength, 0.0, 0.75 * wavelength]])
    tau_t = -rng.uniform(200, 2000)
    tau_q = -1.0 / power**2
    hi = region.rects[0, [1, 3]]
    vertex = rng.uniform(-0.3 * hi, 1.3 * hi)
    lin_t = (-2 * tau_t * vertex)[None, None, :]
    q_vertex = rng.uniform(-0.5, 1.5) * power
    lin_q = np.full((1, 1, 1, 1), -2 * tau_q * q_vertex, complex)
    state = SurrogateState(np.array([rng.uniform(0, 3)]), lin_t, lin_q, 1.0, tau_t, tau_q)
    t_anchor = (hi / 2)[None]
    Q_anchor = np.full((1, 1, 1), power / 2, complex)
    return state, region, t_anchor, Q_anchor


def grid_maximum(state, region, power, n=601):
    """Exhaustive grid over the antenna box and ``q in [0, P]``."""
    xs = np.linspace(region.rects[0, 0], region.rects[0, 1], n)
    ys = np.linspace(region.rects[0, 2], region.rects[0, 3], n)
    qs = np.linspace(0.0, power, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    lt = state.lin_t[0, 0]
    lq = np.real(state.lin_q[0, 0, 0, 0])
    w = state.weight
    f_t = state.const[0] + lt[0] * X + lt[1] * Y + w * state.tau_t * (X**2 + Y**2)
    best = -np.inf
    for q in qs:  # one slice of the grid at a time
        best = max(best, float(np.max(f_t + lq * q + w * state.tau_q * q**2)))
    return best


def check_solver_grid(n_instances=10, seed=9, tol=1e-3, power=0.1) -> CheckResult:
    """Objective and feasibility solves against an exhaustive grid on tiny problems."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        state, region, ta, Qa = grid_problem(rng, power)
        best = grid_maximum(state, region, power)
        rate_min = min(state.evaluate(ta, Qa)[0], best) - 0.5
        prob = SurrogateProblem(state, ta, Qa, region, 0.5 * WAVELENGTH, -1.0, power, rate_min,
                                WAVELENGTH)
        obj = solve_surrogate(prob)
        feas = solve_feasibility(prob)
        worst = max(worst, abs(obj.value - best), abs(feas.alpha - (best - rate_min)))
    return CheckResult("solver_grid", worst <= tol, worst, tol, n_instances)


SUITES = {
    "gradients": check_gradients,
    "rate_identity": check_rate_identity,
    "inverse_updates": check_inverse_updates,
    "short_term_grid": check_short_term_grid,
    "ga_monotone": check_ga_monotone,
    "long_term_feasibility": check_long_term_feasibility,
    "surrogate_recursion": check_surrogate_recursion,
    "distance_minorant": check_distance_minorant,
    "solver_kkt": check_solver_kkt,
    "solver_grid": check_solver_grid,
}


def run_checks(names=None) -> list[CheckResult]:
    """Run the named suites (all by default) and time each."""
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown check suites {unknown}; choose from {sorted(SUITES)}")
    out = []
    for name in names:
        start = time.perf_counter()
        res = SUITES[name]()
        res.seconds = time.perf_counter() - start
        out.append(res)
    return out
