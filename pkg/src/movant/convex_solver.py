"""Convex surrogate problems of the long-term loop.

Two problems share one feasible set (transmit box, concave distance
minorants, PSD covariances with a total power budget):

* objective mode maximizes ``sum_k f_k`` subject to ``f_k >= R_min``;
* feasibility mode maximizes a common slack ``alpha`` subject to
  ``f_k >= R_min + alpha``.

Both are handed to an interior-point conic solver (Clarabel via cvxpy).
Each problem structure is compiled once as a parametrized program and
reused, so a long-term iteration only pays for the numerical solve.
Internally positions are measured in wavelengths and covariances in units of
the power budget, which keeps all coefficients of comparable size.

Returned points are post-processed onto the exact feasible set (PSD/power
projection, box clipping, and a pull towards the anchor if a distance
minorant is violated by solver round-off), and come with KKT residuals.
The conic solution only serves to identify the active constraints and a
starting point for the multipliers: for fixed multipliers the Lagrangian is
maximized in closed form, and Newton's method on the remaining small
complementarity system yields points that satisfy the optimality conditions
to round-off.
"""

from __future__ import annotations

import functools
import logging
import warnings
from dataclasses import dataclass, field, replace

import cvxpy as cp
import numpy as np

from .channel import RegionSpec
from .surrogate import SurrogateState, distance_surrogate

__all__ = [
    "SurrogateProblem",
    "SolverReport",
    "Infeasible",
    "project_psd",
    "project_power",
    "solve_objective",
    "solve_feasibility",
    "solve_surrogate",
    "kkt_residuals",
]

log = logging.getLogger(__name__)

PRIMAL_TOL = 1e-8
STATIONARITY_TOL = 1e-6
FEASIBLE_ALPHA = -1e-8
_DISTANCE_MARGIN = 1e-8  # relative safety margin on the distance minorants
_SOLVER_OPTS = dict(warm_start=False, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=200)
# tried in order when the previous attempt raises or ends without a solution
_FALLBACKS = [
    (cp.CLARABEL, dict(warm_start=False, tol_gap_abs=1e-8, tol_gap_rel=1e-8, tol_feas=1e-8,
                       max_iter=200, presolve_enable=False)),
    (cp.SCS, dict(warm_start=False, eps_abs=1e-9, eps_rel=1e-9, max_iters=20000)),
]


def _herm(A):
    return np.conj(np.swapaxes(A, -1, -2))


def project_psd(A):
    """Nearest PSD matrix in Frobenius norm: clamp negative eigenvalues to zero."""
    A = np.asarray(A)
    A = 0.5 * (A + _herm(A))
    w, V = np.linalg.eigh(A)
    return (V * np.clip(w, 0.0, None)[..., None, :]) @ _herm(V)


def _cap_simplex(w, budget):
    """Project a nonnegative-clamped vector onto ``{x >= 0, sum x <= budget}``."""
    x = np.clip(w, 0.0, None)
    if x.sum() <= budget:
        return x
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - budget
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.clip(w - theta, 0.0, None)


def project_power(Q, budget):
    """Frobenius projection of a covariance set ``(K, N, N)`` onto
    ``{Q_i PSD, sum_i tr Q_i <= budget}`` (a shared eigenvalue shift)."""
    Q = np.asarray(Q)
    Q = 0.5 * (Q + _herm(Q))
    w, V = np.linalg.eigh(Q)
    w_new = _cap_simplex(w.reshape(-1), budget).reshape(w.shape)
    return (V * w_new[..., None, :]) @ _herm(V)


@dataclass(frozen=True)
class SurrogateProblem:
    """One surrogate problem in physical units.

    ``t_anchor``/``r_anchor`` are the current long-term iterates (the
    expansion points of the distance minorants).  With ``optimize_t`` unset
    the transmit APV is held at ``t_anchor``; ``r_anchor`` is only a variable
    when the surrogate carries a receive block (``state.lin_r``).
    """

    state: SurrogateState
    t_anchor: np.ndarray
    Q_anchor: np.ndarray
    tx_region: RegionSpec
    min_distance: float
    tau_h: float
    power: float
    rate_min: float
    length_scale: float
    r_anchor: np.ndarray | None = None
    rx_region: RegionSpec | None = None
    optimize_t: bool = True

    @property
    def optimize_r(self) -> bool:
        return self.state.lin_r is not None

    @property
    def shape(self):
        K = self.state.n_users
        N = self.state.lin_t.shape[1]
        M = 0 if not self.optimize_r else self.state.lin_r.shape[1]
        return K, N, M

    def values(self, t, Q, r=None):
        """Surrogate values ``f_k`` at a physical point."""
        return self.state.evaluate(t, Q, r if self.optimize_r else None)

    def distance_values(self, x, anchor):
        """Minorant values for all pairs of an APV ``(..., n, 2)``."""
        n = x.shape[-2]
        i, j = np.triu_indices(n, 1)
        return distance_surrogate(anchor[..., i, :], anchor[..., j, :], x[..., i, :],
                                  x[..., j, :], self.tau_h)


@dataclass
class SolverReport:
    """Solution of one surrogate problem (physical units) plus diagnostics.

    ``residuals`` = (stationarity, primal infeasibility, complementarity),
    measured in the solver's scaled units.
    """

    t: np.ndarray
    Q: np.ndarray
    r: np.ndarray | None
    alpha: float | None
    value: float
    residuals: tuple[float, float, float]
    iterations: int
    status: str
    mode: str
    multipliers: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass
class Infeasible:
    """Returned by :func:`solve_objective` when the feasibility slack is negative."""

    phase1: SolverReport

    @property
    def alpha(self) -> float:
        return self.phase1.alpha


# ---------------------------------------------------------------------------
# parametrized programs


@functools.lru_cache(maxsize=32)
def _program(K, N, M, mode, optimize_t, c_h):
    """Build the DPP program for one structure; returns (problem, params, vars, cons)."""
    par = {}
    var = {}
    Qv = [cp.Variable((N, N), hermitian=True) for _ in range(K)]
    var["Q"] = Qv
    qvec = cp.hstack([cp.hstack([cp.vec(cp.real(q), order="F"), cp.vec(cp.imag(q), order="F")])
                      for q in Qv])
    par["const"] = cp.Parameter(K)
    par["lin_q"] = cp.Parameter((K, 2 * K * N * N))
    par["c_q"] = cp.Parameter(nonneg=True)
    par["rhs"] = cp.Parameter()
    f = par["const"] + par["lin_q"] @ qvec
    f = f - par["c_q"] * cp.sum_squares(qvec) * np.ones(K)
    cons = {}
    cons["psd"] = [q >> 0 for q in Qv]
    cons["power"] = cp.sum(cp.hstack([cp.real(cp.trace(q)) for q in Qv])) <= 1.0
    par["dist_min"] = cp.Parameter(nonneg=True)

    def positions_block(name, n_pos, groups):
        X = cp.Variable((n_pos, 2))
        var[name] = X
        par[f"lo_{name}"] = cp.Parameter((n_pos, 2))
        par[f"hi_{name}"] = cp.Parameter((n_pos, 2))
        cons[f"box_{name}"] = [X >= par[f"lo_{name}"], X <= par[f"hi_{name}"]]
        # distance minorants for pairs within each group
        pairs = []
        for g in groups:
            for a in range(len(g)):
                for b in range(a + 1, len(g)):
                    pairs.append((g[a], g[b]))
        if pairs:
            Ei = np.zeros((len(pairs), n_pos))
            Ej = np.zeros((len(pairs), n_pos))
            for p, (a, b) in enumerate(pairs):
                Ei[p, a] = 1.0
                Ej[p, b] = 1.0
            anc = cp.Parameter((n_pos, 2))
            diff = cp.Parameter((len(pairs), 2))
            dsq = cp.Parameter(len(pairs))
            par[f"anchor_{name}"], par[f"diff_{name}"], par[f"dsq_{name}"] = anc, diff, dsq
            sq = cp.sum(cp.square(X - anc), axis=1)
            h = (-c_h * (Ei @ sq + Ej @ sq)
                 + 2 * cp.sum(cp.multiply(diff, Ei @ X - Ej @ X), axis=1) - dsq)
            cons[f"dist_{name}"] = h >= par["dist_min"]
        return X

    if optimize_t:
        T = positions_block("t", N, [list(range(N))])
        par["lin_t"] = cp.Parameter((K, 2 * N))
        par["c_t"] = cp.Parameter(nonneg=True)
        f = f + par["lin_t"] @ cp.vec(T, order="F") - par["c_t"] * cp.sum_squares(T) * np.ones(K)
    if M:
        R = positions_block("r", K * M, [list(range(k * M, (k + 1) * M)) for k in range(K)])
        par["lin_r"] = cp.Parameter((K, 2 * K * M))
        par["c_r"] = cp.Parameter(nonneg=True)
        U = np.kron(np.eye(K), np.ones((1, M)))
        f = f + par["lin_r"] @ cp.vec(R, order="F")
        f = f - par["c_r"] * (U @ cp.sum(cp.square(R), axis=1))
    if mode == "feasibility":
        alpha = cp.Variable()
        var["alpha"] = alpha
        cons["rate"] = f >= par["rhs"] + alpha
        objective = cp.Maximize(alpha)
    else:
        cons["rate"] = f >= par["rhs"]
        objective = cp.Maximize(cp.sum(f))
    flat = []
    for c in cons.values():
        flat.extend(c if isinstance(c, list) else [c])
    problem = cp.Problem(objective, flat)
    return problem, par, var, cons


class _Scaled:
    """Coefficients of a problem in solver units (lengths / scale, Q / power)."""

    def __init__(self, prob: SurrogateProblem):
        st = prob.state
        s, P = prob.length_scale, prob.power
        K, N, M = prob.shape
        self.s, self.P = s, P
        self.const = st.const.copy()
        self.lin_t = st.lin_t * s  # (K, N, 2)
        self.c_t = -st.weight * st.tau_t * s**2
        self.lin_q = st.lin_q * P  # (K, K, N, N)
        self.c_q = -st.weight * st.tau_q * P**2
        self.t_anchor = np.asarray(prob.t_anchor, float) / s
        if not prob.optimize_t:
            t0 = self.t_anchor
            self.const = (self.const + np.einsum("knc,nc->k", self.lin_t, t0)
                          - self.c_t * np.sum(t0**2))
        if M:
            self.lin_r = st.lin_r * s
            self.c_r = -st.weight * st.tau_r * s**2
            self.r_anchor = np.asarray(prob.r_anchor, float) / s
        self.dist_min = (prob.min_distance / s) ** 2 * (1.0 + _DISTANCE_MARGIN)
        self.c_h = -prob.tau_h

    def values(self, t, Q, r):
        """Scaled surrogate values and their gradients w.r.t. scaled variables."""
        val = self.const + np.real(np.einsum("kiab,iab->k", np.conj(self.lin_q), Q))
        val = val - self.c_q * np.sum(np.abs(Q) ** 2)
        g_q = self.lin_q - 2.0 * self.c_q * Q[None]
        g_t = g_r = None
        if t is not None:
            val = val + np.einsum("knc,nc->k", self.lin_t, t) - self.c_t * np.sum(t**2)
            g_t = self.lin_t - 2.0 * self.c_t * t[None]
        if r is not None:
            val = val + np.einsum("kmc,kmc->k", self.lin_r, r)
            val = val - self.c_r * np.sum(r**2, axis=(-2, -1))
            K, M = r.shape[:2]
            g_r = np.zeros((K,) + r.shape)
            for k in range(K):
                g_r[k, k] = self.lin_r[k] - 2.0 * self.c_r * r[k]
        return val, g_t, g_q, g_r


def _pair_terms(x, anchor, c_h):
    """Minorant values and their gradients for all pairs of one APV ``(n, 2)``."""
    n = x.shape[0]
    i, j = np.triu_indices(n, 1)
    d = anchor[i] - anchor[j]
    h = (-c_h * (np.sum((x[i] - anchor[i]) ** 2, -1) + np.sum((x[j] - anchor[j]) ** 2, -1))
         + 2.0 * np.sum(d * (x[i] - x[j]), -1) - np.sum(d**2, -1))
    grad = np.zeros((len(i), n, 2))
    rows = np.arange(len(i))
    grad[rows, i] = -2.0 * c_h * (x[i] - anchor[i]) + 2.0 * d
    grad[rows, j] = -2.0 * c_h * (x[j] - anchor[j]) - 2.0 * d
    return h, grad


def _set_params(prob: SurrogateProblem, sc: _Scaled, par, rhs):
    K, N, M = prob.shape
    par["const"].value = sc.const
    lq = np.stack([np.concatenate(
        [np.concatenate([np.real(sc.lin_q[k, i]).reshape(-1, order="F"),
                         np.imag(sc.lin_q[k, i]).reshape(-1, order="F")]) for i in range(K)])
        for k in range(K)])
    par["lin_q"].value = lq
    par["c_q"].value = sc.c_q
    par["rhs"].value = rhs
    par["dist_min"].value = sc.dist_min

    def set_block(name, lo, hi, anchor, groups_of):
        par[f"lo_{name}"].value = lo
        par[f"hi_{name}"].value = hi
        if f"anchor_{name}" in par:
            par[f"anchor_{name}"].value = anchor
            diffs = []
            for g in groups_of:
                a = anchor[g]
                i, j = np.triu_indices(len(g), 1)
                diffs.append(a[i] - a[j])
            diffs = np.concatenate(diffs)
            par[f"diff_{name}"].value = diffs
            par[f"dsq_{name}"].value = np.sum(diffs**2, axis=1)

    if prob.optimize_t:
        lo, hi = prob.tx_region.bounds(N)
        set_block("t", lo / sc.s, hi / sc.s, sc.t_anchor, [np.arange(N)])
        par["lin_t"].value = np.stack([sc.lin_t[k].reshape(-1, order="F") for k in range(K)])
        par["c_t"].value = sc.c_t
    if M:
        lo, hi = prob.rx_region.bounds(M)
        lo, hi = np.tile(lo, (K, 1)) / sc.s, np.tile(hi, (K, 1)) / sc.s
        set_block("r", lo, hi, sc.r_anchor.reshape(K * M, 2),
                  [np.arange(k * M, (k + 1) * M) for k in range(K)])
        lr = np.zeros((K, K, M, 2))
        for k in range(K):
            lr[k, k] = sc.lin_r[k]
        par["lin_r"].value = np.stack([lr[k].reshape(K * M, 2).reshape(-1, order="F")
                                       for k in range(K)])
        par["c_r"].value = sc.c_r


def _restore_distances(x, anchor, c_h, dist_min, groups):
    """Pull ``x`` towards ``anchor`` until every minorant of every group holds."""
    x = x.copy()
    for g in groups:
        h, _ = _pair_terms(x[g], anchor[g], c_h)
        if h.size == 0 or np.all(h >= dist_min):
            continue
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            trial = anchor[g] + mid * (x[g] - anchor[g])
            if np.all(_pair_terms(trial, anchor[g], c_h)[0] >= dist_min):
                lo = mid
            else:
                hi = mid
        x[g] = anchor[g] + lo * (x[g] - anchor[g])
    return x


def _stationarity(prob, sc, mode, t, Q, r, alpha, lam, mu_t, mu_r):
    """``|| x - Proj_X(x + grad L) ||`` over the scaled variables."""
    K, N, M = prob.shape
    _, g_t, g_q, g_r = sc.values(t, Q, r)
    w = (1.0 + lam) if mode == "objective" else lam
    sq = 0.0
    Gq = np.einsum("k,kiab->iab", w, g_q)
    step_q = project_power(Q + Gq, 1.0) - Q
    sq += np.sum(np.abs(step_q) ** 2)
    if t is not None:
        G = np.einsum("k,knc->nc", w, g_t)
        if mu_t is not None and mu_t.size:
            _, dh = _pair_terms(t, sc.t_anchor, sc.c_h)
            G = G + np.einsum("p,pnc->nc", mu_t, dh)
        lo, hi = prob.tx_region.bounds(N)
        sq += np.sum((np.clip(t + G, lo / sc.s, hi / sc.s) - t) ** 2)
    if r is not None:
        G = np.einsum("k,k...->...", w, g_r)
        if mu_r is not None and mu_r.size:
            off = 0
            for k in range(K):
                _, dh = _pair_terms(r[k], sc.r_anchor[k], sc.c_h)
                n = dh.shape[0]
                G[k] += np.einsum("p,pnc->nc", mu_r[off:off + n], dh)
                off += n
        lo, hi = prob.rx_region.bounds(M)
        sq += np.sum((np.clip(r + G, lo / sc.s, hi / sc.s) - r) ** 2)
    if mode == "feasibility":
        sq += (1.0 - lam.sum()) ** 2
    return float(np.sqrt(sq))


def kkt_residuals(problem: SurrogateProblem, mode, t, Q, r=None, alpha=None, multipliers=None):
    """(stationarity, primal infeasibility, complementarity) at a physical point.

    ``multipliers`` maps ``"rate"`` to the ``K`` rate-constraint multipliers
    and ``"dist_t"``/``"dist_r"`` to the distance-minorant multipliers
    (missing entries count as zero).  Region, PSD and power constraints are
    handled through the projection in the stationarity measure
    ``||x - Proj_X(x + grad L)||``.  All quantities are in scaled units
    (positions / length scale, covariances / power budget).
    """
    stat, primal, comp = _kkt_parts(problem, mode, t, Q, r, alpha, multipliers)
    return stat, primal, float(np.max(np.abs(comp), initial=0.0))


def _kkt_parts(problem, mode, t, Q, r, alpha, multipliers):
    if mode not in ("objective", "feasibility"):
        raise ValueError(f"unknown mode {mode!r}")
    multipliers = multipliers or {}
    sc = _Scaled(problem)
    K, N, M = problem.shape
    ts = np.asarray(t, float) / sc.s if problem.optimize_t else None
    Qs = np.asarray(Q) / sc.P
    rs = np.asarray(r, float) / sc.s if M else None
    lam = np.asarray(multipliers.get("rate", np.zeros(K)), float)
    mu_t = multipliers.get("dist_t")
    mu_r = multipliers.get("dist_r")
    if np.any(lam < 0) or (mu_t is not None and np.any(mu_t < 0)):
        raise ValueError("inequality multipliers must be nonnegative")
    val, *_ = sc.values(ts, Qs, rs)
    rhs = problem.rate_min + (alpha if mode == "feasibility" else 0.0)
    c_rate = val - rhs
    viol = [np.max(-c_rate, initial=0.0)]
    comp = [lam * c_rate]
    dist_min = (problem.min_distance / sc.s) ** 2
    if ts is not None and N > 1:
        h, _ = _pair_terms(ts, sc.t_anchor, sc.c_h)
        viol.append(np.max(dist_min - h, initial=0.0))
        if mu_t is not None:
            comp.append(np.asarray(mu_t) * (h - sc.dist_min))
        lo, hi = problem.tx_region.bounds(N)
        viol.append(np.max(np.maximum(lo / sc.s - ts, ts - hi / sc.s), initial=0.0))
    if rs is not None:
        hs = np.concatenate([_pair_terms(rs[k], sc.r_anchor[k], sc.c_h)[0] for k in range(K)])
        viol.append(np.max(dist_min - hs, initial=0.0))
        if mu_r is not None:
            comp.append(np.asarray(mu_r) * (hs - sc.dist_min))
        lo, hi = problem.rx_region.bounds(M)
        viol.append(np.max(np.maximum(lo / sc.s - rs, rs - hi / sc.s), initial=0.0))
    viol.append(max(0.0, float(np.real(np.trace(Qs, axis1=-2, axis2=-1)).sum()) - 1.0))
    viol.append(max(0.0, -float(np.linalg.eigvalsh(0.5 * (Qs + _herm(Qs))).min())))
    stat = _stationarity(problem, sc, mode, ts, Qs, rs, alpha, lam,
                         None if mu_t is None else np.asarray(mu_t),
                         None if mu_r is None else np.asarray(mu_r))
    return stat, float(max(viol)), np.concatenate(comp)


class _Degenerate(ArithmeticError):
    """The Lagrangian has no unique maximizer for the given multipliers."""


class _Dual:
    """Lagrangian maximizer of a scaled surrogate problem for fixed multipliers.

    For fixed rate multipliers ``lam`` and distance multipliers ``mu`` the
    Lagrangian separates: positions enter through per-antenna isotropic
    concave quadratics over a box (maximized by clipping) and the covariances
    through ``Re<A, Q> - c ||Q||^2`` over the PSD/power set (maximized by one
    projection).  The multiplier vector is ``y = (lam, mu_t, mu_r)``.
    """

    def __init__(self, prob, sc, mode, rhs):
        K, N, M = prob.shape
        self.K, self.N, self.M = K, N, M
        self.sc, self.mode, self.rhs = sc, mode, rhs
        self.optimize_t = prob.optimize_t
        self.n_t = 0
        if prob.optimize_t:
            lo, hi = prob.tx_region.bounds(N)
            self.box_t = (lo / sc.s, hi / sc.s)
            self.pairs_t = np.triu_indices(N, 1)
            self.n_t = len(self.pairs_t[0])
        self.n_r = 0
        if M:
            lo, hi = prob.rx_region.bounds(M)
            self.box_r = (lo / sc.s, hi / sc.s)
            self.pairs_r = np.triu_indices(M, 1)
            self.n_r = K * len(self.pairs_r[0])
        self.size = K + self.n_t + self.n_r

    def split(self, y):
        K, n_t = self.K, self.n_t
        return y[:K], y[K:K + n_t], y[K + n_t:]

    def weights(self, lam):
        return 1.0 + lam if self.mode == "objective" else lam

    def _positions(self, b, kappa, anchor, pairs, mu, box):
        c_h = self.sc.c_h
        i, j = pairs
        d = anchor[i] - anchor[j]
        kappa = np.array(kappa, dtype=float)
        b = b.copy()
        np.add.at(kappa, i, c_h * mu)
        np.add.at(kappa, j, c_h * mu)
        np.add.at(b, i, mu[:, None] * (2.0 * c_h * anchor[i] + 2.0 * d))
        np.add.at(b, j, mu[:, None] * (2.0 * c_h * anchor[j] - 2.0 * d))
        if np.any(kappa <= 0.0):
            raise _Degenerate("flat direction in the Lagrangian")
        return np.clip(b / (2.0 * kappa[:, None]), *box)

    def argmax(self, y):
        sc = self.sc
        lam, mu_t, mu_r = self.split(y)
        w = self.weights(lam)
        W = float(w.sum())
        if not W > 0.0:
            raise _Degenerate("all rate multipliers vanish")
        Qs = project_power(np.einsum("k,kiab->iab", w, sc.lin_q) / (2.0 * sc.c_q * W), 1.0)
        ts = rs = None
        if self.optimize_t:
            b = np.einsum("k,knc->nc", w, sc.lin_t)
            ts = self._positions(b, np.full(self.N, sc.c_t * W), sc.t_anchor, self.pairs_t,
                                 mu_t, self.box_t)
        if self.M:
            per = len(self.pairs_r[0])
            rs = np.stack([
                self._positions(w[k] * sc.lin_r[k], np.full(self.M, sc.c_r * w[k]),
                                sc.r_anchor[k], self.pairs_r, mu_r[k * per:(k + 1) * per],
                                self.box_r)
                for k in range(self.K)])
        return ts, Qs, rs

    def constraints(self, x):
        """Rate slacks ``f_k - rhs`` and minorant slacks ``h_p - D^2``, stacked."""
        ts, Qs, rs = x
        sc = self.sc
        parts = [sc.values(ts, Qs, rs)[0] - self.rhs]
        if self.optimize_t:
            parts.append(_pair_terms(ts, sc.t_anchor, sc.c_h)[0] - sc.dist_min)
        if self.M:
            parts.extend(_pair_terms(rs[k], sc.r_anchor[k], sc.c_h)[0] - sc.dist_min
                         for k in range(self.K))
        return np.concatenate(parts)


def _dual_refine(prob, sc, mode, rhs, mult, tol=1e-12, max_iter=40):
    """Newton's method on the complementarity system of the dual problem.

    Starts from the conic solver's multipliers and returns ``(ts, Qs, rs,
    alpha, multipliers)`` for the refined multipliers, or None on failure.
    Positions and covariances are exact Lagrangian maximizers, so the
    stationarity conditions hold by construction; Newton drives the active
    constraints to equality and the active-set loop fixes signs.
    """
    dual = _Dual(prob, sc, mode, rhs)
    K = dual.K
    y0 = np.concatenate([np.asarray(mult.get("rate", np.zeros(K)), float),
                         np.asarray(mult.get("dist_t", np.zeros(dual.n_t)), float)[:dual.n_t],
                         np.asarray(mult.get("dist_r", np.zeros(dual.n_r)), float)[:dual.n_r]])
    y0 = np.clip(y0, 0.0, None)
    if y0.size != dual.size:
        return None
    feas = mode == "feasibility"
    if feas:
        total = y0[:K].sum()
        y0[:K] = y0[:K] / total if total > 0 else 1.0 / K
    try:
        c0 = dual.constraints(dual.argmax(y0))
    except _Degenerate:
        return None
    alpha = float(np.min(c0[:K])) if feas else 0.0

    def slack(c, a):
        out = c.copy()
        if feas:
            out[:K] -= a
        return out

    active = y0 > slack(c0, alpha)
    if feas and not active[:K].any():
        active[int(np.argmin(c0[:K]))] = True
    y = np.where(active, y0, 0.0)

    def residual(z, act):
        yy = np.zeros(dual.size)
        yy[act] = z[:act.sum()]
        a = z[-1] if feas else 0.0
        c = dual.constraints(dual.argmax(yy))
        eqs = slack(c, a)[act]
        if feas:
            eqs = np.append(eqs, yy[:K].sum() - 1.0)
        return eqs, yy, a, c

    for _ in range(2 * dual.size + 2):
        z = y[active]
        if feas:
            z = np.append(z, alpha)
        try:
            for _ in range(max_iter):
                F, yy, a, c = residual(z, active)
                if np.max(np.abs(F), initial=0.0) <= tol:
                    break
                Jac = np.empty((F.size, z.size))
                for col in range(z.size):
                    step = 1e-7 * max(1.0, abs(z[col]))
                    zp = z.copy()
                    zp[col] += step
                    Jac[:, col] = (residual(zp, active)[0] - F) / step
                z = z - np.linalg.lstsq(Jac, F, rcond=None)[0]
            F, yy, a, c = residual(z, active)
        except _Degenerate:
            return None
        if np.max(np.abs(F), initial=0.0) > 1e3 * tol:
            return None
        y, alpha = yy, a
        negative = np.flatnonzero(active & (y < 0.0))
        violated = np.flatnonzero(~active & (slack(c, alpha) < -tol))
        if negative.size:
            active[negative[np.argmin(y[negative])]] = False
            y = np.clip(y, 0.0, None)
        elif violated.size:
            active[violated[np.argmin(slack(c, alpha)[violated])]] = True
        else:
            lam, mu_t, mu_r = dual.split(y)
            ts, Qs, rs = dual.argmax(y)
            out = {"rate": lam}
            if dual.n_t:
                out["dist_t"] = mu_t
            if dual.n_r:
                out["dist_r"] = mu_r
            return ts, Qs, rs, (alpha if feas else None), out
    return None


def _anchor_report(prob, mode, status):
    K, N, M = prob.shape
    val = prob.values(prob.t_anchor, prob.Q_anchor, prob.r_anchor)
    alpha = float(np.min(val) - prob.rate_min) if mode == "feasibility" else None
    value = alpha if mode == "feasibility" else float(np.sum(val))
    return SolverReport(np.array(prob.t_anchor, float), np.array(prob.Q_anchor),
                        None if not M else np.array(prob.r_anchor, float), alpha, value,
                        (np.inf, np.inf, np.inf), 0, status, mode)


def _run_solvers(problem) -> bool:
    """Solve with Clarabel, falling back to looser settings and then SCS."""
    attempts = [(cp.CLARABEL, _SOLVER_OPTS)] + _FALLBACKS
    for solver, opts in attempts:
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are refined afterwards; 1x1 Hermitian variables
                # trigger a cvxpy-internal warning
                warnings.filterwarnings("ignore", category=UserWarning, module="cvxpy")
                problem.solve(solver=solver, **opts)
        except (KeyboardInterrupt, SystemExit):
            raise
        except BaseException as exc:  # the Rust backend raises a BaseException on panics
            log.info("%s failed (%s: %s)", solver, type(exc).__name__, exc)
            continue
        if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return True
        log.info("%s ended with status %s", solver, problem.status)
    return False


def _solve(prob: SurrogateProblem, mode: str, rhs_shift: float = 0.0) -> SolverReport:
    K, N, M = prob.shape
    optimize_t = prob.optimize_t
    sc = _Scaled(prob)
    problem, par, var, cons = _program(K, N, M, mode, optimize_t, float(sc.c_h))
    _set_params(prob, sc, par, prob.rate_min + rhs_shift)
    if not _run_solvers(problem):
        log.warning("surrogate solve ended with status %s; keeping the anchor", problem.status)
        return _anchor_report(prob, mode, "failed")
    iters = int(problem.solver_stats.num_iters or 0)
    rhs = prob.rate_min + rhs_shift
    sub = replace(prob, rate_min=rhs)
    Qs = np.stack([q.value for q in var["Q"]])
    ts = var["t"].value if optimize_t else None
    rs = var["r"].value.reshape(K, M, 2) if M else None
    multipliers = {"rate": np.clip(np.atleast_1d(cons["rate"].dual_value), 0.0, None)}
    for kind in ("dist_t", "dist_r"):
        if kind in cons:
            multipliers[kind] = np.clip(np.atleast_1d(cons[kind].dual_value), 0.0, None)

    dist_true = (prob.min_distance / sc.s) ** 2

    def finish(ts, Qs, rs, multipliers):
        Q = project_power(Qs * sc.P, prob.power)
        if optimize_t:
            lo, hi = prob.tx_region.bounds(N)
            ts = np.clip(ts, lo / sc.s, hi / sc.s)
            ts = _restore_distances(ts, sc.t_anchor, sc.c_h, dist_true, [np.arange(N)])
            t = ts * sc.s
        else:
            t = np.array(prob.t_anchor, float)
        r = None
        if M:
            lo, hi = prob.rx_region.bounds(M)
            rs = np.clip(rs, lo / sc.s, hi / sc.s).reshape(K * M, 2)
            rs = _restore_distances(rs, sc.r_anchor.reshape(K * M, 2), sc.c_h, dist_true,
                                    [np.arange(k * M, (k + 1) * M) for k in range(K)])
            r = rs.reshape(K, M, 2) * sc.s
        vals = prob.values(t, Q, r)
        alpha = float(np.min(vals) - rhs) if mode == "feasibility" else None
        res = kkt_residuals(sub, mode, t, Q, r, alpha, multipliers)
        return t, Q, r, alpha, vals, res

    best = finish(ts, Qs, rs, multipliers)
    refined = _dual_refine(sub, sc, mode, rhs, multipliers)
    if refined is not None:
        candidate = finish(*refined[:3], refined[4])
        if candidate[5][0] < best[5][0] and candidate[5][1] <= max(best[5][1], PRIMAL_TOL):
            best = candidate
            multipliers = refined[4]
    t, Q, r, alpha, vals, res = best
    if mode == "feasibility":
        # report the slack against the unshifted threshold
        alpha = float(np.min(vals) - prob.rate_min)
        value = alpha
    else:
        value = float(np.sum(vals))
    ok = res[0] <= STATIONARITY_TOL and res[1] <= PRIMAL_TOL
    status = "converged" if ok else "inaccurate"
    return SolverReport(t, Q, r, alpha, value, res, iters, status, mode, multipliers)


def solve_feasibility(problem: SurrogateProblem) -> SolverReport:
    """Maximize the common slack ``alpha``; always returns a point."""
    return _solve(problem, "feasibility")


def solve_objective(problem: SurrogateProblem):
    """Solve the objective problem, or return :class:`Infeasible`.

    Feasibility is certified either by the anchor itself (it satisfies every
    constraint) or by a feasibility solve with ``alpha >= -1e-8``; a slightly
    negative ``alpha`` relaxes the rate constraints by that amount.
    """
    anchor_vals = problem.values(problem.t_anchor, problem.Q_anchor, problem.r_anchor)
    slack = float(np.min(anchor_vals) - problem.rate_min)
    if slack < 0.0:
        phase1 = solve_feasibility(problem)
        if phase1.alpha is None or phase1.alpha < FEASIBLE_ALPHA:
            return Infeasible(phase1)
        slack = phase1.alpha
    return _solve(problem, "objective", rhs_shift=min(slack, 0.0))


def solve_surrogate(problem: SurrogateProblem) -> SolverReport:
    """Objective problem when feasible, otherwise the feasibility problem's solution."""
    out = solve_objective(problem)
    if isinstance(out, Infeasible):
        return out.phase1
    return out
