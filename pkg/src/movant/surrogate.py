"""Recursive quadratic surrogates for the long-term problem.

Every sample surrogate is a quadratic around the current anchor with a fixed
negative curvature, so any convex mixture of them is again such a quadratic.
The state therefore only stores, per user ``k``,

    f_k(t, Q, r) = c_k + <l_t, t> + w tau_t ||t||^2
                   + sum_i [Re tr(L_{k,i}^H Q_i) + w tau_q ||Q_i||_F^2]
                   + <l_r, r_k> + w tau_r ||r_k||^2

where ``w = 1 - prod(1 - rho)`` is the accumulated weight of the curvature
terms (``w = 0`` for the initial, identically zero surrogate).  The receive
block is only populated when receive positions are long-term variables.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .rate import rate_terms

__all__ = [
    "step_sizes",
    "BatchGradients",
    "SurrogateState",
    "mini_batch_gradients",
    "surrogate_update",
    "distance_surrogate",
    "distance_surrogate_coefficients",
    "blend_variables",
]


def step_sizes(ell, rho_exp=0.9, gamma_exp=1.0):
    """``(rho, gamma) = ((ell+1)^-rho_exp, (ell+1)^-gamma_exp)`` for iteration ``ell >= 1``."""
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 1):
        raise ValueError("iterations are counted from 1")
    return (ell + 1.0) ** (-rho_exp), (ell + 1.0) ** (-gamma_exp)


@dataclass(frozen=True)
class BatchGradients:
    """Mini-batch means of rate values and gradients, all users at once.

    ``rate`` ``(K,)``; ``grad_t`` ``(K, N, 2)``; ``grad_q`` ``(K, K, N, N)``
    indexed ``[user, covariance]``; ``grad_r`` ``(K, M, 2)`` or None.
    """

    rate: np.ndarray
    grad_t: np.ndarray
    grad_q: np.ndarray
    grad_r: np.ndarray | None = None


def mini_batch_gradients(links, t, Q, receive, noise, with_receive=False) -> BatchGradients:
    """Average rates and gradients over a mini-batch.

    ``links`` is a :class:`~movant.channel.Link` with gains ``(B, K, L)`` and
    ``receive`` the matching receive APVs ``(B, K, M, 2)`` (from the
    short-term solver, or the fixed long-term ones).  Receive-position
    sensitivities of the short-term solution are not included.
    """
    receive = np.asarray(receive, dtype=float)
    if receive.ndim != 4 or receive.shape[0] == 0:
        raise ValueError("need a nonempty batch of receive APVs shaped (B, K, M, 2)")
    terms = rate_terms(links, t, receive, Q, noise, want_r=with_receive)
    grad_q = terms["grad_q"].mean(axis=0)
    grad_q = 0.5 * (grad_q + np.conj(np.swapaxes(grad_q, -1, -2)))
    return BatchGradients(
        terms["rate"].mean(axis=0),
        terms["grad_t"].mean(axis=0),
        grad_q,
        terms["grad_r"].mean(axis=0) if with_receive else None,
    )


@dataclass(frozen=True)
class SurrogateState:
    """Compact form of the recursive surrogates of all ``K`` users."""

    const: np.ndarray  # (K,)
    lin_t: np.ndarray  # (K, N, 2)
    lin_q: np.ndarray  # (K, K, N, N) complex, Hermitian blocks
    weight: float
    tau_t: float
    tau_q: float
    lin_r: np.ndarray | None = None  # (K, M, 2)
    tau_r: float = -1.0
    ell: int = 0

    @classmethod
    def zero(cls, n_users, n_tx, tau_t, tau_q, n_rx=None, tau_r=-1.0) -> "SurrogateState":
        if not (tau_t < 0 and tau_q < 0 and tau_r < 0):
            raise ValueError("surrogate curvatures must be negative")
        K, N = n_users, n_tx
        lin_r = None if n_rx is None else np.zeros((K, n_rx, 2))
        return cls(np.zeros(K), np.zeros((K, N, 2)), np.zeros((K, K, N, N), complex), 0.0,
                   float(tau_t), float(tau_q), lin_r, float(tau_r), 0)

    @property
    def n_users(self) -> int:
        return self.const.shape[0]

    def evaluate(self, t, Q, r=None):
        """Surrogate values of all users, ``(K,)``."""
        t = np.asarray(t, dtype=float)
        Q = np.asarray(Q)
        val = self.const + np.einsum("knc,nc->k", self.lin_t, t)
        val = val + self.weight * self.tau_t * np.sum(t**2)
        val = val + np.real(np.einsum("kiab,iab->k", np.conj(self.lin_q), Q))
        val = val + self.weight * self.tau_q * np.sum(np.abs(Q) ** 2)
        if self.lin_r is not None:
            if r is None:
                raise ValueError("this surrogate also depends on the receive APVs")
            r = np.asarray(r, dtype=float)
            val = val + np.einsum("kmc,kmc->k", self.lin_r, r)
            val = val + self.weight * self.tau_r * np.sum(r**2, axis=(-2, -1))
        return val


def surrogate_update(state: SurrogateState, rho, t_anchor, Q_anchor, grads: BatchGradients,
                     r_anchor=None) -> SurrogateState:
    """Mix the sample surrogate built at the anchor into ``state`` with weight ``rho``.

    The sample surrogate of user ``k`` is
    ``R_k + <D_t, t - a_t> + tau_t ||t - a_t||^2
    + sum_i Re tr(D_{Q_i}^H (Q_i - A_i)) + tau_q ||Q_i - A_i||^2``
    (plus the receive block when present), expanded about the origin.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    a_t = np.asarray(t_anchor, dtype=float)
    A = np.asarray(Q_anchor)
    tt, tq = state.tau_t, state.tau_q
    const = grads.rate - np.einsum("knc,nc->k", grads.grad_t, a_t) + tt * np.sum(a_t**2)
    const = const - np.real(np.einsum("kiab,iab->k", np.conj(grads.grad_q), A))
    const = const + tq * np.sum(np.abs(A) ** 2)
    lin_t = grads.grad_t - 2.0 * tt * a_t
    lin_q = grads.grad_q - 2.0 * tq * A[None]
    lin_q = 0.5 * (lin_q + np.conj(np.swapaxes(lin_q, -1, -2)))
    lin_r = state.lin_r
    if lin_r is not None:
        if grads.grad_r is None or r_anchor is None:
            raise ValueError("receive gradients and anchor are required for this surrogate")
        a_r = np.asarray(r_anchor, dtype=float)
        const = const - np.einsum("kmc,kmc->k", grads.grad_r, a_r)
        const = const + state.tau_r * np.sum(a_r**2, axis=(-2, -1))
        lin_r = (1.0 - rho) * lin_r + rho * (grads.grad_r - 2.0 * state.tau_r * a_r)
    return replace(
        state,
        const=(1.0 - rho) * state.const + rho * const,
        lin_t=(1.0 - rho) * state.lin_t + rho * lin_t,
        lin_q=(1.0 - rho) * state.lin_q + rho * lin_q,
        lin_r=lin_r,
        weight=(1.0 - rho) * state.weight + rho,
        ell=state.ell + 1,
    )


def distance_surrogate(a_i, a_j, x_i, x_j, tau_h):
    """Concave minorant of ``||x_i - x_j||^2`` anchored at ``(a_i, a_j)``.

    ``tau_h (||x_i - a_i||^2 + ||x_j - a_j||^2) + 2 (a_i - a_j).(x_i - x_j)
    - ||a_i - a_j||^2``; exact at the anchor.
    """
    if not tau_h < 0:
        raise ValueError("tau_h must be negative")
    a_i, a_j, x_i, x_j = (np.asarray(v, dtype=float) for v in (a_i, a_j, x_i, x_j))
    da = a_i - a_j
    return (tau_h * (np.sum((x_i - a_i) ** 2, -1) + np.sum((x_j - a_j) ** 2, -1))
            + 2.0 * np.sum(da * (x_i - x_j), -1) - np.sum(da**2, -1))


def distance_surrogate_coefficients(anchor):
    """Index pairs ``i < j`` and anchor differences ``a_i - a_j`` for an APV ``(n, 2)``."""
    anchor = np.asarray(anchor, dtype=float)
    i, j = np.triu_indices(anchor.shape[0], 1)
    return i, j, anchor[i] - anchor[j]


def blend_variables(current, solution, gamma):
    """``(1 - gamma) * current + gamma * solution`` applied to each entry of a tuple."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    out = []
    for cur, sol in zip(current, solution):
        if cur is None:
            out.append(None)
            continue
        out.append((1.0 - gamma) * np.asarray(cur) + gamma * np.asarray(sol))
    return tuple(out)
