"""Achievable rate of a user and its analytic gradients.

Everything broadcasts over leading batch axes: a channel ``H`` is
``(..., M, N)`` and a covariance set ``Q`` is ``(..., K, N, N)``.  Gradients
with respect to antenna positions are returned as ``(..., n_antennas, 2)``
arrays; ``.reshape(-1)`` gives the ``[(x_1, y_1), ..., (x_n, y_n)]`` layout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import Link

__all__ = [
    "rate_terms",
    "NumericalError",
    "StaleCacheError",
    "achievable_rate",
    "rate_from_covariances",
    "rate_reformulated",
    "user_rates",
    "channel_sensitivity",
    "grad_q",
    "grad_q_all",
    "grad_t",
    "grad_r_full",
    "psd_sqrt",
    "InverseCache",
    "build_inverse_cache",
    "grad_r_single",
    "inv_update",
]

LN2 = np.log(2.0)


class NumericalError(ArithmeticError):
    """A rate or gradient evaluation produced a non-finite value."""


class StaleCacheError(RuntimeError):
    """An inverse cache was used with positions it was not built for."""


def _herm(A):
    return np.conj(np.swapaxes(A, -1, -2))


def _eye_like(n, noise):
    return noise * np.eye(n)


def _logdet(C):
    # C is Hermitian positive definite
    L = np.linalg.cholesky(C)
    return 2.0 * np.sum(np.log(np.real(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite {what}")
    return value


def _split_covariances(Q, k):
    Q = np.asarray(Q)
    s_all = Q.sum(axis=-3)
    s_int = s_all - Q[..., k, :, :]
    return s_all, s_int


def rate_from_covariances(H, s_all, s_int, noise):
    """``log2 det(noise I + H S_all H^H) - log2 det(noise I + H S_int H^H)``."""
    H = np.asarray(H)
    I = _eye_like(H.shape[-2], noise)
    Hh = _herm(H)
    c_all = I + H @ s_all @ Hh
    c_int = I + H @ s_int @ Hh
    return _check_finite((_logdet(c_all) - _logdet(c_int)) / LN2, "achievable rate")


def achievable_rate(H, Q, k, noise):
    """Rate of user ``k`` with channel ``H`` under covariance set ``Q``.

    ``log2 det(I + H Q_k H^H (noise I + H sum_{i != k} Q_i H^H)^-1)``, computed
    as a difference of two log-determinants.
    """
    if noise <= 0:
        raise ValueError("noise power must be positive")
    s_all, s_int = _split_covariances(Q, k)
    return rate_from_covariances(H, s_all, s_int, noise)


def user_rates(H, Q, noise):
    """Rates of all users; ``H`` is ``(..., K, M, N)``, returns ``(..., K)``."""
    Q = np.asarray(Q)
    s_all = Q.sum(axis=-3)[..., None, :, :]
    return rate_from_covariances(H, s_all, s_all - Q, noise)


def psd_sqrt(S, tol=1e-10):
    """Hermitian square root with eigenvalues below zero clamped to zero."""
    w, V = np.linalg.eigh(S)
    scale = np.maximum(1.0, np.abs(w).max(axis=-1, keepdims=True))
    if np.any(w < -tol * scale):
        raise NumericalError("matrix is not positive semidefinite within tolerance")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ _herm(V)


def rate_reformulated(H, Q, k, noise):
    """Same rate via ``det(noise I_N + W^H W)`` with ``W = H S^(1/2)``.

    The N x N form is the one whose rank-one structure the inverse cache
    exploits.
    """
    s_all, s_int = _split_covariances(Q, k)
    H = np.asarray(H)
    N = H.shape[-1]
    out = 0.0
    for S, sign in ((s_all, 1.0), (s_int, -1.0)):
        W = H @ psd_sqrt(S)
        A = noise * np.eye(N) + _herm(W) @ W
        out = out + sign * _logdet(A)
    return _check_finite(out / LN2, "achievable rate")


def channel_sensitivity(H, s_all, s_int, noise):
    """``A_1 - A_2`` such that ``dR = Re tr((A_1 - A_2) dH)``; ``(..., N, M)``."""
    I = _eye_like(H.shape[-2], noise)
    Hh = _herm(H)
    out = 0.0
    for S, sign in ((s_all, 1.0), (s_int, -1.0)):
        HS = H @ S
        C = I + HS @ Hh
        # S H^H C^-1 == (C^-1 H S)^H since C and S are Hermitian
        out = out + sign * _herm(np.linalg.solve(C, HS))
    return (2.0 / LN2) * out


def _herm_part(A):
    return 0.5 * (A + _herm(A))


def grad_q_all(H, Q, k, noise):
    """Gradients of user ``k``'s rate w.r.t. every ``Q_i``; ``(..., K, N, N)``."""
    Q = np.asarray(Q)
    s_all, s_int = _split_covariances(Q, k)
    H = np.asarray(H)
    I = _eye_like(H.shape[-2], noise)
    Hh = _herm(H)
    t_all = Hh @ np.linalg.solve(I + H @ s_all @ Hh, H) / LN2
    t_int = Hh @ np.linalg.solve(I + H @ s_int @ Hh, H) / LN2
    K = Q.shape[-3]
    out = np.repeat((t_all - t_int)[..., None, :, :], K, axis=-3)
    out[..., k, :, :] = t_all
    return _check_finite(_herm_part(out), "covariance gradient")


def grad_q(H, Q, k, noise, i):
    """Gradient of user ``k``'s rate w.r.t. ``Q_i`` (Hermitian ``N x N``).

    Directional derivative along Hermitian ``E`` is ``Re tr(grad @ E)``.
    """
    return grad_q_all(H, Q, k, noise)[..., i, :, :]


def rate_terms(link: Link, t, r, Q, noise, want_r=False):
    """Rates and gradients of every user in one pass.

    ``link`` holds all users on axis ``-2`` of ``gains`` (``(..., K, L)``) and
    ``r`` is ``(..., K, M, 2)``.  Returns a dict with ``rate`` ``(..., K)``,
    ``grad_t`` ``(..., K, N, 2)``, ``grad_q`` ``(..., K, K, N, N)`` (user,
    covariance index) and, with ``want_r``, ``grad_r`` ``(..., K, M, 2)``.
    """
    Q = np.asarray(Q)
    Fh = _herm(link.rx_field(r))  # (..., K, M, L)
    SG = link.weighted_tx(t)  # (..., K, L, N)
    H = Fh @ SG
    s_all = Q.sum(axis=-3)
    s_int = s_all - Q  # (K, N, N): interference seen by each user
    I = _eye_like(H.shape[-2], noise)
    Hh = _herm(H)
    out = {}
    A = 0.0
    proj = []
    for S, sign in ((s_all[..., None, :, :], 1.0), (s_int, -1.0)):
        HS = H @ S
        C = I + HS @ Hh
        CinvH = np.linalg.solve(C, H)
        proj.append(Hh @ CinvH / LN2)
        A = A + sign * _herm(np.linalg.solve(C, HS))
        out.setdefault("rate", 0.0)
        out["rate"] = out["rate"] + sign * _logdet(C)
    out["rate"] = _check_finite(out["rate"] / LN2, "achievable rate")
    A = (2.0 / LN2) * A  # (..., K, N, M)
    gt = []
    for c in range(2):
        B = Fh @ ((1j * link.tx_dir[..., :, c, None]) * SG)
        gt.append(np.real(np.einsum("...nm,...mn->...n", A, B)))
    out["grad_t"] = _check_finite(np.stack(gt, axis=-1), "transmit gradient")
    t_all, t_int = proj
    K = Q.shape[-3]
    gq = np.repeat((t_all - t_int)[..., None, :, :], K, axis=-3)
    idx = np.arange(K)
    gq[..., idx, idx, :, :] = t_all
    out["grad_q"] = _check_finite(_herm_part(gq), "covariance gradient")
    if want_r:
        gr = []
        for c in range(2):
            B = (Fh * (-1j * link.rx_dir[..., None, :, c])) @ SG
            gr.append(np.real(np.einsum("...mn,...nm->...m", B, A)))
        out["grad_r"] = _check_finite(np.stack(gr, axis=-1), "receive gradient")
    return out


def _position_parts(link: Link, t, r):
    F = link.rx_field(r)
    Fh = _herm(F)  # (..., M, L)
    G = link.tx_field(t)  # (..., L, N)
    sigma = link.gains[..., :, None]
    return Fh, sigma, G


def grad_t(link: Link, t, r, Q, k, noise):
    """Gradient of the rate w.r.t. transmit positions, ``(..., N, 2)``."""
    Fh, sigma, G = _position_parts(link, t, r)
    SG = sigma * G
    H = Fh @ SG
    s_all, s_int = _split_covariances(Q, k)
    A = channel_sensitivity(H, s_all, s_int, noise)  # (..., N, M)
    out = []
    for c in range(2):
        # dG/dx_n multiplies path l by j * k_dir[l, c]
        B = Fh @ ((1j * link.tx_dir[..., :, c, None]) * SG)  # (..., M, N)
        out.append(np.real(np.einsum("...nm,...mn->...n", A, B)))
    return _check_finite(np.stack(out, axis=-1), "transmit gradient")


def grad_r_full(link: Link, t, r, Q, k, noise):
    """Gradient of the rate w.r.t. all receive positions, ``(..., M, 2)``."""
    Fh, sigma, G = _position_parts(link, t, r)
    SG = sigma * G
    H = Fh @ SG
    s_all, s_int = _split_covariances(Q, k)
    A = channel_sensitivity(H, s_all, s_int, noise)
    out = []
    for c in range(2):
        # conj(f) picks up -j * k_dir[l, c]
        B = (Fh * (-1j * link.rx_dir[..., None, :, c])) @ SG  # (..., M, N)
        out.append(np.real(np.einsum("...mn,...nm->...m", B, A)))
    return _check_finite(np.stack(out, axis=-1), "receive gradient")


@dataclass(frozen=True)
class InverseCache:
    """Inverses of ``A_+ = noise I + W_+^H W_+`` and ``A_-`` for one receive APV.

    ``proj_plus``/``proj_minus`` map a field-response vector to its column
    ``w``; ``positions`` records the APV the inverses belong to.
    ``fallbacks`` counts updates that fell back to direct inversion.
    """

    proj_plus: np.ndarray  # (..., N, L)
    proj_minus: np.ndarray
    rx_dir: np.ndarray  # (..., L, 2)
    positions: np.ndarray  # (..., M, 2)
    inv_plus: np.ndarray  # (..., N, N)
    inv_minus: np.ndarray
    noise: float
    fallbacks: int = 0

    def columns(self, pos):
        """``w_+`` and ``w_-`` for positions ``(..., n, 2)`` -> ``(..., N, n)`` each."""
        f = np.exp(1j * (self.rx_dir @ np.swapaxes(pos, -1, -2)))  # (..., L, n)
        return self.proj_plus @ f, self.proj_minus @ f

    def assemble(self):
        """Directly assembled ``(A_+, A_-)`` for the cached positions."""
        wp, wm = self.columns(self.positions)
        N = wp.shape[-2]
        I = self.noise * np.eye(N)
        return I + wp @ _herm(wp), I + wm @ _herm(wm)

    def rate(self):
        A_plus, A_minus = self.assemble()
        return (_logdet(A_plus) - _logdet(A_minus)) / LN2


def build_inverse_cache(link: Link, t, r, Q, k, noise) -> InverseCache:
    s_all, s_int = _split_covariances(Q, k)
    SG = link.weighted_tx(t)
    return _cache_from_parts(SG, link.rx_dir, s_all, s_int, r, noise)


def _cache_from_parts(weighted_tx, rx_dir, s_all, s_int, r, noise) -> InverseCache:
    SGh = _herm(weighted_tx)  # (..., N, L)
    proj_plus = psd_sqrt(s_all) @ SGh
    proj_minus = psd_sqrt(s_int) @ SGh
    cache = InverseCache(proj_plus, proj_minus, np.asarray(rx_dir, float),
                         np.array(r, dtype=float), None, None, noise)
    A_plus, A_minus = cache.assemble()
    return replace(cache, inv_plus=np.linalg.inv(A_plus), inv_minus=np.linalg.inv(A_minus))


def grad_r_single(cache: InverseCache, r, m):
    """Gradient w.r.t. receive antenna ``m`` from the cached inverses, ``(..., 2)``.

    ``r`` must equal the positions the cache was built or last updated for.
    """
    if not np.array_equal(np.asarray(r, dtype=float), cache.positions):
        raise StaleCacheError("inverse cache does not match the current receive APV")
    pos = cache.positions[..., m : m + 1, :]
    f = np.exp(1j * (cache.rx_dir @ np.swapaxes(pos, -1, -2)))[..., 0]  # (..., L)
    grad = 0.0
    for proj, inv, sign in ((cache.proj_plus, cache.inv_plus, 1.0),
                            (cache.proj_minus, cache.inv_minus, -1.0)):
        w = np.einsum("...nl,...l->...n", proj, f)
        b = (2.0 / LN2) * np.einsum("...n,...nk,...kl->...l", np.conj(w), inv, proj)
        grad = grad + sign * b
    # df/dx multiplies path l by j * k_dir[l, c]
    df = 1j * cache.rx_dir * f[..., :, None]  # (..., L, 2)
    return _check_finite(np.real(np.einsum("...l,...lc->...c", grad, df)), "receive gradient")


def _lemma_update(inv, Z1, Z2, cond_limit=1e12):
    """``(A + Z1 Z2^H)^-1`` from ``A^-1`` with one 2x2 inversion; None if ill-posed."""
    inner = np.eye(Z1.shape[-1]) + _herm(Z2) @ inv @ Z1
    if not np.all(np.isfinite(inner)) or np.any(np.linalg.cond(inner) > cond_limit):
        return None
    return inv - inv @ Z1 @ np.linalg.solve(inner, _herm(Z2) @ inv)


def inv_update(cache: InverseCache, m, new_pos) -> InverseCache:
    """Move receive antenna ``m`` to ``new_pos`` and refresh both inverses.

    ``A_new = A_old + Z1 Z2^H`` with ``Z1 = [w_new, w_old]`` and
    ``Z2 = [w_new, -w_old]``.  If the inner 2x2 matrix is singular the inverse
    is recomputed directly and ``fallbacks`` is incremented.
    """
    new_pos = np.asarray(new_pos, dtype=float)
    old = cache.positions[..., m : m + 1, :]
    both = np.concatenate([new_pos[..., None, :], old], axis=-2)
    wp, wm = cache.columns(both)  # (..., N, 2) each: [w_new, w_old]
    sign = np.array([1.0, -1.0])
    positions = cache.positions.copy()
    positions[..., m, :] = new_pos
    inv_plus = _lemma_update(cache.inv_plus, wp, wp * sign)
    inv_minus = _lemma_update(cache.inv_minus, wm, wm * sign)
    updated = replace(cache, positions=positions)
    fallbacks = cache.fallbacks
    if inv_plus is None or inv_minus is None:
        A_plus, A_minus = updated.assemble()
        inv_plus = np.linalg.inv(A_plus)
        inv_minus = np.linalg.inv(A_minus)
        fallbacks += 1
    return replace(updated, inv_plus=inv_plus, inv_minus=inv_minus, fallbacks=fallbacks)
