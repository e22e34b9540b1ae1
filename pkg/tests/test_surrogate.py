import numpy as np
import pytest

from movant.channel import Link
from movant.rate import achievable_rate, grad_q_all, grad_t
from movant.surrogate import (
    BatchGradients,
    SurrogateState,
    blend_variables,
    distance_surrogate,
    mini_batch_gradients,
    step_sizes,
    surrogate_update,
)

WAVELENGTH = 0.06
KWAVE = 2 * np.pi / WAVELENGTH


def batch(rng, B=4, K=2, N=3, M=2, L=4):
    theta = rng.uniform(0, np.pi, (2, K, L))
    phi = rng.uniform(0, np.pi, (2, K, L))
    dirs = KWAVE * np.stack([np.sin(theta) * np.cos(phi), np.cos(theta)], axis=-1)
    gains = (rng.standard_normal((B, K, L)) + 1j * rng.standard_normal((B, K, L))) / np.sqrt(2)
    link = Link(gains, np.broadcast_to(dirs[0], (B, K, L, 2)), np.broadcast_to(dirs[1], (B, K, L, 2)))
    t = rng.uniform(0, 2 * WAVELENGTH, (N, 2))
    r = rng.uniform(0, WAVELENGTH, (B, K, M, 2))
    A = rng.standard_normal((K, N, N)) + 1j * rng.standard_normal((K, N, N))
    Q = A @ np.conj(np.swapaxes(A, -1, -2))
    Q = 4.0 * Q / np.trace(Q, axis1=1, axis2=2).real.sum()
    return link, t, Q, r


def random_grads(rng, K=2, N=3):
    G = rng.standard_normal((K, K, N, N)) + 1j * rng.standard_normal((K, K, N, N))
    return BatchGradients(rng.uniform(0, 5, K), rng.standard_normal((K, N, 2)),
                          0.5 * (G + np.conj(np.swapaxes(G, -1, -2))))


def random_point(rng, K=2, N=3):
    A = rng.standard_normal((K, N, N)) + 1j * rng.standard_normal((K, N, N))
    return rng.standard_normal((N, 2)), A @ np.conj(np.swapaxes(A, -1, -2))


# --- step sizes -----------------------------------------------------------------


def test_step_sizes_values_and_monotonicity():
    ell = np.arange(1, 200)
    rho, gamma = step_sizes(ell)
    assert rho[0] == pytest.approx(2 ** -0.9) and gamma[0] == pytest.approx(0.5)
    assert np.all((rho > 0) & (rho <= 1) & (gamma > 0) & (gamma <= 1))
    assert np.all(np.diff(rho) < 0)
    assert np.all(np.diff(gamma / rho) < 0)
    with pytest.raises(ValueError):
        step_sizes(0)


# --- mini-batch gradients -------------------------------------------------------


def test_single_sample_batch_equals_single_gradients(rng):
    link, t, Q, r = batch(rng, B=1)
    g = mini_batch_gradients(link, t, Q, r, 1.0)
    for k in range(2):
        lk = Link(link.gains[0, k], link.tx_dir[0, k], link.rx_dir[0, k])
        H = lk.matrix(t, r[0, k])
        assert g.rate[k] == pytest.approx(achievable_rate(H, Q, k, 1.0), abs=1e-12)
        assert np.allclose(g.grad_t[k], grad_t(lk, t, r[0, k], Q, k, 1.0), atol=1e-12)
        assert np.allclose(g.grad_q[k], grad_q_all(H, Q, k, 1.0), atol=1e-12)


def test_duplicated_sample_matches_single(rng):
    link, t, Q, r = batch(rng, B=1)
    two = Link(np.concatenate([link.gains] * 2), np.concatenate([link.tx_dir] * 2),
               np.concatenate([link.rx_dir] * 2))
    a = mini_batch_gradients(link, t, Q, r, 1.0)
    b = mini_batch_gradients(two, t, Q, np.concatenate([r] * 2), 1.0)
    for f in ("rate", "grad_t", "grad_q"):
        assert np.allclose(getattr(a, f), getattr(b, f), atol=1e-14)


def test_batch_is_mean_of_samples(rng):
    link, t, Q, r = batch(rng, B=4)
    g = mini_batch_gradients(link, t, Q, r, 1.0, with_receive=True)
    singles = [mini_batch_gradients(link[b:b + 1], t, Q, r[b:b + 1], 1.0, with_receive=True)
               for b in range(4)]
    for f in ("rate", "grad_t", "grad_q", "grad_r"):
        mean = np.mean([getattr(s, f) for s in singles], axis=0)
        assert np.abs(getattr(g, f) - mean).max() <= 1e-12


def test_empty_batch_rejected(rng):
    link, t, Q, r = batch(rng, B=1)
    with pytest.raises(ValueError):
        mini_batch_gradients(link, t, Q, r[:0], 1.0)


# --- surrogate state ------------------------------------------------------------


def test_zero_state_is_identically_zero(rng):
    s = SurrogateState.zero(2, 3, -1.0, -0.01)
    for _ in range(5):
        t, Q = random_point(rng)
        assert np.all(s.evaluate(t, Q) == 0)


def test_curvatures_must_be_negative():
    with pytest.raises(ValueError):
        SurrogateState.zero(2, 3, 1.0, -0.01)
    with pytest.raises(ValueError):
        SurrogateState.zero(2, 3, -1.0, 0.0)


def test_first_update_at_anchor_gives_batch_rate(rng):
    s = SurrogateState.zero(2, 3, -1.0, -0.01)
    t, Q = random_point(rng)
    g = random_grads(rng)
    full = surrogate_update(s, 1.0, t, Q, g)
    assert np.allclose(full.evaluate(t, Q), g.rate, atol=1e-12)
    rho = step_sizes(1)[0]
    mixed = surrogate_update(s, rho, t, Q, g)
    assert np.allclose(mixed.evaluate(t, Q), rho * g.rate, atol=1e-12)


def test_update_mixes_previous_value_at_anchor(rng):
    s = SurrogateState.zero(2, 3, -1.0, -0.01)
    for ell in range(1, 6):
        t, Q = random_point(rng)
        g = random_grads(rng)
        rho = step_sizes(ell)[0]
        new = surrogate_update(s, rho, t, Q, g)
        expect = (1 - rho) * s.evaluate(t, Q) + rho * g.rate
        assert np.allclose(new.evaluate(t, Q), expect, atol=1e-10)
        s = new


def sample_surrogate(g, a_t, A, tau_t, tau_q, t, Q):
    val = g.rate + np.einsum("knc,nc->k", g.grad_t, t - a_t) + tau_t * np.sum((t - a_t) ** 2)
    val = val + np.real(np.einsum("kiab,iab->k", np.conj(g.grad_q), Q - A))
    return val + tau_q * np.sum(np.abs(Q - A) ** 2)


def test_compact_form_matches_unfolded_recursion(rng):
    tau_t, tau_q = -1.0, -0.05
    s = SurrogateState.zero(2, 3, tau_t, tau_q)
    history = []
    for ell in range(1, 51):
        a_t, A = random_point(rng)
        g = random_grads(rng)
        rho = step_sizes(ell)[0]
        history.append((rho, g, a_t, A))
        s = surrogate_update(s, rho, a_t, A, g)
        if ell % 10:
            continue
        for _ in range(3):
            t, Q = random_point(rng)
            # explicit weighted sum: sample ell' keeps rho_ell' prod_{j > ell'} (1 - rho_j)
            direct = 0.0
            for i, (rh, gi, ati, Ai) in enumerate(history):
                w = rh * np.prod([1 - h[0] for h in history[i + 1:]])
                direct = direct + w * sample_surrogate(gi, ati, Ai, tau_t, tau_q, t, Q)
            assert np.allclose(s.evaluate(t, Q), direct, rtol=1e-10, atol=1e-10)


def test_quadratic_curvature_identity(rng):
    tau_t, tau_q = -1.0, -0.05
    s = SurrogateState.zero(2, 3, tau_t, tau_q)
    for ell in range(1, 8):
        s = surrogate_update(s, step_sizes(ell)[0], *random_point(rng), random_grads(rng))
    for _ in range(10):
        (xt, xq), (at, aq) = random_point(rng), random_point(rng)
        lhs = s.evaluate(xt, xq) + s.evaluate(2 * at - xt, 2 * aq - xq) - 2 * s.evaluate(at, aq)
        rhs = 2 * s.weight * (tau_t * np.sum((xt - at) ** 2) + tau_q * np.sum(np.abs(xq - aq) ** 2))
        assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_linear_coefficients_stay_hermitian(rng):
    s = SurrogateState.zero(2, 3, -1.0, -0.05)
    for ell in range(1, 30):
        s = surrogate_update(s, step_sizes(ell)[0], *random_point(rng), random_grads(rng))
    assert np.abs(s.lin_q - np.conj(np.swapaxes(s.lin_q, -1, -2))).max() <= 1e-12


def test_receive_block_requires_anchor(rng):
    s = SurrogateState.zero(2, 3, -1.0, -0.05, n_rx=2)
    with pytest.raises(ValueError):
        surrogate_update(s, 0.5, *random_point(rng), random_grads(rng))
    with pytest.raises(ValueError):
        s.evaluate(*random_point(rng))


def test_surrogate_tangent_to_rate_at_anchor(rng):
    # with rho = 1 the surrogate and the batch mean rate share value and gradient at the anchor
    link, t, Q, r = batch(rng, B=3)
    g = mini_batch_gradients(link, t, Q, r, 1.0)
    s = surrogate_update(SurrogateState.zero(2, 3, -1.0, -0.05), 1.0, t, Q, g)
    h = 1e-6
    e = np.zeros_like(t)
    e[1, 0] = h
    mean_rate = lambda tt: mini_batch_gradients(link, tt, Q, r, 1.0).rate  # noqa: E731
    num = (mean_rate(t + e) - mean_rate(t - e)) / (2 * h)
    sur = (s.evaluate(t + e, Q) - s.evaluate(t - e, Q)) / (2 * h)
    assert np.allclose(num, sur, rtol=1e-5, atol=1e-7)


# --- distance minorant ----------------------------------------------------------


def test_distance_surrogate_exact_at_anchor(rng):
    a, b = rng.standard_normal((2, 2))
    assert distance_surrogate(a, b, a, b, -1.0) == pytest.approx(np.sum((a - b) ** 2))


def test_distance_surrogate_hand_value():
    val = distance_surrogate([0, 0], [1, 0], [0, 0], [2, 0], -1.0)
    assert val == pytest.approx(2.0)
    assert val <= 4.0


def test_distance_surrogate_is_minorant(rng):
    for tau in (-0.1, -1.0, -10.0):
        a = rng.standard_normal((1000, 2, 2))
        x = a + rng.standard_normal((1000, 2, 2)) * rng.uniform(0, 3, (1000, 1, 1))
        h = distance_surrogate(a[:, 0], a[:, 1], x[:, 0], x[:, 1], tau)
        assert np.all(h <= np.sum((x[:, 0] - x[:, 1]) ** 2, axis=-1) + 1e-12)


def test_distance_surrogate_rejects_nonnegative_curvature():
    with pytest.raises(ValueError):
        distance_surrogate([0, 0], [1, 0], [0, 0], [1, 0], 0.0)


# --- blending -------------------------------------------------------------------


def test_blend_examples(rng):
    cur, sol = random_point(rng), random_point(rng)
    out = blend_variables(cur, sol, 1.0)
    assert all(np.array_equal(o, s) for o, s in zip(out, sol))
    assert blend_variables((2.0,), (4.0,), 0.5)[0] == pytest.approx(3.0)
    assert blend_variables((None, 1.0), (None, 3.0), 0.5) == (None, 2.0)
    with pytest.raises(ValueError):
        blend_variables((1.0,), (2.0,), 1.5)


def test_blend_preserves_power_and_psd(rng):
    P = 2.0
    for _ in range(20):
        Qs = []
        for _ in range(2):
            _, Q = random_point(rng)
            Qs.append(Q * rng.uniform(0.2, 1.0) * P / np.trace(Q, axis1=1, axis2=2).real.sum())
        gamma = rng.uniform()
        (out,) = blend_variables((Qs[0],), (Qs[1],), gamma)
        assert np.trace(out, axis1=1, axis2=2).real.sum() <= P + 1e-12
        assert np.linalg.eigvalsh(out).min() >= -1e-12


def test_blend_keeps_distance_when_minorant_holds(rng):
    # if the solution satisfies the minorant constraint at the current anchor,
    # every blended point keeps the pairwise distance
    D = 0.5
    hits = 0
    for _ in range(200):
        a = rng.uniform(0, 3, (2, 2))
        if np.sum((a[0] - a[1]) ** 2) < D**2:
            continue
        x = a + rng.normal(0, 0.5, (2, 2))
        if distance_surrogate(a[0], a[1], x[0], x[1], -1.0) < D**2:
            continue
        hits += 1
        for gamma in np.linspace(0, 1, 11):
            p = blend_variables((a,), (x,), gamma)[0]
            assert np.sum((p[0] - p[1]) ** 2) >= D**2 - 1e-12
    assert hits > 10
