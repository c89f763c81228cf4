import numpy as np
import pytest
from conftest import crandn
from hypothesis import given, settings
from hypothesis import strategies as st

from windfuse.dictionary_learning import normalize_columns
from windfuse.fusion import (
    build_composite,
    default_lambda,
    enhance_acoustic_only,
    enhance_contact_only,
    enhance_fused,
    estimate_rtf_diagonal,
)
from windfuse.sparse_coding import evaluate_cost

F, T = 12, 9


def dicts(rng, nx=5, nan=4, nbn=3):
    return (normalize_columns(crandn(rng, F, nx)), normalize_columns(crandn(rng, F, nan)),
            normalize_columns(crandn(rng, F, nbn)))


def two_term_rec(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta, C):
    nx, nan = D_AX.shape[1], D_AN.shape[1]
    X = D_AX @ C[:nx]
    N_A = D_AN @ C[nx : nx + nan]
    N_B = D_BN @ C[nx + nan :]
    return (eta * np.linalg.norm(Y_A - X - N_A) ** 2
            + (1 - eta) * np.linalg.norm(Y_B - H[:, None] * X - N_B) ** 2)


def test_default_lambda():
    assert default_lambda(257) == pytest.approx(257**-0.5)


def test_composite_weights(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y_A, Y_B = crandn(rng, F, T), crandn(rng, F, T)
    p = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, np.ones(F), 0.4)
    np.testing.assert_allclose(p.y_tilde[:F], np.sqrt(0.4) * Y_A)
    np.testing.assert_allclose(p.y_tilde[F:], np.sqrt(0.6) * Y_B)
    sx, san, sbn = p.blocks
    np.testing.assert_allclose(p.d_tilde[F:, sx], np.sqrt(0.6) * D_AX)
    assert not np.any(p.d_tilde[:F, sbn])
    assert not np.any(p.d_tilde[F:, san])


def test_composite_eta_one_zeroes_bottom(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    p = build_composite(crandn(rng, F, T), crandn(rng, F, T), D_AX, D_AN, D_BN,
                        crandn(rng, F), 1.0)
    assert not np.any(p.y_tilde[F:])
    assert not np.any(p.d_tilde[F:])


def test_composite_validation(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y = crandn(rng, F, T)
    with pytest.raises(ValueError):
        build_composite(Y, Y, D_AX, D_AN, D_BN, np.ones(F), 1.5)
    with pytest.raises(ValueError):
        build_composite(Y, Y[:, :3], D_AX, D_AN, D_BN, np.ones(F), 0.4)
    with pytest.raises(ValueError):
        build_composite(Y, Y, D_AX[:5], D_AN, D_BN, np.ones(F), 0.4)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), eta=st.sampled_from([0.0, 0.4, 1.0]))
def test_two_term_identity(seed, eta):
    r = np.random.default_rng(seed)
    D_AX, D_AN, D_BN = dicts(r)
    Y_A, Y_B, H = crandn(r, F, T), crandn(r, F, T), crandn(r, F)
    C = crandn(r, 12, T)
    p = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta)
    lhs = two_term_rec(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta, C)
    rhs = np.linalg.norm(p.y_tilde - p.d_tilde @ C) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_rtf_exact_model(rng):
    X, H = crandn(rng, F, T), crandn(rng, F)
    h = estimate_rtf_diagonal(H[:, None] * X, np.zeros((F, T)), X)
    np.testing.assert_allclose(h, H, rtol=1e-10)


def test_rtf_is_per_bin_least_squares(rng):
    X, Y, N = crandn(rng, F, T), crandn(rng, F, T), crandn(rng, F, T)
    h = estimate_rtf_diagonal(Y, N, X)
    for f in range(F):
        def cost(v):
            return np.sum(np.abs(Y[f] - N[f] - v * X[f]) ** 2)
        best = cost(h[f])
        for dr in np.linspace(-1e-3, 1e-3, 5):
            for di in np.linspace(-1e-3, 1e-3, 5):
                assert cost(h[f] + dr + 1j * di) >= best - 1e-12


def test_rtf_guard_keeps_previous(rng):
    X = np.zeros((F, T), complex)
    X[3] = crandn(rng, T)
    prev = crandn(rng, F)
    h = estimate_rtf_diagonal(crandn(rng, F, T), np.zeros((F, T)), X, previous=prev)
    keep = np.arange(F) != 3
    np.testing.assert_array_equal(h[keep], prev[keep])
    assert h[3] != prev[3]
    with pytest.raises(ValueError):
        estimate_rtf_diagonal(X, X, np.zeros((F, T)))


def test_rtf_update_lowers_reconstruction(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y_A, Y_B, C = crandn(rng, F, T), crandn(rng, F, T), crandn(rng, 12, T)
    H0 = crandn(rng, F)
    X, N_B = D_AX @ C[:5], D_BN @ C[9:]
    H1 = estimate_rtf_diagonal(Y_B, N_B, X, previous=H0)
    before = np.sum(np.abs(Y_B - H0[:, None] * X - N_B) ** 2, axis=1)
    after = np.sum(np.abs(Y_B - H1[:, None] * X - N_B) ** 2, axis=1)
    assert np.all(after <= before + 1e-12)


def test_fused_zero_input(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Z = np.zeros((F, T), complex)
    rep = enhance_fused(Z, Z, D_AX, D_AN, D_BN, n_inner=20)
    assert not np.any(rep.x_hat)


def test_fused_defaults(rng):
    import inspect

    sig = inspect.signature(enhance_fused)
    assert sig.parameters["eta"].default == 0.4
    assert sig.parameters["n_outer"].default == 5
    assert sig.parameters["n_inner"].default == 1000


def test_fused_noise_free_reconstruction():
    r = np.random.default_rng(11)
    D_AX, D_AN, D_BN = dicts(r, nx=6)
    C = np.zeros((6, T), complex)
    C[r.integers(0, 6, T), np.arange(T)] = 1 + crandn(r, T)
    X = D_AX @ C
    H = 0.5 + crandn(r, F) * 0.1
    rep = enhance_fused(X, H[:, None] * X, D_AX, D_AN, D_BN, lam=1e-8, n_outer=3,
                        n_inner=5000, H0=H)
    assert np.linalg.norm(X - rep.x_hat) ** 2 < 1e-6 * np.linalg.norm(X) ** 2


def test_fused_block_structure_and_cost(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y_A, Y_B, H0 = crandn(rng, F, T), crandn(rng, F, T), 1 + 0.2 * crandn(rng, F)
    lam = 0.3
    rep = enhance_fused(Y_A, Y_B, D_AX, D_AN, D_BN, 0.4, lam, 4, 300, H0)
    p = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, rep.rtf, 0.4)
    _, san, sbn = p.blocks
    assert not np.any(p.d_tilde[:F, sbn]) and not np.any(p.d_tilde[F:, san])
    start = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, H0, 0.4)
    zero_cost = evaluate_cost(start.y_tilde, start.d_tilde, np.zeros_like(rep.code), lam).total
    assert rep.history[-1].total <= zero_cost
    assert rep.history[-1].total == pytest.approx(
        evaluate_cost(p.y_tilde, p.d_tilde, rep.code, lam).total)


def test_fused_scaling_equivariance(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y_A, Y_B = crandn(rng, F, T), crandn(rng, F, T)
    kw = dict(eta=0.4, n_outer=2, n_inner=3000, H0=np.ones(F))
    a = 3.0
    base = enhance_fused(Y_A, Y_B, D_AX, D_AN, D_BN, lam=0.2, **kw).x_hat
    scaled = enhance_fused(a * Y_A, a * Y_B, D_AX, D_AN, D_BN, lam=0.2 * a, **kw).x_hat
    np.testing.assert_allclose(scaled, a * base, atol=1e-6 * np.abs(a * base).max())


def test_acoustic_only_matches_fused_eta_one(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y_A, Y_B = crandn(rng, F, T), crandn(rng, F, T)
    ref = enhance_acoustic_only(Y_A, D_AX, D_AN, 0.2, 500, tol=None)
    fused = enhance_fused(Y_A, Y_B, D_AX, D_AN, D_BN, 1.0, 0.2, 1, 500, update_rtf=False, tol=None)
    np.testing.assert_allclose(fused.x_hat, ref, atol=1e-9)


def test_acoustic_only_single_atom(rng):
    D_AX, D_AN, _ = dicts(rng)
    Y = np.repeat(3.0 * D_AX[:, [2]], T, axis=1)
    rep = enhance_acoustic_only(Y, D_AX, D_AN, 1e-3, 5000, return_report=True)
    code = rep.code
    assert np.sum(np.abs(code[5:])) < 1e-6 * np.sum(np.abs(code[:5]))
    np.testing.assert_allclose(rep.x_hat, Y, atol=1e-3)
    assert not np.any(enhance_acoustic_only(np.zeros((F, T)), D_AX, D_AN, 0.1, 10))


def test_contact_only_matches_fused_eta_zero(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    Y_A, Y_B, H0 = crandn(rng, F, T), crandn(rng, F, T), 1 + 0.3 * crandn(rng, F)
    c = enhance_contact_only(Y_B, D_AX, D_BN, 0.2, 3, 400, H0, tol=None)
    f = enhance_fused(Y_A, Y_B, D_AX, D_AN, D_BN, 0.0, 0.2, 3, 400, H0, tol=None)
    np.testing.assert_allclose(f.x_hat, c.x_hat, atol=1e-9)
    np.testing.assert_allclose(f.rtf, c.rtf, atol=1e-9)


def test_contact_only_single_atom(rng):
    D_AX, _, D_BN = dicts(rng)
    H0 = 0.8 + 0.3 * crandn(rng, F)
    X = np.repeat(2.0 * D_AX[:, [1]], T, axis=1)
    rep = enhance_contact_only(H0[:, None] * X, D_AX, D_BN, 1e-9, 3, 5000, H0)
    np.testing.assert_allclose(rep.rtf, H0, atol=1e-6)
    np.testing.assert_allclose(rep.x_hat, X, atol=1e-5)
    zero = enhance_contact_only(np.zeros((F, T)), D_AX, D_BN, 0.1, 2, 10, H0)
    assert not np.any(zero.x_hat)


def test_huge_lambda_gives_silence(rng):
    D_AX, D_AN, D_BN = dicts(rng)
    rep = enhance_fused(crandn(rng, F, T), crandn(rng, F, T), D_AX, D_AN, D_BN, lam=1e12,
                        n_inner=10)
    assert not np.any(rep.x_hat)
