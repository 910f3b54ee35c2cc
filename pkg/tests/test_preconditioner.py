import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdclaw.grid import Layout, make_grid
from pdclaw.preconditioner import (CLOSURES, build_K, estimate_gamma_hat, solve_K, solve_K_direct,
                                   time_stencil_matrix)
from pdclaw.problems import heat_problem


def test_estimate_gamma_hat_examples():
    g6 = make_grid(0, 1, 6, 1, 1)
    assert estimate_gamma_hat(lambda x: 0.5 + 0 * x, g6) == 0.5
    gamma = heat_problem().gamma
    assert estimate_gamma_hat(gamma, make_grid(0, 1, 2, 1, 1)) == pytest.approx(0.6, rel=1e-15)
    assert estimate_gamma_hat(gamma, g6) == pytest.approx(0.6, rel=1e-15)
    assert estimate_gamma_hat(gamma, make_grid(0, 1, 16, 1, 1)) == pytest.approx(0.6, abs=2e-3)
    assert estimate_gamma_hat(lambda x: np.where(x < 0.5, 0.2, 1.0), make_grid(0, 1, 8, 1, 1)) == 1.0
    with pytest.raises(ValueError):
        estimate_gamma_hat(lambda x: x - 0.5, g6)


def test_nonlinear_symbol():
    g = make_grid(0, 2, 8, 1.0, 6)
    K = build_K("nonlinear", 1.0, 0.7, g)
    lam_t = np.linalg.eigvalsh(K.time_matrix)
    k = np.arange(8)
    expected = np.sort(lam_t)[:, None] + (2 - 2 * np.cos(2 * np.pi * k / 8))[None] / g.hx**2
    assert K.gamma_hat == 0.0
    assert np.allclose(np.sort(K.symbol.ravel()), np.sort(expected.ravel()), rtol=1e-12)
    assert np.allclose(np.sort(K.symbol.ravel()), np.linalg.eigvalsh(K.dense()), rtol=1e-10, atol=1e-8)


def test_neumann_closure_kernel():
    g = make_grid(0, 1, 4, 1.0, 5)
    K = build_K("linear", 0.0, 0.0, g, closure="neumann")
    v = np.repeat(np.random.default_rng(0).standard_normal((1, 4, 1)), 5, axis=0)
    assert np.allclose(K.apply(v), 0.0, atol=1e-12)


def _dense_oracle(alpha, gamma_hat, g, Kt):
    """Assemble the space-time matrix entry by entry."""
    n, m = g.nt, g.nx
    out = np.zeros((n * m, n * m))
    for l in range(n):
        for j in range(m):
            r = l * m + j
            for l2 in range(n):
                out[r, l2 * m + j] += Kt[l, l2]
            for dj, c in ((-1, -1.0), (0, 2.0), (1, -1.0)):
                out[r, l * m + (j + dj) % m] += alpha**2 * c / g.hx**2
            for dj, c in ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)):
                out[r, l * m + (j + dj) % m] += gamma_hat**2 * c / g.hx**4
    return out


@pytest.mark.parametrize("closure", CLOSURES)
def test_dense_assembly(closure):
    g = make_grid(0, 1, 4, 0.5, 4)
    K = build_K("linear", 2.0, 0.3, g, closure=closure)
    h2 = g.ht**2
    if closure == "neumann":
        Kt = (np.diag([1.0, 2, 2, 1]) - np.eye(4, k=1) - np.eye(4, k=-1)) / h2
    else:  # backward Euler gram closure coincides with the terminal closure
        Kt = (np.diag([1.0, 2, 2, 2]) - np.eye(4, k=1) - np.eye(4, k=-1)) / h2
    assert np.allclose(K.dense(), _dense_oracle(2.0, 0.3, g, Kt), rtol=1e-13, atol=1e-9)


def test_bdf2_gram_time_matrix():
    B = time_stencil_matrix(4, "bdf2")
    assert np.array_equal(B, [[1, 0, 0, 0], [-2, 1.5, 0, 0], [0.5, -2, 1.5, 0], [0, 0.5, -2, 1.5]])
    Bh = time_stencil_matrix(3, "bdf2", with_history=True)
    assert np.array_equal(Bh, [[1.5, 0, 0], [-2, 1.5, 0], [0.5, -2, 1.5]])
    g = make_grid(0, 1, 4, 1.0, 4)
    K = build_K("linear", 1.0, 0.0, g, Layout.DG2, time_scheme="bdf2")
    assert np.allclose(K.time_matrix, B @ B.T / g.ht**2)
    with pytest.raises(ValueError):
        time_stencil_matrix(3, "rk4")


def test_solve_examples():
    g = make_grid(0, 1, 8, 0.5, 6)
    rng = np.random.default_rng(2)
    K = build_K("linear", 2.0, 0.0, g, Layout.DG2, closure="neumann")
    w = K.deflate(rng.standard_normal((6, 8, 2)))
    assert np.allclose(solve_K(K, K.apply(w)), w, rtol=0, atol=1e-10 * np.abs(w).max())
    # cosine-in-time, Fourier-in-space mode is an eigenvector of the Neumann closure
    t = (np.arange(6) + 0.5) / 6
    x = np.arange(16) / 16
    mode = (np.cos(2 * np.pi * t)[:, None] * np.cos(2 * np.pi * 3 * x)[None]).reshape(6, 8, 2)
    sym = (2 - 2 * np.cos(2 * np.pi / 6)) / g.ht**2 + 4 * (2 - 2 * np.cos(2 * np.pi * 3 / 16)) / K.dx**2
    assert np.allclose(solve_K(K, mode), mode / sym, rtol=1e-12, atol=1e-14)
    z = np.zeros((6, 8, 2))
    assert np.all(solve_K_direct(K, z) == 0)


def test_direct_identity_and_guard():
    g = make_grid(0, 1, 4, 0.5, 4)
    K = build_K("linear", 1.0, 0.0, g, closure="neumann")
    rhs = np.random.default_rng(3).standard_normal((4, 4, 1))
    z = solve_K_direct(K, rhs)
    assert np.allclose(K.apply(z), K.deflate(rhs), atol=1e-10 * np.abs(rhs).max())
    big = build_K("linear", 1.0, 0.0, make_grid(0, 1, 128, 1.0, 128), Layout.DG2)
    with pytest.raises(ValueError):
        solve_K_direct(big, np.zeros((128, 128, 2)))


def test_build_K_validation():
    g = make_grid(0, 1, 4, 1, 2)
    for bad in (dict(kind="cubic"), dict(closure="dirichlet"), dict(gamma_hat=-1.0)):
        args = dict(kind="linear", coeff=1.0, gamma_hat=0.0, grid=g) | bad
        with pytest.raises(ValueError):
            build_K(**args)


# -- randomized invariants -------------------------------------------------------

operators = st.builds(
    lambda kind, coeff, gh, nx, nt, T, layout, closure, ts: build_K(
        kind, coeff, gh, make_grid(0, 1, nx, T, nt), layout, closure, ts),
    st.sampled_from(["linear", "nonlinear"]), st.floats(0, 3), st.floats(0, 1), st.integers(2, 16),
    st.integers(1, 16), st.floats(0.05, 2), st.sampled_from(list(Layout)), st.sampled_from(CLOSURES),
    st.sampled_from(["be", "bdf2"]))


def _shape(K):
    return (K.nt, K.grid.nx, K.layout.ndof)


def _dot(a, b):
    return float(np.sum(a * b))


@settings(max_examples=50, deadline=None)
@given(operators, st.integers(0, 2**31))
def test_self_adjoint_and_psd(K, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2,) + _shape(K))
    Ka, Kb = K.apply(a), K.apply(b)
    scale = np.linalg.norm(Ka) * np.linalg.norm(b) + np.linalg.norm(a) * np.linalg.norm(Kb)
    assert abs(_dot(Ka, b) - _dot(a, Kb)) <= 1e-12 * scale
    assert _dot(a, Ka) >= -1e-12 * _dot(a, a) * np.abs(K.symbol).max()


@settings(max_examples=50, deadline=None)
@given(operators, st.integers(0, 2**31))
def test_solve_inverts_apply(K, seed):
    w = K.deflate(np.random.default_rng(seed).standard_normal(_shape(K)))
    assert np.allclose(K.solve(K.apply(w)), w, rtol=0, atol=1e-9 * max(np.abs(w).max(), 1e-300))


@settings(max_examples=25, deadline=None)
@given(operators, st.integers(0, 2**31))
def test_spectral_matches_dense(K, seed):
    rhs = np.random.default_rng(seed).standard_normal(_shape(K))
    z = K.solve(rhs)
    zd = solve_K_direct(K, rhs)
    assert np.abs(z - zd).max() <= 1e-9 * max(np.abs(zd).max(), 1e-300)
    r = K.deflate(rhs)
    assert np.linalg.norm(K.apply(z) - r) <= 1e-10 * np.linalg.norm(r)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 3), st.floats(0, 1), st.integers(2, 16), st.integers(1, 16), st.floats(0.05, 2),
       st.sampled_from(["gram", "neumann"]), st.integers(0, 2**31))
def test_norm_identity(coeff, gh, nx, nt, T, closure, seed):
    """Sum of squared stencil differences equals ``<v, K v>`` (backward Euler stencils)."""
    g = make_grid(0, 1, nx, T, nt)
    K = build_K("linear", coeff, gh, g, closure=closure)
    v = np.random.default_rng(seed).standard_normal((nt, nx, 1))
    if closure == "gram":
        # free end at l = 0, the terminal condition phi^nt = 0 closes the last difference
        dt = np.diff(np.concatenate([v, np.zeros((1, nx, 1))]), axis=0)
    else:
        dt = np.diff(v, axis=0)
    dx = (np.roll(v, -1, axis=1) - v) / g.hx
    dxx = (np.roll(v, -1, axis=1) - 2 * v + np.roll(v, 1, axis=1)) / g.hx**2
    h_norm = np.sum(dt**2) / g.ht**2 + coeff**2 * np.sum(dx**2) + gh**2 * np.sum(dxx**2)
    assert _dot(v, K.apply(v)) == pytest.approx(h_norm, rel=1e-10, abs=1e-12)
