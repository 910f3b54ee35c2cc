import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdclaw.grid import Layout, make_grid, norm, project_initial
from pdclaw.operators import FluxSpec, Scheme, apply_A, lap_fd
from pdclaw.oracles import direct_implicit_solve
from pdclaw.pdhg import (DivergenceError, PdhgConfig, PdhgState, StepSizeError, contraction_report,
                         default_config, estimate_nu_max, make_K, make_scheme, nu_spectrum, observed_factor,
                         pdhg_iterate, predicted_modulus, residual, run_pdhg, solve)
from pdclaw.preconditioner import build_K
from pdclaw.problems import ProblemSpec, get_problem


def small(name, nx=8, nt=8, time=None):
    p = get_problem(name)
    g = make_grid(p.x_min, p.x_max, nx, p.T, nt)
    s = make_scheme(p, g, time=time)
    return p, g, s, make_K(p, s, g)


def test_config_defaults_and_validation():
    c = PdhgConfig()
    assert (c.tau_u, c.tau_phi, c.tau_lambda, c.tau_u0) == (0.8, 0.8, 0.99, 0.8)
    for bad in (dict(tau_u=0), dict(tau_phi=-1), dict(eps=0), dict(max_iter=-1)):
        with pytest.raises(ValueError):
            PdhgConfig(**bad)


@pytest.mark.parametrize("name, time", [("heat", "be"), ("transport", "be"), ("transport", "bdf2")])
def test_fixed_point(name, time):
    p, g, s, K = small(name, 16, 8, time)
    u = direct_implicit_solve(p, g, time).trajectory
    state = PdhgState.warm(u, np.zeros_like(u), np.zeros_like(u[0]))
    u0 = project_initial(p.u0, g, s.layout)
    new = pdhg_iterate(state, s, K, default_config(p), u0)
    assert np.abs(new.u - u).max() <= 1e-12
    assert np.abs(new.phi).max() <= 1e-12
    assert np.abs(new.lam).max() <= 1e-12
    assert np.abs(new.phi_bar - (2 * new.phi - state.phi)).max() == 0


def test_first_heat_iteration_unfolds():
    p, g, s, K = small("heat")
    u0 = project_initial(p.u0, g, s.layout)
    state = PdhgState.initial(u0, g.nt)
    cfg = default_config(p)
    new = pdhg_iterate(state, s, K, cfg, u0)
    assert np.array_equal(new.u, state.u)
    assert np.allclose(new.phi[:-1], -cfg.tau_phi * K.solve(apply_A(state.u, s, g)), rtol=1e-14, atol=0)
    assert np.all(new.phi[-1] == 0) and new.n == 1


def test_residual_examples():
    p, g, s, K = small("heat", 16, 16)
    u = direct_implicit_solve(p, g).trajectory
    rp, rd = residual(u, np.zeros_like(u), s, g)
    assert rp <= 1e-12 and rd == 0
    u0 = project_initial(p.u0, g, Layout.FD)
    ext = np.repeat(u0[None], g.nt + 1, axis=0)
    lap = lap_fd(u0, s.gamma_half, g.hx)
    expected = np.sqrt(g.nt * g.ht * g.hx * np.sum(lap**2))
    assert residual(ext, np.zeros_like(ext), s, g)[0] == pytest.approx(expected, rel=1e-13)


def test_zero_problem_converges_in_one_sweep():
    p = ProblemSpec("still", FluxSpec("linear", 0.0), 0.0, 1.0, 1.0, {"type": "zero"})
    g = make_grid(0, 1, 8, 1.0, 4)
    sol = solve(p, g, config=PdhgConfig(eps=1e-12))
    assert sol.converged and sol.iterations == 1
    assert np.all(sol.u == 0)


def test_max_iter_zero_records_initial_residual():
    p, g, s, K = small("heat")
    sol = solve(p, g, s, default_config(p, max_iter=0), K)
    assert not sol.converged and sol.iterations == 0
    assert sol.residual_history.shape == (1, 2) and sol.residual_history[0, 0] > 0


def test_transport_contraction_200_iterations():
    p, g, s, K = small("transport", time="be")
    cfg = default_config(p, eps=1e-300, max_iter=200)
    sol = solve(p, g, s, cfg, K)
    nus = nu_spectrum(s, K, g)
    pred = predicted_modulus(cfg.tau_u, cfg.tau_phi, nus[nus > 1e-12 * nus.max()].min())
    hist = sol.residual_history.max(axis=1)
    assert hist[-1] <= pred**200 * hist[0] * 10


def test_estimate_nu_max():
    p, g, s, K = small("heat")
    assert estimate_nu_max(s, K, g) == pytest.approx(nu_spectrum(s, K, g).max(), rel=1e-6)
    with pytest.raises(ValueError):
        estimate_nu_max(Scheme("be", "dg_quadratic", FluxSpec("quadratic", -1, 1)), K, g)


def _dense_A(scheme, grid):
    n = grid.nt * grid.nx * scheme.layout.ndof
    cols = []
    for e in np.eye(n):
        u = np.zeros((grid.nt + 1, grid.nx, scheme.layout.ndof))
        u[1:] = e.reshape(u[1:].shape)
        cols.append(apply_A(u, scheme, grid).ravel())
    return np.array(cols).T


class _DenseK:
    def __init__(self, M):
        self.M = M

    def solve(self, r):
        return np.linalg.solve(self.M, r.ravel()).reshape(r.shape)


def test_nu_max_perfect_preconditioner_and_scaling():
    s = Scheme("be", "dg_linear", FluxSpec("linear", 2.0))
    g = make_grid(0, 1, 4, 0.5, 4)
    A = _dense_A(s, g)
    assert estimate_nu_max(s, _DenseK(A @ A.T), g) == pytest.approx(1.0, rel=1e-8)
    K = build_K("linear", 2.0, 0.0, g, Layout.DG2)
    s2 = Scheme("be", "dg_linear", FluxSpec("linear", 4.0))
    g2 = make_grid(0, 1, 4, 0.25, 4)  # halved ht and doubled alpha: A doubles
    assert np.allclose(_dense_A(s2, g2), 2 * A)
    assert estimate_nu_max(s2, K, g2) == pytest.approx(4 * estimate_nu_max(s, K, g), rel=1e-6)


def test_predicted_modulus_formula():
    assert predicted_modulus(1.0, 0.75, 1.0) == pytest.approx(0.5)
    assert predicted_modulus(1.0, 1.0, 1e-14) == pytest.approx(1.0)
    assert predicted_modulus(0.0 + 1e-300, 1.0, 1.0) == pytest.approx(1.0)


def test_contraction_report_and_errors():
    p, g, s, K = small("transport", time="be")
    cfg = default_config(p, eps=1e-10, max_iter=5000)
    sol = solve(p, g, s, cfg, K)
    rep = contraction_report(s, K, cfg, sol)
    assert 0 < rep.predicted_factor <= 1 and rep.observed_factor < 1
    assert cfg.tau_u * cfg.tau_phi * rep.nu_max < 1
    short = solve(p, g, s, default_config(p, max_iter=5), K)
    with pytest.raises(ValueError):
        contraction_report(s, K, cfg, short)
    with pytest.raises(ValueError):
        observed_factor(np.ones((2, 2)))


def test_step_size_bound_refusal():
    p, g, s, K = small("transport", time="be")
    nu = estimate_nu_max(s, K, g)
    too_big = PdhgConfig(tau_u=1.0, tau_phi=1.0 / nu, enforce_bound=True, max_iter=10)
    with pytest.raises(StepSizeError):
        solve(p, g, s, too_big, K)
    ok = PdhgConfig(tau_u=1.0, tau_phi=0.9 / nu, tau_u0=0.2, enforce_bound=True, max_iter=10)
    assert solve(p, g, s, ok, K).iterations == 10


def test_divergence_reports_iteration():
    p, g, s, K = small("transport", time="be")
    with pytest.raises(DivergenceError) as exc, np.errstate(all="ignore"):
        solve(p, g, s, PdhgConfig(tau_u=1.0, tau_phi=2.0, max_iter=100_000), K)
    assert exc.value.iteration > 0 and "iteration" in str(exc.value)


# -- randomized invariants -------------------------------------------------------

linear_cases = st.sampled_from([("heat", "be"), ("transport", "be"), ("transport", "bdf2"),
                                ("transport_box", "bdf2")])


@settings(max_examples=12, deadline=None)
@given(linear_cases, st.integers(4, 12), st.integers(2, 12), st.sampled_from([1e-4, 1e-6, 1e-8]))
def test_stopping_soundness_and_monotone_trend(case, nx, nt, eps):
    name, time = case
    p, g, s, K = small(name, nx, nt, time)
    sol = solve(p, g, s, default_config(p, eps=eps, max_iter=20_000), K)
    assert sol.converged
    rp, rd = residual(sol.u, sol.phi, s, g)
    assert rp <= eps and rd <= eps
    hist = sol.residual_history
    assert np.all(hist >= 0) and len(hist) == sol.iterations + 1
    if len(hist) >= 21:
        assert observed_factor(hist) < 1


@settings(max_examples=10, deadline=None)
@given(linear_cases, st.integers(4, 12), st.integers(2, 8), st.integers(0, 2**31))
def test_fixed_point_property(case, nx, nt, seed):
    name, time = case
    p, g, s, K = small(name, nx, nt, time)
    u = direct_implicit_solve(p, g, time).trajectory
    state = PdhgState.warm(u, np.zeros_like(u), np.zeros_like(u[0]))
    rng = np.random.default_rng(seed)
    cfg = PdhgConfig(*(rng.uniform(0.05, 1.0, 4)))
    new = pdhg_iterate(state, s, K, cfg, u[0])
    assert np.abs(new.u - u).max() <= 1e-12 * max(1.0, np.abs(u).max())
    assert norm(new.phi, g) <= 1e-12


def test_extrapolation_invariant():
    p, g, s, K = small("heat")
    u0 = project_initial(p.u0, g, s.layout)
    state = PdhgState.initial(u0, g.nt)
    for _ in range(5):
        new = pdhg_iterate(state, s, K, default_config(p), u0)
        assert np.array_equal(new.phi_bar, 2 * new.phi - state.phi)
        assert np.array_equal(new.lam_bar, 2 * new.lam - state.lam)
        state = new


def test_callback_sees_every_sweep():
    p, g, s, K = small("heat")
    seen = []
    sol = run_pdhg(s, K, default_config(p, max_iter=7, eps=1e-300), project_initial(p.u0, g, s.layout),
                   callback=lambda st_: seen.append(st_.n))
    assert seen == list(range(1, 8)) and sol.iterations == 7
