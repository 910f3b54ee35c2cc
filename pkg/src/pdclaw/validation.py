"""Quick oracle suite behind ``pdclaw check`` (small grids, a few seconds)."""

from __future__ import annotations

import numpy as np

from .grid import make_grid
from .operators import FluxSpec, Scheme, dg_linear_rhs, dg_quadratic_rhs
from .oracles import adjoint_check, derivative_order, dg_weak_rhs, direct_implicit_solve
from .pdhg import default_config, estimate_nu_max, make_K, make_scheme, nu_spectrum, solve
from .preconditioner import solve_K_direct
from .problems import get_problem


def _check(name, value, ok, fmt="{:.3e}"):
    return name, bool(ok), fmt.format(value)


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    out = []
    g = make_grid(0.0, 1.0, 8, 0.1, 8)
    heat = Scheme("be", "fd_heat", FluxSpec(), 0.5 + 0.1 * np.sin(2 * np.pi * (np.arange(8) + 0.5) / 8))
    linear = [heat, Scheme("be", "dg_linear", FluxSpec("linear", 2.0)), Scheme("bdf2", "dg_linear", FluxSpec("linear", 2.0))]
    worst = max(adjoint_check(s, g, seed) for s in linear)
    out.append(_check("adjoint identity, linear schemes", worst, worst <= 1e-12))
    quad = Scheme("be", "dg_quadratic", FluxSpec("quadratic", -1.0, 1.0))
    order = derivative_order(quad, g, seed)
    out.append(_check("quadratic Jacobian-transpose, Taylor order", order, order >= 1.9, "{:.3f}"))

    u = rng.standard_normal((6, 2))
    gap = max(np.abs(dg_weak_rhs(u, lambda v: 2.0 * v, 0.3) - dg_linear_rhs(u, 2.0, 0.3)).max(),
              np.abs(dg_weak_rhs(u, lambda v: -v * v + v, 0.3) - dg_quadratic_rhs(u, -1.0, 1.0, 0.3)).max())
    out.append(_check("tabulated DG blocks vs weak form", gap, gap <= 1e-12))

    p = get_problem("heat")
    sch = make_scheme(p, g)
    K = make_K(p, sch, g)
    rhs = rng.standard_normal((g.nt, g.nx, 1))
    gap = np.abs(K.solve(rhs) - solve_K_direct(K, rhs)).max() / np.abs(rhs).max()
    out.append(_check("spectral K solve vs dense", gap, gap <= 1e-9))

    nu_p = estimate_nu_max(sch, K, g)
    nu_d = nu_spectrum(sch, K, g).max()
    out.append(_check("power iteration nu_max vs dense", abs(nu_p - nu_d) / nu_d, abs(nu_p - nu_d) <= 1e-6 * nu_d))

    for name, ts, grid in (("heat", "be", make_grid(0, 1, 16, 0.1, 16)), ("transport", "bdf2", make_grid(0, 1, 16, 0.5, 8))):
        prob = get_problem(name)
        ref = direct_implicit_solve(prob, grid, ts).trajectory
        sol = solve(prob, grid, config=default_config(prob, eps=1e-10, max_iter=50_000))
        gap = np.abs(sol.u - ref).max()
        out.append(_check(f"{name}: primal-dual vs direct implicit solve", gap, sol.converged and gap <= 1e-6))
    return out
