"""Reference solutions built without the solver's operator code.

The DG right-hand side here is assembled from the weak form of the piecewise
linear scheme (exact mass matrix, Gauss quadrature of ``f(u) psi'``, upwind
traces), and the finite-difference Laplacian from its sparse stencil.  Agreement
with :mod:`pdclaw.operators` is therefore evidence rather than a tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import SpaceTimeGrid, inner_product
from .operators import Scheme, apply_AT, boundary_term, lagrangian
from .problems import ProblemSpec

MAX_STEP_UNKNOWNS = 10_000


@dataclass
class OracleResult:
    trajectory: np.ndarray
    method: str
    step_size_used: float
    notes: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# independent spatial operators

_GS, _GW = np.polynomial.legendre.leggauss(3)
_GS, _GW = _GS / 2.0, _GW / 2.0  # reference cell s in [-1/2, 1/2], nodes at s = -1/4, 1/4


def _basis(s):
    return np.array([(0.25 - s) / 0.5, (s + 0.25) / 0.5])


def _trace(u, s):
    return u[..., 0] * (0.25 - s) / 0.5 + u[..., 1] * (s + 0.25) / 0.5


_MASS = sum(w * np.outer(_basis(s), _basis(s)) for s, w in zip(_GS, _GW))  # per unit cell width


def dg_weak_rhs(u: np.ndarray, f, hx: float) -> np.ndarray:
    """``du/dt`` of the upwind P1 DG scheme for ``u_t + f(u)_x = 0`` (``f' >= 0``).

    ``u`` has shape ``(..., nx, 2)``.  Exact for fluxes of degree <= 2.
    """
    dpsi = np.array([-2.0, 2.0]) / hx
    out = np.zeros_like(u, dtype=float)
    for s, w in zip(_GS, _GW):
        out += hx * w * f(_trace(u, s))[..., None] * dpsi
    out -= f(_trace(u, 0.5))[..., None] * _basis(0.5)
    out += f(_trace(np.roll(u, 1, axis=-2), 0.5))[..., None] * _basis(-0.5)
    return np.linalg.solve(hx * _MASS, out[..., None])[..., 0]


def fd_heat_matrix(gamma_half: np.ndarray, hx: float) -> sp.csr_matrix:
    """Sparse periodic ``(gamma u_x)_x`` with ``gamma_half[j]`` at ``x_j + hx/2``."""
    n = len(gamma_half)
    gp = np.asarray(gamma_half, dtype=float)
    gm = np.roll(gp, 1)
    j = np.arange(n)
    rows = np.concatenate([j, j, j])
    cols = np.concatenate([j, (j + 1) % n, (j - 1) % n])
    vals = np.concatenate([-(gp + gm), gp, gm]) / hx**2
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def dg_linear_matrix(alpha: float, hx: float, nx: int) -> sp.csr_matrix:
    """Sparse matrix of :func:`dg_weak_rhs` for ``f(u) = alpha u`` (dofs flattened cell-major)."""
    m = 2 * nx
    cols = [dg_weak_rhs(e.reshape(nx, 2), lambda v: alpha * v, hx).ravel() for e in np.eye(m)]
    return sp.csr_matrix(np.array(cols).T)


def _spatial_matrix(problem: ProblemSpec, grid: SpaceTimeGrid):
    if problem.viscous:
        if problem.flux.kind != "linear" or problem.flux.alpha != 0:
            raise ValueError("the viscous oracle handles pure diffusion only")
        xh = grid.x_min + (np.arange(grid.nx) + 0.5) * grid.hx
        g = np.asarray(problem.gamma(xh), dtype=float) * np.ones(grid.nx)
        return fd_heat_matrix(g, grid.hx), 1, g
    if problem.flux.kind != "linear":
        raise ValueError("direct solves need a linear flux")
    return dg_linear_matrix(problem.flux.alpha + problem.flux.shift, grid.hx, grid.nx), 2, None


def _sample_initial(problem: ProblemSpec, grid: SpaceTimeGrid, ndof: int) -> np.ndarray:
    j = np.arange(grid.nx)
    if ndof == 1:
        x = grid.x_min + j * grid.hx
        return np.asarray(problem.u0(x), dtype=float) * np.ones(grid.nx)
    c = grid.x_min + (j + 0.5) * grid.hx
    x = np.stack([c - grid.hx / 4, c + grid.hx / 4], axis=1)
    return (np.asarray(problem.u0(x), dtype=float) * np.ones_like(x)).ravel()


# ---------------------------------------------------------------------------
# sequential implicit and explicit references


def direct_implicit_solve(problem: ProblemSpec, grid: SpaceTimeGrid, time_scheme: str = "be") -> OracleResult:
    """Step the implicit scheme with sparse LU factorizations.

    BDF2 takes one backward Euler step first.
    """
    S, ndof, _ = _spatial_matrix(problem, grid)
    m = S.shape[0]
    if m > MAX_STEP_UNKNOWNS:
        raise ValueError(f"{m} unknowns per step exceed {MAX_STEP_UNKNOWNS}")
    h = grid.ht
    eye = sp.identity(m, format="csc")
    be = spla.splu((eye / h - S).tocsc())
    bdf = spla.splu((1.5 * eye / h - S).tocsc()) if time_scheme == "bdf2" else None
    if time_scheme not in ("be", "bdf2"):
        raise ValueError(f"unknown time scheme {time_scheme!r}")
    u = np.empty((grid.nt + 1, m))
    u[0] = _sample_initial(problem, grid, ndof)
    for l in range(grid.nt):
        if bdf is None or l == 0:
            u[l + 1] = be.solve(u[l] / h)
        else:
            u[l + 1] = bdf.solve((2.0 * u[l] - 0.5 * u[l - 1]) / h)
        if not np.all(np.isfinite(u[l + 1])):
            raise FloatingPointError(f"singular or unstable step at l = {l}")
    return OracleResult(u.reshape(grid.nt + 1, grid.nx, ndof), f"direct-{time_scheme}", h)


def explicit_bound(problem: ProblemSpec, grid: SpaceTimeGrid) -> float:
    """Largest admissible forward Euler step for the reference solver."""
    if problem.viscous:
        xh = grid.x_min + (np.arange(grid.nx) + 0.5) * grid.hx
        gmax = float(np.max(np.asarray(problem.gamma(xh)) * np.ones(grid.nx)))
        return grid.hx**2 / (2.0 * gmax)
    u0 = _sample_initial(problem, grid, 2)
    speed = float(np.max(np.abs(problem.flux.df(u0) + problem.flux.shift)))
    return grid.hx / (3.0 * speed) if speed > 0 else math.inf


def explicit_reference(problem: ProblemSpec, grid: SpaceTimeGrid, dt_fine: float | None = None,
                       method: str | None = None) -> OracleResult:
    """Explicit fine-step solve restricted to the time levels of ``grid``.

    Heat: forward Euler on the finite-difference grid.  Inviscid problems: the
    P1 DG weak form with two-stage SSP Runge-Kutta (an average of two forward
    Euler steps), since plain forward Euler is unstable for P1 DG at any fixed
    CFL number.  ``method="forward-euler"`` is still accepted for inviscid
    problems; with ``hx`` fixed it converges at first order as ``dt_fine -> 0``.
    The default step is half the stability bound.
    """
    method = method or ("forward-euler" if problem.viscous else "ssp-rk2")
    if method not in ("forward-euler", "ssp-rk2") or (problem.viscous and method != "forward-euler"):
        raise ValueError(f"unsupported explicit method {method!r}")
    bound = explicit_bound(problem, grid)
    if dt_fine is None:
        dt_fine = 0.5 * bound if math.isfinite(bound) else grid.ht
    if dt_fine > bound:
        raise ValueError(f"dt_fine = {dt_fine:.3g} violates the explicit bound {bound:.3g}")
    sub = max(1, math.ceil(grid.ht / dt_fine - 1e-12))
    dt = grid.ht / sub
    if problem.viscous:
        S, ndof, _ = _spatial_matrix(problem, grid)

        def step(v):
            return v + dt * (S @ v)

        v = _sample_initial(problem, grid, 1)
    else:
        ndof = 2
        fl = problem.flux

        def flux(w):
            return fl.f(w) + fl.shift * w

        def euler(v):
            return v + dt * dg_weak_rhs(v.reshape(grid.nx, 2), flux, grid.hx).ravel()

        def step(v):
            return euler(v) if method == "forward-euler" else 0.5 * (v + euler(euler(v)))

        v = _sample_initial(problem, grid, 2)
    out = [v]
    for _ in range(grid.nt):
        for _ in range(sub):
            v = step(v)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("explicit reference blew up")
        out.append(v)
    return OracleResult(np.array(out).reshape(grid.nt + 1, grid.nx, ndof), method, dt,
                        {"substeps": sub, "bound": bound})


# ---------------------------------------------------------------------------
# adjoint and Lagrangian consistency


def _random_pair(scheme: Scheme, grid: SpaceTimeGrid, rng, phi_terminal=True):
    shape = (grid.nt + 1, grid.nx, scheme.layout.ndof)
    u = rng.standard_normal(shape)
    phi = rng.standard_normal(shape)
    if not phi_terminal:
        phi[-1] = 0.0
    return u, phi


def lagrangian_defect(u, phi, scheme: Scheme, grid: SpaceTimeGrid) -> float:
    """Relative gap between the two summation-by-parts forms of the Lagrangian."""
    lhs = lagrangian(u, phi, scheme, grid)
    vol = -inner_product(u[1:], apply_AT(phi, u, scheme, grid), grid)
    bnd = boundary_term(u, phi, scheme, grid)
    scale = abs(lhs) + abs(vol) + abs(bnd)
    return 0.0 if scale == 0 else abs(lhs - vol - bnd) / scale


def adjoint_check(scheme: Scheme, grid: SpaceTimeGrid, seed: int = 0, trials: int = 10) -> float:
    """Worst relative defect of the Lagrangian identity over random ``(u, phi)``; linear schemes."""
    if not scheme.is_linear:
        raise ValueError("the exact identity needs a linear scheme; use derivative_order")
    rng = np.random.default_rng(seed)
    return max(lagrangian_defect(*_random_pair(scheme, grid, rng), scheme, grid) for _ in range(trials))


def directional_derivative(u, phi, delta, scheme: Scheme, grid: SpaceTimeGrid) -> float:
    """``dL(u, phi)[delta]`` predicted by the dual residual: ``-<delta, D(phi; u)> + boundary(delta, phi)``."""
    return -inner_product(delta[1:], apply_AT(phi, u, scheme, grid), grid) + boundary_term(delta, phi, scheme, grid)


def directional_defect(u, phi, delta, scheme: Scheme, grid: SpaceTimeGrid, eps: float, central: bool = False) -> float:
    """Gap between a difference quotient of ``L`` along ``delta`` and :func:`directional_derivative`.

    The default is the Taylor remainder ``|L(u + eps d) - L(u) - eps dL[d]|``,
    which is ``O(eps^2)`` exactly when the derivative is right.  ``central=True``
    returns the central-difference gap instead; ``L`` is quadratic in ``u`` for
    the quadratic flux, so that gap is pure round-off.
    """
    dl = directional_derivative(u, phi, delta, scheme, grid)
    if central:
        cd = (lagrangian(u + eps * delta, phi, scheme, grid) - lagrangian(u - eps * delta, phi, scheme, grid)) / (2 * eps)
        return abs(cd - dl)
    return abs(lagrangian(u + eps * delta, phi, scheme, grid) - lagrangian(u, phi, scheme, grid) - eps * dl)


def derivative_order(scheme: Scheme, grid: SpaceTimeGrid, seed: int = 0, trials: int = 10,
                     eps=(1e-3, 5e-4)) -> float:
    """Smallest observed order of the Taylor remainder over random trials (2 for a correct derivative)."""
    rng = np.random.default_rng(seed)
    orders = []
    for _ in range(trials):
        u, phi = _random_pair(scheme, grid, rng)
        delta = rng.standard_normal(u.shape)
        d = [directional_defect(u, phi, delta, scheme, grid, e) for e in eps]
        orders.append(math.log(d[0] / d[1]) / math.log(eps[0] / eps[1]))
    return min(orders)
