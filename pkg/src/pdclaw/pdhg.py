"""Preconditioned primal-dual hybrid gradient iterations for the discrete saddle problem.

The iteration is the G-prox PDHG on ``min_u max_{phi, lam} -<phi, A(u)> + <lam, u^0 - u0>``:

1. ``u^l  -= tau_u  D(phi_bar; u)^l``             for ``l = 1..nt``
   ``u^0  -= tau_u0 (g0(phi_bar) + lam_bar)``
2. ``phi  -= tau_phi K^{-1} A(u)``                on slices ``l = 0..nt-1``
   ``lam  += tau_lam (u^0 - u0)``
3. ``phi_bar = 2 phi_new - phi_old``, ``lam_bar = 2 lam_new - lam_old``

``phi^{nt}`` is the terminal condition and stays zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg

from .grid import SpaceTimeGrid, layout_of, norm, project_initial
from .operators import (Scheme, SpaceScheme, TimeScheme, apply_A, apply_AT, initial_gradient,
                        monotonicity_shift)
from .preconditioner import KOperator, build_K, estimate_gamma_hat
from .problems import ProblemSpec, preset_for

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, message: str, iteration: int, index=None):
        super().__init__(message)
        self.iteration = iteration
        self.index = index


class StepSizeError(ValueError):
    pass


@dataclass
class PdhgConfig:
    tau_u: float = 0.8
    tau_phi: float = 0.8
    tau_lambda: float = 0.99
    tau_u0: Optional[float] = None
    eps: float = 1e-6
    max_iter: int = 10_000
    enforce_bound: bool = False
    per_slice: bool = False  # residual norms on one time level (one-timestep windows)

    def __post_init__(self):
        for name in ("tau_u", "tau_phi", "tau_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_u0 is None:
            self.tau_u0 = self.tau_u
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass
class PdhgState:
    u: np.ndarray
    phi: np.ndarray
    phi_bar: np.ndarray
    lam: np.ndarray
    lam_bar: np.ndarray
    n: int = 0
    residual_history: list = field(default_factory=list)

    @classmethod
    def initial(cls, u0: np.ndarray, nt: int, lam: Optional[np.ndarray] = None) -> "PdhgState":
        """Constant-in-time extension of ``u0`` with zero duals."""
        u = np.repeat(u0[None], nt + 1, axis=0).astype(float)
        phi = np.zeros_like(u)
        lam = np.zeros_like(u0, dtype=float) if lam is None else lam.copy()
        return cls(u, phi, phi.copy(), lam, lam.copy())

    @classmethod
    def warm(cls, u: np.ndarray, phi: np.ndarray, lam: np.ndarray) -> "PdhgState":
        phi = phi.copy()
        phi[-1] = 0.0
        return cls(u.copy(), phi, phi.copy(), lam.copy(), lam.copy())

    def copy(self) -> "PdhgState":
        return PdhgState(self.u.copy(), self.phi.copy(), self.phi_bar.copy(), self.lam.copy(),
                         self.lam_bar.copy(), self.n, list(self.residual_history))


@dataclass
class Solution:
    u: np.ndarray
    phi: np.ndarray
    lam: np.ndarray
    iterations: int
    converged: bool
    residual_history: np.ndarray  # rows (r_primal, r_dual); row 0 is the starting guess
    grid: SpaceTimeGrid
    scheme: Scheme
    info: dict = field(default_factory=dict)


def residual(u, phi, scheme: Scheme, grid: SpaceTimeGrid, per_slice: bool = False, history=None):
    """``(||A(u)||, ||D(phi; u)||)`` in the discrete L2 norm."""
    rp = norm(apply_A(u, scheme, grid, history), grid, time_weight=not per_slice)
    rd = norm(apply_AT(phi, u, scheme, grid, history), grid, time_weight=not per_slice)
    return rp, rd


def _check_finite(arr: np.ndarray, what: str, n: int):
    if not np.all(np.isfinite(arr)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise DivergenceError(f"non-finite {what} at index (l, j, dof) = {idx} in iteration {n}", n, idx)


def pdhg_iterate(state: PdhgState, scheme: Scheme, K: KOperator, config: PdhgConfig, u0: np.ndarray,
                 history=None) -> PdhgState:
    """One full primal-dual sweep; returns a new state."""
    grid = K.grid
    n = state.n + 1
    u = state.u.copy()
    u[1:] -= config.tau_u * apply_AT(state.phi_bar, state.u, scheme, grid, history)
    u[0] -= config.tau_u0 * (initial_gradient(state.phi_bar, scheme, grid, history) + state.lam_bar)
    _check_finite(u, "primal value", n)

    r = apply_A(u, scheme, grid, history)
    phi = state.phi.copy()
    phi[:-1] -= config.tau_phi * K.solve(r)
    _check_finite(phi, "dual value", n)
    lam = state.lam + config.tau_lambda * (u[0] - u0)

    return PdhgState(u, phi, 2.0 * phi - state.phi, lam, 2.0 * lam - state.lam, n,
                     state.residual_history)


def run_pdhg(scheme: Scheme, K: KOperator, config: PdhgConfig, u0: np.ndarray,
             state: Optional[PdhgState] = None, history=None, callback=None) -> Solution:
    """Iterate until both residual components are ``<= eps`` or ``max_iter`` is hit.

    At least one sweep is taken whenever ``max_iter >= 1``.  ``callback(state)``
    runs after every sweep.
    """
    grid = K.grid
    if state is None:
        state = PdhgState.initial(u0, grid.nt)
    if config.enforce_bound and scheme.is_linear:
        nu = estimate_nu_max(scheme, K, grid)
        if config.tau_u * config.tau_phi * nu >= 1.0:
            raise StepSizeError(f"tau_u*tau_phi*nu_max = {config.tau_u * config.tau_phi * nu:.4g} >= 1")
    hist = [residual(state.u, state.phi, scheme, grid, config.per_slice, history)]
    converged = False
    while state.n < config.max_iter:
        state = pdhg_iterate(state, scheme, K, config, u0, history)
        res = residual(state.u, state.phi, scheme, grid, config.per_slice, history)
        hist.append(res)
        if callback is not None:
            callback(state)
        if res[0] <= config.eps and res[1] <= config.eps:
            converged = True
            break
    state.residual_history = hist
    log.debug("pdhg: %d iterations, converged=%s, residual=%s", state.n, converged, hist[-1])
    return Solution(state.u, state.phi, state.lam, state.n, converged, np.array(hist), grid, scheme,
                    {"lam_bar": state.lam_bar, "phi_bar": state.phi_bar})


# ---------------------------------------------------------------------------
# contraction analysis for linear schemes


def _normal_operator(scheme: Scheme, K: KOperator, grid: SpaceTimeGrid):
    """``u -> A* K^{-1} A u`` on the free levels ``l = 1..nt`` (``u^0`` held at zero).

    ``A*`` is the adjoint in the weighted inner product, i.e. ``-D``.
    """
    shape = (grid.nt + 1, grid.nx, scheme.layout.ndof)
    size = grid.nt * grid.nx * scheme.layout.ndof

    def matvec(v):
        u = np.zeros(shape)
        u[1:] = np.asarray(v).reshape((grid.nt,) + shape[1:])
        phi = np.zeros(shape)
        phi[:-1] = K.solve(apply_A(u, scheme, grid))
        return -apply_AT(phi, u, scheme, grid).reshape(size)

    return scipy.sparse.linalg.LinearOperator((size, size), matvec=matvec, dtype=float)


def normal_matrix(scheme: Scheme, K: KOperator, grid: SpaceTimeGrid) -> np.ndarray:
    op = _normal_operator(scheme, K, grid)
    return op.matmat(np.eye(op.shape[0]))


def estimate_nu_max(scheme: Scheme, K: KOperator, grid: SpaceTimeGrid, rtol: float = 1e-9,
                    seed: int = 0) -> float:
    """Largest eigenvalue of ``A^T K^{-1} A`` by power iteration."""
    if not scheme.is_linear:
        raise ValueError("nu_max is only defined for linear schemes")
    op = _normal_operator(scheme, K, grid)
    v = np.random.default_rng(seed).standard_normal(op.shape[0])
    v /= np.linalg.norm(v)
    nu = 0.0
    for _ in range(5000):
        w = op.matvec(v)
        nu_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        if abs(nu_new - nu) <= rtol * abs(nu_new):
            return nu_new
        nu = nu_new
    return nu


def nu_spectrum(scheme: Scheme, K: KOperator, grid: SpaceTimeGrid) -> np.ndarray:
    """All eigenvalues of ``A^T K^{-1} A`` (dense; small grids only)."""
    M = normal_matrix(scheme, K, grid)
    return np.sort(np.linalg.eigvalsh(0.5 * (M + M.T)))


def predicted_modulus(tau_u: float, tau_phi: float, nu) -> np.ndarray:
    """Per-mode modulus ``sqrt(1 - tau_u tau_phi nu)`` of the PDHG iteration matrix."""
    stn = tau_u * tau_phi * np.asarray(nu, dtype=float)
    return np.sqrt(np.clip(1.0 - stn, 0.0, None))


@dataclass
class ContractionReport:
    nu_max: float
    nu_min: float
    predicted_factor: float  # slowest mode, sqrt(1 - tau_u tau_phi nu_min)
    observed_factor: float  # geometric-mean residual ratio over the tail half


def observed_factor(history: np.ndarray) -> float:
    r = np.max(np.asarray(history), axis=1)
    tail = r[len(r) // 2:]
    tail = tail[tail > 0]
    if len(tail) < 2:
        raise ValueError("residual tail too short")
    return float((tail[-1] / tail[0]) ** (1.0 / (len(tail) - 1)))


def contraction_report(scheme: Scheme, K: KOperator, config: PdhgConfig, run: Solution) -> ContractionReport:
    if not scheme.is_linear:
        raise ValueError("contraction analysis needs a linear scheme")
    if len(run.residual_history) < 21:
        raise ValueError("need at least 20 recorded iterations")
    nus = nu_spectrum(scheme, K, run.grid)
    positive = nus[nus > 1e-12 * nus.max()]
    pred = float(predicted_modulus(config.tau_u, config.tau_phi, positive.min()))
    return ContractionReport(float(nus.max()), float(positive.min()), pred, observed_factor(run.residual_history))


# ---------------------------------------------------------------------------
# problem-level entry points


def make_scheme(problem: ProblemSpec, grid: SpaceTimeGrid, time=None, space=None) -> Scheme:
    """Scheme for ``problem`` (preset choices unless ``time``/``space`` given).

    A monotonicity shift is folded into the flux when the initial data need one.
    """
    preset = preset_for(problem)
    space = SpaceScheme(space or preset.space)
    gamma_half = None
    flux = problem.flux
    if space is SpaceScheme.FD_HEAT:
        gamma_half = problem.gamma(grid.x_min + (np.arange(grid.nx) + 0.5) * grid.hx) * np.ones(grid.nx)
    else:
        u0 = project_initial(problem.u0, grid, space.layout)
        s = monotonicity_shift(flux, u0)
        if s > flux.shift:
            flux = replace(flux, shift=s)
    return Scheme(TimeScheme(time or preset.time), space, flux, gamma_half)


def make_K(problem: ProblemSpec, scheme: Scheme, grid: SpaceTimeGrid, kind=None, coeff=None,
           with_history: bool = False, closure: str = "gram") -> KOperator:
    preset = preset_for(problem)
    kind = kind or preset.k_kind
    if coeff is None:
        coeff = preset.k_coeff if kind == "nonlinear" else scheme.flux.linear_coefficient
    gamma_hat = estimate_gamma_hat(problem.gamma, grid) if problem.viscous else 0.0
    return build_K(kind, coeff, gamma_hat, grid, scheme.layout, closure, scheme.time.value, with_history)


def default_config(problem: ProblemSpec, **overrides) -> PdhgConfig:
    p = preset_for(problem)
    kw = dict(tau_u=p.tau_u, tau_phi=p.tau_phi, tau_lambda=p.tau_lambda, tau_u0=p.tau_u0)
    kw.update(overrides)
    return PdhgConfig(**kw)


def solve(problem: ProblemSpec, grid: SpaceTimeGrid, scheme: Optional[Scheme] = None,
          config: Optional[PdhgConfig] = None, K: Optional[KOperator] = None,
          state: Optional[PdhgState] = None, history=None, callback=None) -> Solution:
    """Primal-dual solve of ``problem`` on ``grid``; a cold start unless ``state`` is given."""
    scheme = scheme or make_scheme(problem, grid)
    config = config or default_config(problem)
    K = K or make_K(problem, scheme, grid, with_history=history is not None)
    u0 = project_initial(problem.u0, grid, scheme.layout)
    sol = run_pdhg(scheme, K, config, u0, state, history, callback)
    sol.info.update(problem=problem.name, shift=scheme.flux.shift, tau=(config.tau_u, config.tau_phi,
                    config.tau_lambda, config.tau_u0), eps=config.eps)
    return sol


def unshift(u: np.ndarray, grid: SpaceTimeGrid, shift: float) -> np.ndarray:
    """Undo a monotonicity shift: ``u(x, t) = v(x + s t, t)`` by periodic linear interpolation."""
    if shift == 0:
        return u.copy()
    layout = layout_of(u)
    x = grid.nodes(layout).ravel()
    order = np.argsort(x)
    xs = x[order]
    out = np.empty_like(u)
    for l, t in enumerate(grid.times):
        v = u[l].ravel()[order]
        xq = grid.x_min + np.mod(x + shift * t - grid.x_min, grid.length)
        out[l] = np.interp(xq, xs, v, period=grid.length).reshape(u[l].shape)
    return out
