"""Discrete forward operators and their transposes.

Everything is written for the residual form

    A(u)^l = (time stencil of u)^l - F(u^{l+1}),    l = 0 .. nt-1

where ``du/dt = F(u)`` is the semi-discrete spatial scheme.  The dual residual
``D(phi)^l`` (l = 1 .. nt) is minus the weighted gradient of ``<phi, A(u)>``
with respect to ``u^l``, which for backward Euler reads

    (phi^l - phi^{l-1}) / ht + J(u^l)^T phi^{l-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .grid import Layout, SpaceTimeGrid, dof_weight, periodic_shift


class TimeScheme(str, Enum):
    BE = "be"
    BDF2 = "bdf2"


class SpaceScheme(str, Enum):
    FD_HEAT = "fd_heat"
    DG_LINEAR = "dg_linear"
    DG_QUADRATIC = "dg_quadratic"

    @property
    def layout(self) -> Layout:
        return Layout.FD if self is SpaceScheme.FD_HEAT else Layout.DG2


@dataclass(frozen=True)
class FluxSpec:
    """``f(u) = alpha*u**2 + beta*u`` (quadratic) or ``f(u) = alpha*u`` (linear)."""

    kind: str = "linear"
    alpha: float = 0.0
    beta: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise ValueError(f"unknown flux kind {self.kind!r}")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")

    def f(self, u):
        if self.kind == "linear":
            return self.alpha * u
        return self.alpha * u * u + self.beta * u

    def df(self, u):
        if self.kind == "linear":
            return self.alpha * np.ones_like(np.asarray(u, dtype=float))
        return 2.0 * self.alpha * u + self.beta

    @property
    def linear_coefficient(self) -> float:
        """Coefficient of ``u`` in the shifted flux ``f(u) + s*u``."""
        base = self.alpha if self.kind == "linear" else self.beta
        return base + self.shift

    @property
    def quadratic_coefficient(self) -> float:
        return 0.0 if self.kind == "linear" else self.alpha


def dg_linear_matrices(alpha: float, hx: float) -> tuple[np.ndarray, np.ndarray]:
    """Upwind DG blocks with ``du_j/dt = A1 u_j + A2 u_{j-1}``."""
    A1 = (alpha / hx) * np.array([[-7.0, -3.0], [11.0, -9.0]]) / 4.0
    A2 = (alpha / hx) * np.array([[-5.0, 15.0], [1.0, -3.0]]) / 4.0
    return A1, A2


def dg_quadratic_matrices(alpha: float, beta: float, hx: float) -> np.ndarray:
    """The nine 2x2 blocks C1..C9 of the quadratic-flux DG scheme, stacked ``(9, 2, 2)``."""
    P = np.array([[1.0, -3.0], [-3.0, 9.0]])
    C = np.zeros((9, 2, 2))
    C[0] = 5.0 * alpha / (8.0 * hx) * P
    C[1] = -alpha / (8.0 * hx) * P
    C[2] = -alpha / (8.0 * hx) * np.array([[13.0, 1.0], [1.0, 5.0]])
    C[3] = alpha / (8.0 * hx) * np.array([[9.0, 13.0], [13.0, -31.0]])
    C[6] = beta / (4.0 * hx) * np.array([[-5.0, 15.0], [1.0, -3.0]])
    C[7] = beta / (4.0 * hx) * np.array([[-7.0, -3.0], [11.0, -9.0]])
    return C


@dataclass
class Scheme:
    """A full space-time discretization choice.

    ``gamma_half[j]`` samples the viscosity at ``x_j + hx/2`` and is only used
    by the finite-difference heat scheme.
    """

    time: TimeScheme = TimeScheme.BE
    space: SpaceScheme = SpaceScheme.FD_HEAT
    flux: FluxSpec = field(default_factory=FluxSpec)
    gamma_half: Optional[np.ndarray] = None

    def __post_init__(self):
        self.time = TimeScheme(self.time)
        self.space = SpaceScheme(self.space)
        if self.space is SpaceScheme.FD_HEAT:
            if self.gamma_half is None:
                raise ValueError("fd_heat needs gamma samples at half points")
            self.gamma_half = np.asarray(self.gamma_half, dtype=float)
            if np.any(self.gamma_half <= 0):
                raise ValueError("fd_heat requires gamma > 0 at every half point")
        elif self.space is SpaceScheme.DG_LINEAR and self.flux.kind != "linear":
            raise ValueError("dg_linear needs a linear flux")
        elif self.space is SpaceScheme.DG_QUADRATIC and self.flux.kind != "quadratic":
            raise ValueError("dg_quadratic needs a quadratic flux")

    @property
    def layout(self) -> Layout:
        return self.space.layout

    @property
    def is_linear(self) -> bool:
        return self.space is not SpaceScheme.DG_QUADRATIC

    def with_time(self, time: TimeScheme) -> "Scheme":
        return replace(self, time=TimeScheme(time))


# ---------------------------------------------------------------------------
# spatial operators, vectorized over any leading (time) axes


def lap_fd(v: np.ndarray, gamma_half: np.ndarray, hx: float) -> np.ndarray:
    """Variable-coefficient central second difference on the periodic FD grid."""
    g = gamma_half[:, None]
    gm = np.roll(gamma_half, 1)[:, None]
    vp = periodic_shift(v, 1)
    vm = periodic_shift(v, -1)
    return (g * (vp - v) - gm * (v - vm)) / hx**2


def dg_linear_rhs(u: np.ndarray, alpha: float, hx: float) -> np.ndarray:
    A1, A2 = dg_linear_matrices(alpha, hx)
    return u @ A1.T + periodic_shift(u, -1) @ A2.T


def dg_linear_rhs_T(phi: np.ndarray, alpha: float, hx: float) -> np.ndarray:
    A1, A2 = dg_linear_matrices(alpha, hx)
    return phi @ A1 + periodic_shift(phi, 1) @ A2


def _quad(u: np.ndarray, Ca: np.ndarray, Cb: np.ndarray) -> np.ndarray:
    return np.stack([np.einsum("...i,ij,...j->...", u, Ca, u), np.einsum("...i,ij,...j->...", u, Cb, u)], axis=-1)


def dg_quadratic_rhs(u: np.ndarray, alpha: float, beta: float, hx: float) -> np.ndarray:
    C = dg_quadratic_matrices(alpha, beta, hx)
    um = periodic_shift(u, -1)
    up = periodic_shift(u, 1)
    return (
        _quad(um, C[0], C[1])
        + _quad(u, C[2], C[3])
        + _quad(up, C[4], C[5])
        + um @ C[6].T
        + u @ C[7].T
        + up @ C[8].T
    )


def dg_quadratic_rhs_T(u: np.ndarray, phi: np.ndarray, alpha: float, beta: float, hx: float) -> np.ndarray:
    """Exact ``J(u)^T phi`` for the quadratic DG right-hand side."""
    C = dg_quadratic_matrices(alpha, beta, hx)

    def weighted(p, Ca, Cb):
        # 2 * (p_1 Ca + p_2 Cb) u, using the symmetry of the C blocks
        return 2.0 * (p[..., :1] * (u @ Ca) + p[..., 1:] * (u @ Cb))

    p_next = periodic_shift(phi, 1)
    p_prev = periodic_shift(phi, -1)
    return (
        weighted(p_next, C[0], C[1])
        + p_next @ C[6]
        + weighted(phi, C[2], C[3])
        + phi @ C[7]
        + weighted(p_prev, C[4], C[5])
        + p_prev @ C[8]
    )


def spatial_rhs(u: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid) -> np.ndarray:
    """``F(u)`` of the semi-discrete system ``du/dt = F(u)``."""
    fl = scheme.flux
    if scheme.space is SpaceScheme.FD_HEAT:
        out = lap_fd(u, scheme.gamma_half, grid.hx)
        if fl.linear_coefficient != 0:
            raise ValueError("fd_heat carries no advective flux")
        return out
    if scheme.space is SpaceScheme.DG_LINEAR:
        return dg_linear_rhs(u, fl.linear_coefficient, grid.hx)
    return dg_quadratic_rhs(u, fl.quadratic_coefficient, fl.linear_coefficient, grid.hx)


def spatial_rhs_T(u: np.ndarray, phi: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid) -> np.ndarray:
    """``J(u)^T phi`` where ``J`` is the Jacobian of ``F`` (``u`` ignored when linear)."""
    fl = scheme.flux
    if scheme.space is SpaceScheme.FD_HEAT:
        return lap_fd(phi, scheme.gamma_half, grid.hx)
    if scheme.space is SpaceScheme.DG_LINEAR:
        return dg_linear_rhs_T(phi, fl.linear_coefficient, grid.hx)
    return dg_quadratic_rhs_T(u, phi, fl.quadratic_coefficient, fl.linear_coefficient, grid.hx)


# ---------------------------------------------------------------------------
# time stencils


def _time_coefficients(nt: int, scheme: Scheme, ht: float, history: Optional[np.ndarray]):
    """Coefficients (a, b, c) with ``(T u)^k = a_k u^{k+1} + b_k u^k + c_k u^{k-1}``."""
    a = np.full(nt, 1.0 / ht)
    b = np.full(nt, -1.0 / ht)
    c = np.zeros(nt)
    if scheme.time is TimeScheme.BDF2:
        if nt < 2 and history is None:
            raise ValueError("BDF2 needs nt >= 2 (or a history slice)")
        first = 0 if history is not None else 1
        a[first:] = 1.5 / ht
        b[first:] = -2.0 / ht
        c[first:] = 0.5 / ht
    return a, b, c


def time_difference(u: np.ndarray, scheme: Scheme, ht: float, history=None) -> np.ndarray:
    nt = u.shape[0] - 1
    a, b, c = _time_coefficients(nt, scheme, ht, history)
    out = a[:, None, None] * u[1:] + b[:, None, None] * u[:-1]
    out[1:] += c[1:, None, None] * u[:-2]
    if history is not None and c[0] != 0:
        out[0] += c[0] * history
    return out


def time_difference_T(phi: np.ndarray, scheme: Scheme, ht: float, history=None) -> np.ndarray:
    """Transpose of the linear part of :func:`time_difference`.

    ``phi`` holds ``nt`` slices (one per residual row); the result holds ``nt+1``.
    """
    nt = phi.shape[0]
    a, b, c = _time_coefficients(nt, scheme, ht, history)
    out = np.zeros((nt + 1,) + phi.shape[1:])
    out[1:] += a[:, None, None] * phi
    out[:-1] += b[:, None, None] * phi
    out[:-2] += c[1:, None, None] * phi[1:]
    return out


# ---------------------------------------------------------------------------
# assembled space-time operators


def apply_A(u: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid, history=None) -> np.ndarray:
    """Primal residual of the implicit scheme, ``nt`` slices for ``l = 0..nt-1``.

    ``history`` is a fixed slice preceding ``u^0`` (BDF2 windows only).
    """
    if u.shape[0] != grid.nt + 1:
        raise ValueError(f"u has {u.shape[0]} levels, grid expects {grid.nt + 1}")
    return time_difference(u, scheme, grid.ht, history) - spatial_rhs(u[1:], scheme, grid)


def apply_AT(phi: np.ndarray, u: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid, history=None) -> np.ndarray:
    """Dual residual ``D(phi)^l`` for ``l = 1..nt`` (``phi`` has ``nt+1`` slices)."""
    if phi.shape != u.shape:
        raise ValueError(f"phi {phi.shape} and u {u.shape} do not match")
    if phi.shape[-1] != scheme.layout.ndof:
        raise ValueError("field layout does not match the scheme")
    tt = time_difference_T(phi[:-1], scheme, grid.ht, history)
    out = -tt[1:] + spatial_rhs_T(u[1:], phi[:-1], scheme, grid)
    out[-1] += phi[-1] / grid.ht
    return out


def initial_gradient(phi: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid, history=None) -> np.ndarray:
    """Weighted gradient of ``-<phi, A(u)>`` with respect to ``u^0``.

    Equals ``phi^0`` for backward Euler.
    """
    tt0 = time_difference_T(phi[:-1], scheme, grid.ht, history)[0]
    return -grid.ht * tt0


def boundary_term(u: np.ndarray, phi: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid, history=None) -> float:
    """Boundary row of the summation-by-parts identity.

    ``<A(u), phi> = -<u, D(phi)> + boundary_term`` for linear schemes, with
    ``boundary = sum_j w (phi^nt u^nt - g0(phi) u^0)``.
    """
    w = dof_weight(grid, scheme.layout)
    g0 = initial_gradient(phi, scheme, grid, history)
    return float(w * (np.sum(phi[-1] * u[-1]) - np.sum(g0 * u[0])))


def lagrangian(u: np.ndarray, phi: np.ndarray, scheme: Scheme, grid: SpaceTimeGrid, history=None) -> float:
    """``L(u, phi) = ht * sum_l sum_j w phi^l_j A(u)^l_j`` over ``l = 0..nt-1``."""
    w = dof_weight(grid, scheme.layout)
    return float(grid.ht * w * np.sum(phi[:-1] * apply_A(u, scheme, grid, history)))


def monotonicity_shift(flux: FluxSpec, u0_samples) -> float:
    """Smallest ``s >= 0`` (with a 10% margin) making ``f'(u0) + s`` nonnegative."""
    u0_samples = np.asarray(u0_samples, dtype=float)
    if not np.all(np.isfinite(u0_samples)):
        raise ValueError("non-finite initial samples")
    m = float(np.min(flux.df(u0_samples)))
    return 0.0 if m >= 0 else 1.1 * (-m)
