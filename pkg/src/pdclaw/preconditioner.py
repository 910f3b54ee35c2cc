"""The G-prox metric operator ``K`` and its fast inverse.

``K = Kt (x) I + I (x) Kx`` acts on dual fields restricted to the ``nt`` slices
``l = 0..nt-1``.  ``Kx = c^2 (-Dxx) + gamma_hat^2 Dxx^2`` is circulant on the
uniform spatial dof grid (spacing ``hx/ndof``), so it is diagonalized by the FFT.
``Kt`` is a discrete ``-d^2/dt^2`` with one of three closures:

``gram`` (default)
    ``Kt = B B^T / ht^2`` where ``ht^{-1} B`` is the time stencil of the scheme on
    the free levels ``u^1..u^nt``.  For backward Euler this is the three-point
    stencil with a Neumann row at ``l = 0`` and a Dirichlet row at ``l = nt - 1``
    (from ``phi^{nt} = 0``); for BDF2 it also carries the start-up step.
``terminal``
    the backward Euler stencil above, whatever the time scheme.
``neumann``
    homogeneous Neumann at both ends, diagonalized by the DCT-II.  Constant
    fields are in the kernel when ``Kx`` has a zero mode; that mode is deflated.

``gram`` and ``terminal`` are positive definite and are diagonalized through a
small dense ``nt x nt`` eigenbasis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft
import scipy.linalg

from .grid import Layout, SpaceTimeGrid

CLOSURES = ("gram", "neumann", "terminal")
_KERNEL_TOL = 1e-12


@dataclass(frozen=True)
class KOperator:
    kind: str  # "linear" or "nonlinear"; both share the same stencil family
    coeff: float
    gamma_hat: float
    grid: SpaceTimeGrid
    layout: Layout
    closure: str = "gram"
    time_scheme: str = "be"
    with_history: bool = False  # BDF2 window whose first row is already a BDF2 row

    @property
    def nt(self) -> int:
        return self.grid.nt

    @property
    def m(self) -> int:
        return self.grid.nx * self.layout.ndof

    @property
    def dx(self) -> float:
        return self.grid.hx / self.layout.ndof

    @cached_property
    def space_symbol(self) -> np.ndarray:
        k = np.arange(self.m)
        s = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / self.m)) / self.dx**2
        return self.coeff**2 * s + self.gamma_hat**2 * s**2

    @cached_property
    def time_matrix(self) -> np.ndarray:
        n, h2 = self.nt, self.grid.ht**2
        if self.closure == "gram":
            B = time_stencil_matrix(n, self.time_scheme, self.with_history)
            return B @ B.T / h2
        Kt = np.zeros((n, n))
        if n == 1:
            Kt[0, 0] = 0.0 if self.closure == "neumann" else 1.0
            return Kt / h2
        i = np.arange(n)
        Kt[i, i] = 2.0
        Kt[i[:-1], i[:-1] + 1] = -1.0
        Kt[i[1:], i[1:] - 1] = -1.0
        Kt[0, 0] = 1.0
        if self.closure == "neumann":
            Kt[-1, -1] = 1.0
        return Kt / h2

    @cached_property
    def _time_eig(self):
        if self.closure == "neumann":
            lam = (2.0 - 2.0 * np.cos(np.pi * np.arange(self.nt) / self.nt)) / self.grid.ht**2
            return lam, None
        return np.linalg.eigh(self.time_matrix)

    @property
    def time_symbol(self) -> np.ndarray:
        return self._time_eig[0]

    @cached_property
    def symbol(self) -> np.ndarray:
        """Eigenvalues of ``K`` on the (time mode, space frequency) grid."""
        return self.time_symbol[:, None] + self.space_symbol[None, :]

    # -- transforms ----------------------------------------------------------

    def _flat(self, f: np.ndarray) -> np.ndarray:
        return f.reshape(self.nt, self.m)

    def _to_modes(self, f2: np.ndarray) -> np.ndarray:
        lam, V = self._time_eig
        g = scipy.fft.dct(f2, type=2, axis=0, norm="ortho") if V is None else V.T @ f2
        return np.fft.fft(g, axis=1)

    def _from_modes(self, c: np.ndarray) -> np.ndarray:
        lam, V = self._time_eig
        g = np.fft.ifft(c, axis=1).real
        return scipy.fft.idct(g, type=2, axis=0, norm="ortho") if V is None else V @ g

    # -- operator actions ----------------------------------------------------

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``K f`` by direct stencils (no transforms)."""
        f2 = self._flat(f)
        out = self.time_matrix @ f2
        dxx = (np.roll(f2, -1, axis=1) - 2.0 * f2 + np.roll(f2, 1, axis=1)) / self.dx**2
        if self.coeff != 0:
            out = out - self.coeff**2 * dxx
        if self.gamma_hat != 0:
            d4 = (np.roll(dxx, -1, axis=1) - 2.0 * dxx + np.roll(dxx, 1, axis=1)) / self.dx**2
            out = out + self.gamma_hat**2 * d4
        return out.reshape(f.shape)

    @cached_property
    def kernel_mask(self) -> np.ndarray:
        return self.symbol <= _KERNEL_TOL * max(1.0, float(self.symbol.max()))

    def deflate(self, f: np.ndarray) -> np.ndarray:
        """Remove the kernel component of ``f``."""
        if not self.kernel_mask.any():
            return f
        c = self._to_modes(self._flat(f))
        c[self.kernel_mask] = 0.0
        return self._from_modes(c).reshape(f.shape)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Spectral solve of ``K z = rhs`` on the kernel-free subspace."""
        c = self._to_modes(self._flat(rhs))
        sym = np.where(self.kernel_mask, 1.0, self.symbol)
        c = np.where(self.kernel_mask, 0.0, c / sym)
        return self._from_modes(c).reshape(rhs.shape)

    def dense(self) -> np.ndarray:
        """Dense matrix of ``K`` in the flattened (time-major) ordering."""
        m = self.m
        e = np.eye(m)
        dxx = (np.roll(e, -1, axis=1) - 2.0 * e + np.roll(e, 1, axis=1)) / self.dx**2
        Kx = -self.coeff**2 * dxx + self.gamma_hat**2 * (dxx @ dxx)
        return np.kron(self.time_matrix, np.eye(m)) + np.kron(np.eye(self.nt), Kx)


def time_stencil_matrix(nt: int, time_scheme: str = "be", with_history: bool = False) -> np.ndarray:
    """Scaled time stencil ``ht * B`` mapping free levels ``u^1..u^nt`` to residual rows ``0..nt-1``."""
    B = np.zeros((nt, nt))
    i = np.arange(nt)
    B[i, i] = 1.0
    B[i[1:], i[1:] - 1] = -1.0
    if time_scheme == "bdf2":
        first = 0 if with_history else 1
        B[i[first:], i[first:]] = 1.5
        B[i[1:], i[1:] - 1] = np.where(i[1:] >= first, -2.0, -1.0)
        B[i[2:], i[2:] - 2] = 0.5
    elif time_scheme != "be":
        raise ValueError(f"unknown time scheme {time_scheme!r}")
    return B


def estimate_gamma_hat(gamma, grid: SpaceTimeGrid) -> float:
    """Constant stand-in for ``gamma(x)``: its maximum over the half points."""
    if gamma is None:
        return 0.0
    xh = grid.x_min + (np.arange(grid.nx) + 0.5) * grid.hx
    g = np.asarray(gamma(xh), dtype=float) * np.ones_like(xh)
    if np.any(g < 0):
        raise ValueError("gamma must be nonnegative")
    return float(g.max())


def build_K(kind: str, coeff: float, gamma_hat: float, grid: SpaceTimeGrid, layout: Layout = Layout.FD,
            closure: str = "gram", time_scheme: str = "be",
            with_history: bool = False) -> KOperator:
    if kind not in ("linear", "nonlinear"):
        raise ValueError(f"unknown K kind {kind!r}")
    if closure not in CLOSURES:
        raise ValueError(f"unknown time closure {closure!r}")
    if gamma_hat < 0:
        raise ValueError("gamma_hat must be nonnegative")
    if kind == "nonlinear":
        gamma_hat = 0.0
    return KOperator(kind, float(coeff), float(gamma_hat), grid, Layout(layout), closure,
                     str(getattr(time_scheme, "value", time_scheme)), bool(with_history))


def solve_K(K: KOperator, rhs: np.ndarray) -> np.ndarray:
    return K.solve(rhs)


MAX_DIRECT_UNKNOWNS = 10_000


def solve_K_direct(K: KOperator, rhs: np.ndarray) -> np.ndarray:
    """Dense Cholesky solve of the deflated system; verification path for :func:`solve_K`."""
    n = K.nt * K.m
    if n > MAX_DIRECT_UNKNOWNS:
        raise ValueError(f"{n} unknowns exceed the direct-solve guard of {MAX_DIRECT_UNKNOWNS}")
    Kd = K.dense()
    b = rhs.reshape(n)
    w, V = np.linalg.eigh(Kd)
    null = V[:, w <= _KERNEL_TOL * max(1.0, w.max()) * 10]
    if null.shape[1]:
        # K + P_null is SPD and maps the kernel-free solution onto the deflated rhs
        b = b - null @ (null.T @ b)
        Kd = Kd + null @ null.T
    z = scipy.linalg.solve(Kd, b, assume_a="pos")
    return z.reshape(rhs.shape)
