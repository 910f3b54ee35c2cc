"""Uniform periodic space-time grids and the field layouts living on them.

A field is a plain ``ndarray`` of shape ``(n_levels, nx, ndof)``.  ``ndof`` is 1
for finite differences (one value per node ``x_j = x_min + j*hx``) and 2 for the
piecewise-linear DG layout (nodal values at the quarter points of each cell).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Layout(str, Enum):
    FD = "fd"
    DG2 = "dg2"

    @property
    def ndof(self) -> int:
        return 1 if self is Layout.FD else 2


@dataclass(frozen=True)
class SpaceTimeGrid:
    x_min: float
    x_max: float
    nx: int
    T: float
    nt: int

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def ht(self) -> float:
        return self.T / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.ht

    def nodes(self, layout: Layout) -> np.ndarray:
        """Physical coordinates of every spatial dof, shape ``(nx, ndof)``."""
        j = np.arange(self.nx, dtype=float)
        if layout is Layout.FD:
            return (self.x_min + j * self.hx)[:, None]
        centers = self.x_min + (j + 0.5) * self.hx
        return np.stack([centers - 0.25 * self.hx, centers + 0.25 * self.hx], axis=1)

    def with_time(self, T: float, nt: int) -> "SpaceTimeGrid":
        return make_grid(self.x_min, self.x_max, self.nx, T, nt)


def make_grid(x_min: float, x_max: float, nx: int, T: float, nt: int) -> SpaceTimeGrid:
    if int(nx) != nx or nx < 2:
        raise ValueError(f"nx must be an integer >= 2, got {nx}")
    if int(nt) != nt or nt < 1:
        raise ValueError(f"nt must be an integer >= 1, got {nt}")
    if not np.isfinite(x_min) or not np.isfinite(x_max) or x_max <= x_min:
        raise ValueError(f"need x_max > x_min, got [{x_min}, {x_max}]")
    if not np.isfinite(T) or T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    return SpaceTimeGrid(float(x_min), float(x_max), int(nx), float(T), int(nt))


def layout_of(field: np.ndarray) -> Layout:
    return Layout.FD if field.shape[-1] == 1 else Layout.DG2


def project_initial(u0, grid: SpaceTimeGrid, layout: Layout) -> np.ndarray:
    """Sample ``u0`` at the dofs of ``layout``; returns a spatial slice ``(nx, ndof)``."""
    x = grid.nodes(layout)
    values = np.asarray(u0(x), dtype=float) * np.ones_like(x)
    if not np.all(np.isfinite(values)):
        raise ValueError("initial condition produced non-finite values")
    return values


def dof_weight(grid: SpaceTimeGrid, layout: Layout) -> float:
    """Spatial quadrature weight carried by one dof."""
    return grid.hx / layout.ndof


def inner_product(a: np.ndarray, b: np.ndarray, grid: SpaceTimeGrid, time_weight: bool = True) -> float:
    """Discrete L2 inner product over all slices present in ``a`` and ``b``.

    Every entry carries the weight ``ht * hx / ndof``; with ``time_weight=False``
    the ``ht`` factor is dropped (norm on a single time level).
    """
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    w = dof_weight(grid, layout_of(a))
    if time_weight:
        w *= grid.ht
    return float(w * np.sum(a * b))


def norm(a: np.ndarray, grid: SpaceTimeGrid, time_weight: bool = True) -> float:
    return float(np.sqrt(max(inner_product(a, a, grid, time_weight), 0.0)))


def periodic_shift(v: np.ndarray, k: int) -> np.ndarray:
    """Return ``w`` with ``w[..., j, :] = v[..., j + k, :]`` (indices modulo nx)."""
    return np.roll(v, -k, axis=-2)
