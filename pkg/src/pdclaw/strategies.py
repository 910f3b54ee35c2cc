"""Coarse-to-fine refinement in time, the one-timestep marching solver, and cost accounting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .grid import SpaceTimeGrid, make_grid, project_initial
from .operators import Scheme, TimeScheme
from .pdhg import (DivergenceError, PdhgConfig, PdhgState, Solution, default_config, make_K, make_scheme,
                   residual, run_pdhg, solve)
from .problems import ProblemSpec

log = logging.getLogger(__name__)


def _interp_midpoints(f: np.ndarray) -> np.ndarray:
    out = np.empty((2 * f.shape[0] - 1,) + f.shape[1:])
    out[::2] = f
    out[1::2] = 0.5 * (f[:-1] + f[1:])
    return out


def refine_in_time(sol: Solution, grid: Optional[SpaceTimeGrid] = None) -> tuple[PdhgState, SpaceTimeGrid]:
    """Warm start on ``2*nt`` steps: coincident levels copied, midpoints linear, ``lam`` unchanged."""
    grid = grid or sol.grid
    if sol.u.shape[0] != grid.nt + 1:
        raise ValueError(f"solution has {sol.u.shape[0]} levels, grid has {grid.nt + 1}")
    fine = grid.with_time(grid.T, 2 * grid.nt)
    state = PdhgState.warm(_interp_midpoints(sol.u), _interp_midpoints(sol.phi), sol.lam)
    return state, fine


@dataclass
class RefinementPlan:
    """Levels ``nt = 2**start .. 2**m0``.

    Non-final levels run exactly ``coarse_iters`` sweeps (or stop at ``eps`` when
    ``coarse_stop_at_eps``); the final level runs to the tolerance of the config.
    """

    m0: int
    start: int = 0
    coarse_iters: int = 1000
    coarse_stop_at_eps: bool = False

    def __post_init__(self):
        if self.m0 < 0 or not 0 <= self.start <= self.m0:
            raise ValueError(f"need 0 <= start <= m0, got start={self.start}, m0={self.m0}")
        if self.coarse_iters < 0:
            raise ValueError("coarse_iters must be nonnegative")

    @property
    def levels(self) -> list[int]:
        return [2**k for k in range(self.start, self.m0 + 1)]


@dataclass
class LevelRecord:
    nt: int
    iterations: int
    converged: bool
    start_residual: tuple
    cold_residual: tuple


def solve_with_refinement(problem: ProblemSpec, grid: SpaceTimeGrid, plan: RefinementPlan,
                          config: Optional[PdhgConfig] = None, time_scheme=None) -> Solution:
    """Solve on ``nt = 2**m0`` after warm-starting from every coarser level of ``plan``.

    ``grid`` fixes space and horizon; its ``nt`` is ignored.
    """
    config = config or default_config(problem)
    ledger: list[LevelRecord] = []
    sol = state = None
    for i, nt in enumerate(plan.levels):
        g = grid.with_time(grid.T, nt)
        if sol is not None:
            state, g = refine_in_time(sol)
        final = i == len(plan.levels) - 1
        scheme = make_scheme(problem, g, time=time_scheme)
        if scheme.time is TimeScheme.BDF2 and nt < 2:
            scheme = scheme.with_time(TimeScheme.BE)
        if final:
            cfg = config
        else:
            cfg = replace(config, max_iter=plan.coarse_iters,
                          eps=config.eps if plan.coarse_stop_at_eps else np.finfo(float).tiny)
        cold = residual(PdhgState.initial(project_initial(problem.u0, g, scheme.layout), nt).u,
                        np.zeros((nt + 1, g.nx, scheme.layout.ndof)), scheme, g)
        try:
            sol = solve(problem, g, scheme, cfg, state=state)
        except DivergenceError as exc:
            raise DivergenceError(f"level nt={nt}: {exc}", exc.iteration, exc.index) from exc
        start = tuple(float(r) for r in sol.residual_history[0])
        ledger.append(LevelRecord(nt, sol.iterations, sol.converged, start, tuple(float(r) for r in cold)))
        log.info("refinement level nt=%d: %d iterations", nt, sol.iterations)
    sol.info["levels"] = ledger
    sol.info["ledger"] = [(r.iterations, r.nt + 1) for r in ledger]
    sol.info["strategy"] = "refine"
    return sol


def solve_one_timestep(problem: ProblemSpec, grid: SpaceTimeGrid, config: Optional[PdhgConfig] = None,
                       scheme: Optional[Scheme] = None) -> Solution:
    """March ``l = 0..nt-1`` solving one implicit step per window of two time levels.

    Each window starts from the constant extension of the current slice.  BDF2
    windows after the first carry the previous slice as history.
    """
    config = replace(config or default_config(problem), per_slice=True)
    scheme = scheme or make_scheme(problem, grid)
    win = make_grid(grid.x_min, grid.x_max, grid.nx, grid.ht, 1)
    be = scheme.with_time(TimeScheme.BE)
    K_be = make_K(problem, be, win)
    K_hist = make_K(problem, scheme, win, with_history=True) if scheme.time is TimeScheme.BDF2 else None

    u = np.empty((grid.nt + 1, grid.nx, scheme.layout.ndof))
    phi = np.zeros_like(u)
    u[0] = project_initial(problem.u0, grid, scheme.layout)
    counts, hist, lam, converged = [], [], None, True
    for l in range(grid.nt):
        use_hist = K_hist is not None and l > 0
        sch, K = (scheme, K_hist) if use_hist else (be, K_be)
        state = PdhgState.initial(u[l], 1)
        try:
            sol = run_pdhg(sch, K, config, u[l], state, u[l - 1] if use_hist else None)
        except DivergenceError as exc:
            raise DivergenceError(f"window l={l}: {exc}", exc.iteration, exc.index) from exc
        u[l + 1] = sol.u[1]
        phi[l] = sol.phi[0]
        if lam is None:
            lam = sol.lam
        counts.append(sol.iterations)
        hist.append(sol.residual_history)
        converged &= sol.converged
    info = {"window_iterations": counts, "ledger": [(n, 2) for n in counts], "strategy": "one-timestep"}
    return Solution(u, phi, lam, int(sum(counts)), converged, np.concatenate(hist), grid, scheme, info)


# ---------------------------------------------------------------------------
# cost accounting


@dataclass
class CostRow:
    method: str
    iterations: int
    world_time: int
    operation_coefficient: int  # operations per spatial index
    nx: Optional[int] = None

    @property
    def operation_count(self) -> int:
        return self.operation_coefficient * (self.nx or 1)

    def operations_text(self) -> str:
        return str(self.operation_count) if self.nx else f"{self.operation_coefficient}N"


@dataclass
class CostTable:
    rows: list = field(default_factory=list)

    def row(self, method: str) -> CostRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def as_text(self) -> str:
        lines = [f"{'method':<14}{'iterations':>12}{'world time':>12}{'operations':>14}"]
        for r in self.rows:
            lines.append(f"{r.method:<14}{r.iterations:>12}{r.world_time:>12}{r.operations_text():>14}")
        return "\n".join(lines)


def cost_row(method: str, ledger, nx: Optional[int] = None) -> CostRow:
    """One unit per (space-time index, sweep): ``sum(iterations * active slices)`` per spatial index.

    ``ledger`` lists ``(iterations, active time slices)`` for every PDHG solve of
    the run, in execution order.  Solves run one after another, so the world
    time is the total number of sweeps.
    """
    ledger = [(int(n), int(s)) for n, s in ledger]
    total = sum(n for n, _ in ledger)
    return CostRow(method, total, total, sum(n * s for n, s in ledger), nx)


def solution_ledger(sol: Solution) -> list:
    return sol.info.get("ledger") or [(sol.iterations, sol.grid.nt + 1)]


def cost_report(runs, numeric_n: bool = False) -> CostTable:
    """``runs`` is a sequence of ``(method, Solution)`` pairs on one problem."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs to report")
    return CostTable([cost_row(m, solution_ledger(s), s.grid.nx if numeric_n else None) for m, s in runs])
