"""Implicit time stepping of 1-D conservation laws as preconditioned primal-dual saddle problems."""

from .grid import Layout, SpaceTimeGrid, inner_product, make_grid, norm, project_initial
from .operators import FluxSpec, Scheme, SpaceScheme, TimeScheme, apply_A, apply_AT, monotonicity_shift
from .preconditioner import KOperator, build_K, estimate_gamma_hat, solve_K, solve_K_direct
from .pdhg import (ContractionReport, DivergenceError, PdhgConfig, PdhgState, Solution, StepSizeError,
                   contraction_report, default_config, estimate_nu_max, make_K, make_scheme, pdhg_iterate,
                   residual, solve)
from .problems import (ProblemSpec, analytic_transport, convergence_order, get_problem, heat_problem, l2_error,
                       traffic_problem, transport_problem)
from .strategies import RefinementPlan, cost_report, refine_in_time, solve_one_timestep, solve_with_refinement

__version__ = "0.1.0"
