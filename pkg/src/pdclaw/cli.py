"""Command-line entry point: ``pdclaw {solve,table1,table2,table3,figure-data,check}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .io import (ConfigError, RunConfig, config_hash, load_config, serialize_config, write_residual_csv,
                 write_solution_csv, write_table)
from .pdhg import DivergenceError, solve
from .strategies import RefinementPlan, solve_one_timestep, solve_with_refinement

log = logging.getLogger("pdclaw")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4

_FLAG_FIELDS = {
    "nx": "nx", "nt": "nt", "eps": "eps", "tau_u": "tau_u", "tau_phi": "tau_phi", "tau_lambda": "tau_lambda",
    "tau_u0": "tau_u0", "strategy": "strategy", "scheme": "scheme", "time_scheme": "time_scheme",
    "max_iters": "max_iters", "seed": "seed", "out": "out", "problem": "problem",
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--problem", help="heat, transport, transport_box or traffic")
    p.add_argument("--nx", type=int)
    p.add_argument("--nt", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--tau-u", dest="tau_u", type=float)
    p.add_argument("--tau-phi", dest="tau_phi", type=float)
    p.add_argument("--tau-lambda", dest="tau_lambda", type=float)
    p.add_argument("--tau-u0", dest="tau_u0", type=float)
    p.add_argument("--strategy", choices=("vanilla", "refine", "one-timestep"))
    p.add_argument("--scheme", choices=("fd_heat", "dg_linear", "dg_quadratic"))
    p.add_argument("--time-scheme", dest="time_scheme", choices=("be", "bdf2"))
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", help="exit 4 when a solve does not converge")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdclaw", description="Implicit conservation-law solves by primal-dual iterations")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run one configuration")
    _common(p)
    p = sub.add_parser("table1", help="heat iteration counts across meshes")
    _common(p)
    p.add_argument("--meshes", default="16x64,32x128,64x256,128x512", help="comma list of NTxN")
    p = sub.add_parser("table2", help="transport errors and convergence orders")
    _common(p)
    p.add_argument("--levels", default="5,6,7", help="comma list of k with h = 2^-k")
    p = sub.add_parser("table3", help="traffic cost comparison of the three strategies")
    _common(p)
    p = sub.add_parser("figure-data", help="solution and residual curves for the figures")
    _common(p)
    p = sub.add_parser("check", help="run the oracle validation suite")
    _common(p)
    return parser


def run_config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {f: getattr(args, a) for a, f in _FLAG_FIELDS.items() if getattr(args, a, None) is not None}
    try:
        return replace(cfg, **overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _meta(cfg: RunConfig, **extra) -> dict:
    m = {"config_hash": config_hash(cfg), "problem": cfg.problem, "grid": f"nx={cfg.nx} nt={cfg.nt}",
         "strategy": cfg.strategy}
    m.update(extra)
    return m


def cmd_solve(args) -> int:
    cfg = run_config_from_args(args)
    problem, grid = cfg.problem_spec(), cfg.grid()
    config = cfg.pdhg_config()
    if cfg.strategy == "vanilla":
        sol = solve(problem, grid, cfg.scheme_for(grid), config)
    elif cfg.strategy == "refine":
        plan = RefinementPlan(int(np.log2(cfg.nt)), cfg.refine_start, cfg.coarse_iters)
        sol = solve_with_refinement(problem, grid, plan, config, cfg.time_scheme)
    else:
        sol = solve_one_timestep(problem, grid, config, cfg.scheme_for(grid))
    out = Path(cfg.out)
    meta = _meta(cfg, tau=",".join(f"{t:.17g}" for t in (config.tau_u, config.tau_phi, config.tau_lambda,
                                                           config.tau_u0)),
                 eps=f"{config.eps:.17g}", iterations=sol.iterations, converged=sol.converged)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(serialize_config(cfg))
    write_solution_csv(sol.u, grid, out / "solution.csv", meta)
    write_residual_csv(sol.residual_history, out / "residuals.csv", meta=meta)
    status = "converged" if sol.converged else "NOT converged"
    print(f"{cfg.problem}: {status} after {sol.iterations} iterations; residual "
          f"({sol.residual_history[-1][0]:.3e}, {sol.residual_history[-1][1]:.3e}); wrote {out}")
    return EXIT_NOT_CONVERGED if (args.strict and not sol.converged) else EXIT_OK


def _parse_meshes(text: str):
    try:
        return [tuple(int(v) for v in m.lower().split("x")) for m in text.split(",")]
    except ValueError:
        raise ConfigError(f"--meshes: cannot parse {text!r}") from None


def cmd_table1(args) -> int:
    meshes = _parse_meshes(args.meshes)
    rows = ex.table1(meshes, max_iter=args.max_iters or 5000)
    out = Path(args.out or "out")
    eps_list = ex.TABLE1_EPS
    lines = [["nt", "nx", "ht_over_hx2"] + [f"iters_eps_{e:g}" for e in eps_list]]
    print(f"{'mesh':>10}" + "".join(f"{f'eps={e:g}':>12}" for e in eps_list) + f"{'ht/hx^2':>10}")
    for r in rows:
        lines.append([r.nt, r.nx, f"{r.parabolic_ratio:.17g}"] + [r.counts[e] for e in eps_list])
        print(f"{f'{r.nt}x{r.nx}':>10}" + "".join(f"{r.counts[e]:>12}" for e in eps_list) + f"{r.parabolic_ratio:>10.4g}")
    write_table(out / "table1.csv", lines[0], lines[1:], {"problem": "heat"})
    return _strict(args, all(r.converged for r in rows))


def cmd_table2(args) -> int:
    try:
        levels = [int(k) for k in args.levels.split(",")]
    except ValueError:
        raise ConfigError(f"--levels: cannot parse {args.levels!r}") from None
    res = ex.table2(levels, eps=args.eps or 1e-8)
    out = Path(args.out or "out")
    rows = []
    print(f"{'h':>10}{'error':>12}{'order':>10}{'iters':>8}{'CFL':>6}")
    for i, h in enumerate(res.h):
        order = res.orders[i - 1] if i else float("nan")
        rows.append([f"{h:.17g}", f"{res.errors[i]:.17g}", f"{order:.17g}", res.iterations[i], f"{res.cfl[i]:g}"])
        print(f"{h:>10.5g}{res.errors[i]:>12.4f}{order:>10.4f}{res.iterations[i]:>8}{res.cfl[i]:>6g}")
    write_table(out / "table2.csv", ["h", "error", "order", "iterations", "cfl"], rows, {"problem": "transport"})
    return _strict(args, all(n >= 0 for n in res.iterations))


def cmd_table3(args) -> int:
    table, runs = ex.table3(args.nx or 256, args.nt or 32, args.eps or 1e-3)
    out = Path(args.out or "out")
    print("measured\n" + table.as_text())
    print("published iteration counts through the same cost model\n" + ex.published_cost_table().as_text())
    rows = [[r.method, r.iterations, r.world_time, r.operation_coefficient] for r in table.rows]
    write_table(out / "table3.csv", ["method", "iterations", "world_time", "operations_per_N"], rows, {"problem": "traffic"})
    return _strict(args, all(s.converged for s in runs.values()))


def cmd_figure_data(args) -> int:
    out = Path(args.out or "out")
    ok = True
    for name in ex.FIGURES:
        sol, errors = ex.figure_run(name, args.eps)
        meta = {"figure": name, "iterations": sol.iterations, "converged": sol.converged}
        write_solution_csv(sol.u, sol.grid, out / f"{name}_solution.csv", meta)
        write_residual_csv(sol.residual_history, out / f"{name}_residuals.csv", errors, meta)
        print(f"{name}: {sol.iterations} iterations")
        ok &= sol.converged
    return _strict(args, ok)


def cmd_check(args) -> int:
    from .validation import run_checks

    results = run_checks()
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(p for _, p, _ in results) else EXIT_FAIL


def _strict(args, converged: bool) -> int:
    return EXIT_NOT_CONVERGED if (args.strict and not converged) else EXIT_OK


COMMANDS = {"solve": cmd_solve, "table1": cmd_table1, "table2": cmd_table2, "table3": cmd_table3,
            "figure-data": cmd_figure_data, "check": cmd_check}


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
