"""Run configurations (flat dotted ``key = value`` text) and CSV output."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import SpaceTimeGrid, layout_of, make_grid
from .pdhg import PdhgConfig, default_config, make_scheme
from .problems import PROBLEMS, ProblemSpec, get_problem

STRATEGIES = ("vanilla", "refine", "one-timestep")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "heat"
    T: Optional[float] = None
    nx: int = 16
    nt: int = 64
    time_scheme: Optional[str] = None
    scheme: Optional[str] = None
    tau_u: Optional[float] = None
    tau_phi: Optional[float] = None
    tau_lambda: Optional[float] = None
    tau_u0: Optional[float] = None
    eps: float = 1e-6
    max_iters: int = 10_000
    strategy: str = "vanilla"
    refine_start: int = 0
    coarse_iters: int = 1000
    out: str = "out"
    seed: int = 0
    overrides: dict = field(default_factory=dict)  # dotted problem keys, e.g. "problem.flux.alpha"

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown problem {self.problem!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy.name: expected one of {STRATEGIES}, got {self.strategy!r}")
        if self.nx < 2 or self.nt < 1:
            raise ConfigError("grid.nx must be >= 2 and grid.nt >= 1")
        if self.strategy == "refine" and self.nt & (self.nt - 1):
            raise ConfigError("grid.nt must be a power of two for the refine strategy")
        for key in self.overrides:
            if key.split(".")[:2] not in [["problem", k] for k in _PROBLEM_FIELDS]:
                raise ConfigError(f"unknown problem parameter {key!r}")
        try:
            self.problem_spec()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"problem parameters: {exc}") from None

    # -- resolution -----------------------------------------------------------

    def problem_spec(self) -> ProblemSpec:
        d = get_problem(self.problem).to_dict()
        for section in ("initial", "viscosity"):
            if f"problem.{section}.type" in self.overrides:
                d[section] = {}  # a new profile type brings its own parameters
        for key, value in self.overrides.items():
            path = key.split(".")[1:]
            target = d
            for part in path[:-1]:
                target = target[part]
            target[path[-1]] = value
        if self.T is not None:
            d["T"] = self.T
        return ProblemSpec.from_dict(d)

    def grid(self) -> SpaceTimeGrid:
        p = self.problem_spec()
        return make_grid(p.x_min, p.x_max, self.nx, p.T, self.nt)

    def pdhg_config(self) -> PdhgConfig:
        overrides = {k: getattr(self, k) for k in ("tau_u", "tau_phi", "tau_lambda", "tau_u0")
                     if getattr(self, k) is not None}
        return default_config(self.problem_spec(), eps=self.eps, max_iter=self.max_iters, **overrides)

    def scheme_for(self, grid: SpaceTimeGrid):
        return make_scheme(self.problem_spec(), grid, time=self.time_scheme, space=self.scheme)


_PROBLEM_FIELDS = ("x_min", "x_max", "flux", "initial", "viscosity")


def problem_overrides(spec: ProblemSpec) -> dict:
    """Every parameter of ``spec`` except name and horizon as dotted ``problem.*`` keys."""
    d = spec.to_dict()
    out = {"problem.x_min": d["x_min"], "problem.x_max": d["x_max"]}
    for section in ("flux", "initial", "viscosity"):
        out.update({f"problem.{section}.{k}": v for k, v in d[section].items()})
    return out


# dotted key -> attribute name
KEYS = {
    "problem.name": "problem",
    "problem.T": "T",
    "grid.nx": "nx",
    "grid.nt": "nt",
    "scheme.time": "time_scheme",
    "scheme.space": "scheme",
    "pdhg.tau_u": "tau_u",
    "pdhg.tau_phi": "tau_phi",
    "pdhg.tau_lambda": "tau_lambda",
    "pdhg.tau_u0": "tau_u0",
    "pdhg.eps": "eps",
    "pdhg.max_iters": "max_iters",
    "strategy.name": "strategy",
    "strategy.start": "refine_start",
    "strategy.coarse_iters": "coarse_iters",
    "run.out": "out",
    "run.seed": "seed",
}
_ATTR_KEY = {v: k for k, v in KEYS.items()}
_TYPES = {"T": float, "nx": int, "nt": int, "tau_u": float, "tau_phi": float, "tau_lambda": float,
          "tau_u0": float, "eps": float, "max_iters": int, "refine_start": int, "coarse_iters": int, "seed": int}


def _guess(raw: str):
    try:
        return float(raw)
    except ValueError:
        return raw


def _convert(attr: str, raw: str):
    kind = _TYPES.get(attr, str)
    if kind is int:
        v = float(raw)
        if v != int(v):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(v)
    return kind(raw)


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) on top of ``base``."""
    values = {f.name: getattr(base or RunConfig(), f.name) for f in fields(RunConfig)}
    values["overrides"] = dict(values["overrides"])
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.split(".")[:2] in [["problem", k] for k in _PROBLEM_FIELDS]:
            values["overrides"][key] = _guess(raw)
            continue
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown field {key!r}")
        attr = KEYS[key]
        try:
            values[attr] = None if raw in ("", "none") else _convert(attr, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"{_ATTR_KEY[f.name]} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(RunConfig) if f.name in _ATTR_KEY]
    lines += [f"{k} = {_fmt(v)}\n" for k, v in sorted(cfg.overrides.items())]
    return "".join(lines)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


def load_config(path, base: Optional[RunConfig] = None) -> RunConfig:
    return parse_config(Path(path).read_text(), base)


# ---------------------------------------------------------------------------
# CSV


def _num(v: float) -> str:
    return f"{float(v):.17g}"


def write_table(path, header: list[str], rows, meta: Optional[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_solution_csv(u: np.ndarray, grid: SpaceTimeGrid, path, meta: Optional[dict] = None):
    """Rows ``t, x, dof, u`` ordered by time level, then cell, then dof."""
    x = grid.nodes(layout_of(u))
    rows = ([_num(t), _num(x[j, d]), d, _num(u[l, j, d])]
            for l, t in enumerate(grid.times) for j in range(grid.nx) for d in range(u.shape[-1]))
    write_table(path, ["t", "x", "dof", "u"], rows, meta)


def write_residual_csv(history, path, errors=None, meta: Optional[dict] = None):
    history = np.asarray(history, dtype=float).reshape(-1, 2)
    header = ["iter", "res_primal", "res_dual"] + (["error_vs_reference"] if errors is not None else [])
    rows = []
    for i, (rp, rd) in enumerate(history):
        row = [i, _num(rp), _num(rd)]
        if errors is not None:
            row.append(_num(errors[i]))
        rows.append(row)
    write_table(path, header, rows, meta)


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Return ``(metadata, header, data)`` of a file written by this module."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        else:
            lines.append(line)
    header = lines[0].split(",")
    data = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return meta, header, data


def read_solution_csv(path, grid: SpaceTimeGrid, ndof: int) -> np.ndarray:
    _, _, data = read_csv(path)
    return data[:, 3].reshape(grid.nt + 1, grid.nx, ndof)
