"""Ready-made test problems, analytic references and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import SpaceTimeGrid, layout_of
from .operators import FluxSpec


def _wrap(x, x_min, length):
    return x_min + np.mod(np.asarray(x, dtype=float) - x_min, length)


def _eval_profile(spec: dict, x, x_min: float, length: float):
    kind = spec["type"]
    x = np.asarray(x, dtype=float)
    if kind == "zero":
        return np.zeros_like(x)
    if kind == "constant":
        return np.full_like(x, spec["value"])
    if kind == "gaussian":
        return np.exp(-spec["sharpness"] * (x - spec["center"]) ** 2)
    if kind == "sine":
        phase = 2.0 * np.pi * spec.get("wavenumber", 1) * (x - x_min) / length
        return spec.get("mean", 0.0) + spec.get("amplitude", 1.0) * np.sin(phase)
    if kind == "box":
        xw = _wrap(x, x_min, length)
        inside = (xw >= spec["lo"]) & (xw <= spec["hi"])
        return np.where(inside, spec["inside"], spec["outside"]).astype(float)
    raise ValueError(f"unknown profile type {kind!r}")


@dataclass
class ProblemSpec:
    """A periodic 1-D initial value problem ``u_t + f(u)_x = (gamma u_x)_x``.

    ``initial`` and ``viscosity`` are small serializable profile descriptions
    (``{"type": "gaussian", "center": 0.5, "sharpness": 64.0}`` and the like).
    """

    name: str
    flux: FluxSpec
    x_min: float
    x_max: float
    T: float
    initial: dict
    viscosity: dict = field(default_factory=lambda: {"type": "zero"})

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def u0(self, x):
        return _eval_profile(self.initial, x, self.x_min, self.length)

    def gamma(self, x):
        return _eval_profile(self.viscosity, x, self.x_min, self.length)

    @property
    def viscous(self) -> bool:
        return self.viscosity["type"] != "zero"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "x_min": self.x_min,
            "x_max": self.x_max,
            "T": self.T,
            "flux": {"kind": self.flux.kind, "alpha": self.flux.alpha, "beta": self.flux.beta,
                     "shift": self.flux.shift},
            "initial": dict(self.initial),
            "viscosity": dict(self.viscosity),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(
            name=d["name"],
            flux=FluxSpec(**d["flux"]),
            x_min=float(d["x_min"]),
            x_max=float(d["x_max"]),
            T=float(d["T"]),
            initial=dict(d["initial"]),
            viscosity=dict(d.get("viscosity", {"type": "zero"})),
        )


def heat_problem() -> ProblemSpec:
    return ProblemSpec(
        name="heat",
        flux=FluxSpec("linear", 0.0),
        x_min=0.0,
        x_max=1.0,
        T=0.1,
        initial={"type": "gaussian", "center": 0.5, "sharpness": 64.0},
        viscosity={"type": "sine", "mean": 0.5, "amplitude": 0.1, "wavenumber": 1},
    )


def transport_problem(smooth: bool = True) -> ProblemSpec:
    if smooth:
        return ProblemSpec("transport", FluxSpec("linear", 2.0), 0.0, 1.0, 0.5,
                           {"type": "sine", "amplitude": 1.0, "wavenumber": 1})
    return ProblemSpec("transport_box", FluxSpec("linear", 2.0), 0.0, 1.0, 0.25,
                       {"type": "box", "lo": 0.25, "hi": 0.75, "inside": 1.0, "outside": 0.0})


def traffic_problem() -> ProblemSpec:
    return ProblemSpec("traffic", FluxSpec("quadratic", -1.0, 1.0), 0.0, 2.0, 1.0,
                       {"type": "box", "lo": 1.0, "hi": 2.0, "inside": 0.1, "outside": 0.25})


@dataclass(frozen=True)
class SolverPreset:
    """Discretization and step sizes used for a problem family unless overridden."""

    time: str
    space: str
    k_kind: str
    k_coeff: float
    tau_u: float
    tau_phi: float
    tau_lambda: float = 0.99
    tau_u0: float = 0.2


PRESETS = {
    "heat": SolverPreset("be", "fd_heat", "linear", 0.0, 0.8, 0.8),
    "transport": SolverPreset("bdf2", "dg_linear", "linear", 2.0, 3.0, 0.1),
    "transport_box": SolverPreset("bdf2", "dg_linear", "linear", 2.0, 3.0, 0.1),
    "traffic": SolverPreset("be", "dg_quadratic", "nonlinear", 1.0, 0.4, 0.4),
}


def preset_for(problem: ProblemSpec) -> SolverPreset:
    if problem.name in PRESETS:
        return PRESETS[problem.name]
    if problem.viscous:
        return PRESETS["heat"]
    if problem.flux.kind == "linear":
        return replace(PRESETS["transport"], k_coeff=problem.flux.linear_coefficient)
    return PRESETS["traffic"]


PROBLEMS = {
    "heat": heat_problem,
    "transport": lambda: transport_problem(True),
    "transport_box": lambda: transport_problem(False),
    "traffic": traffic_problem,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def analytic_transport(u0, alpha: float, x, t, x_min: float = 0.0, length: float = 1.0):
    """Exact solution of ``u_t + alpha u_x = 0``: ``u0`` at the wrapped foot of the characteristic."""
    return u0(_wrap(np.asarray(x, dtype=float) - alpha * t, x_min, length))


def l2_error(u: np.ndarray, reference, grid: SpaceTimeGrid, dof_weight: str = "cell") -> float:
    """Space-time discrete L2 norm of ``u - reference(x, t)`` over all time levels.

    With ``dof_weight="cell"`` every nodal value carries ``ht * hx`` (the
    normalization of the published transport errors); ``"split"`` uses the
    grid quadrature ``ht * hx / ndof``.  The two agree for finite differences.
    """
    layout = layout_of(u)
    if dof_weight not in ("cell", "split"):
        raise ValueError(f"unknown dof weight {dof_weight!r}")
    x = grid.nodes(layout)
    diff = np.stack([u[l] - reference(x, t) for l, t in enumerate(grid.times)])
    w = grid.ht * grid.hx / (layout.ndof if dof_weight == "split" else 1)
    return float(np.sqrt(w * np.sum(diff**2)))


def convergence_order(errors) -> list[float]:
    """Successive ``log2(e_h / e_{h/2})`` for errors listed from coarse to fine."""
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ValueError("need at least two errors")
    if any(not (e > 0) for e in errors):
        raise ValueError("errors must be positive")
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]
