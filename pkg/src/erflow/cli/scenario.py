"""Scenario assembly and the solve pipeline.

Stages run in order: config, mesh, electric, forces, flow, output. Each
failure is reported as a ``ScenarioError`` naming its stage; all config
checks that do not need a solve happen in the config and mesh stages.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..electric import ElectricConfigError, compute_electric_forces, solve_potential
from ..fem_core.space import FeSpace
from ..mesh import (DIRICHLET, BoundaryTag, MeshError, TagKind, build_rectangle_mesh, load_mesh,
                    rectangle_tagging, refine_uniform)
from ..stokes_solvers import (ConfigError, FlowProblem, SolverConfig, augmented_lagrangian_solve, gradient_solve,
                              lambda_continuation, solve_mixed)
from ..viscosity import ModelFileError, MuFunction, acceptance_model, parse_model
from . import writers
from .config import ConfigSyntaxError, Expression, RawConfig, parse_bool, parse_floats

log = logging.getLogger("erflow")

STAGES = ("config", "mesh", "electric", "forces", "flow", "output")
EXIT_CODES = {name: 2 + k for k, name in enumerate(STAGES)}


class ScenarioError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = EXIT_CODES[stage]


class Regime(enum.Enum):
    NONE = "NONE"
    STOKES = "STOKES"
    INERTIAL_DIRICHLET = "INERTIAL_DIRICHLET"
    INERTIAL_MIXED = "INERTIAL_MIXED"


class FlowMethod(enum.Enum):
    NEWTON = "NEWTON"
    AUGMENTED_LAGRANGIAN = "AUGMENTED_LAGRANGIAN"
    GRADIENT = "GRADIENT"


_TAG_WORDS = {"DIRICHLET": TagKind.DIRICHLET, "TRACTION": TagKind.TRACTION, "INSULATED": TagKind.INSULATED,
              "ELECTRODE": TagKind.ELECTRODE, "GROUND": TagKind.ELECTRODE_GROUND,
              "ELECTRODE_GROUND": TagKind.ELECTRODE_GROUND}


def parse_side(text: str) -> list[BoundaryTag]:
    """'DIRICHLET; ELECTRODE 1' -> tags (``;`` or ``,`` separated)."""
    tags = []
    for part in text.replace(";", ",").split(","):
        words = part.split()
        if not words:
            continue
        kind = _TAG_WORDS.get(words[0].upper())
        if kind is None:
            raise ConfigSyntaxError(f"unknown boundary tag {words[0]!r}")
        if len(words) > 2:
            raise ConfigSyntaxError(f"malformed boundary tag {part.strip()!r}")
        try:
            tags.append(BoundaryTag(kind, int(words[1]) if len(words) == 2 else 0))
        except (MeshError, ValueError) as exc:
            raise ConfigSyntaxError(f"bad boundary tag {part.strip()!r}: {exc}") from None
    if not tags:
        raise ConfigSyntaxError("empty boundary side")
    return tags


@dataclass
class MeshSpec:
    file: Path | None = None
    width: float = 1.0
    height: float = 1.0
    nx: int = 8
    ny: int = 8
    crossed: bool = True
    origin: tuple[float, float] = (0.0, 0.0)
    sides: dict[str, list[BoundaryTag]] = field(default_factory=dict)
    refine: int = 0

    def build(self):
        if self.file is not None:
            mesh = load_mesh(self.file.read_text())
        else:
            sides = {s: self.sides.get(s, [DIRICHLET]) for s in ("left", "right", "bottom", "top")}
            mesh = build_rectangle_mesh(self.width, self.height, self.nx, self.ny,
                                        tagging=rectangle_tagging(**sides), crossed=self.crossed,
                                        origin=self.origin)
        for _ in range(self.refine):
            mesh = refine_uniform(mesh)
        return mesh


@dataclass
class ElectricSpec:
    voltages: dict[int, float]
    permittivity: float | Callable = 1.0
    e_min: float | None = None
    si_units: bool = False
    density: float = 1.0
    deps_drho: float = 0.0
    coupling: bool = False


@dataclass
class Scenario:
    """Everything needed to run one solve; built from a ``RawConfig``."""

    mesh: MeshSpec
    model: object
    mu_fn: object
    regime: Regime
    method: FlowMethod
    solver: SolverConfig
    electric: ElectricSpec | None = None
    field_source: object = None  # "electric", a constant pair, or None
    boundary_velocity: Callable | None = None
    body: Callable | None = None
    traction: Callable | None = None
    density: float = 1.0
    density_bounds: tuple[float, float] | None = None
    diagnostics: bool = False
    diagnostic_samples: int = 200
    output_format: str = "csv"
    output_stem: str = "fields"
    write_report: bool = True
    seed: int = 42


def _pair(cfg: RawConfig, key: str, variables):
    """Two expressions from key.x / key.y; None when neither is set."""
    kx, ky = f"{key}.x", f"{key}.y"
    if kx not in cfg and ky not in cfg:
        return None
    ex = Expression(cfg.get(kx, "0"), variables)
    ey = Expression(cfg.get(ky, "0"), variables)
    return lambda *a: (ex(*a), ey(*a))


def _enum(cls, text: str, key: str):
    try:
        return cls(text.strip().upper())
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ConfigSyntaxError(f"{key}: unknown value {text!r} (choose from {choices})") from None


_SOLVER_FLOATS = ("r", "tol_velocity", "tol_divergence", "tol_residual")
_SOLVER_INTS = ("max_outer", "max_inner")

KNOWN_KEYS = {
    "seed",
    "mesh.file", "mesh.width", "mesh.height", "mesh.nx", "mesh.ny", "mesh.crossed", "mesh.origin", "mesh.refine",
    "mesh.left", "mesh.right", "mesh.bottom", "mesh.top",
    "model.file",
    "electric.permittivity", "electric.e_min", "electric.units", "electric.density", "electric.deps_drho",
    "electric.coupling",
    "flow.regime", "flow.field", "flow.velocity.x", "flow.velocity.y", "flow.body.x", "flow.body.y",
    "flow.traction.x", "flow.traction.y", "flow.density", "flow.density_bounds",
    "solver.method", "solver.inner_method", "solver.rho", "solver.t", "solver.lambda_schedule",
    "solver.linear_method", *(f"solver.{k}" for k in _SOLVER_FLOATS + _SOLVER_INTS),
    "diagnostics.solvability", "diagnostics.samples",
    "output.format", "output.stem", "output.report",
}


def build_scenario(cfg: RawConfig) -> Scenario:
    """Validate a raw config; raises ScenarioError('config', ...)."""
    try:
        return _build(cfg)
    except (ConfigSyntaxError, ConfigError, ModelFileError, MeshError, ValueError, OSError) as exc:
        raise ScenarioError("config", str(exc)) from None


def _build(cfg: RawConfig) -> Scenario:
    for key in cfg.entries:
        if key in KNOWN_KEYS or key.startswith("electric.voltage.") or key.startswith("model."):
            continue
        raise ConfigSyntaxError(f"{cfg.where(key)}: unknown key {key!r}")

    ms = MeshSpec()
    if "mesh.file" in cfg:
        ms.file = cfg.resolve_path(cfg.get("mesh.file"))
        if not ms.file.is_file():
            raise ConfigSyntaxError(f"mesh file {str(ms.file)!r} not found")
    ms.width = float(cfg.get("mesh.width", "1"))
    ms.height = float(cfg.get("mesh.height", "1"))
    ms.nx, ms.ny = int(cfg.get("mesh.nx", "8")), int(cfg.get("mesh.ny", "8"))
    ms.crossed = parse_bool(cfg.get("mesh.crossed", "true"))
    ms.origin = tuple(parse_floats(cfg.get("mesh.origin", "0 0")))
    ms.refine = int(cfg.get("mesh.refine", "0"))
    if len(ms.origin) != 2 or ms.refine < 0:
        raise ConfigSyntaxError("mesh.origin needs two numbers and mesh.refine must be >= 0")
    for side in ("left", "right", "bottom", "top"):
        if f"mesh.{side}" in cfg:
            ms.sides[side] = parse_side(cfg.get(f"mesh.{side}"))

    model_keys = {k: e for k, e in cfg.section("model").items() if k != "file"}
    if "model.file" in cfg:
        if model_keys:
            raise ConfigSyntaxError("give either model.file or inline model.* keys, not both")
        model, mu_fn = parse_model(cfg.resolve_path(cfg.get("model.file")).read_text())
    elif model_keys:
        model, mu_fn = parse_model("\n".join(f"{k} = {e.value}" for k, e in model_keys.items()))
    else:
        model, mu_fn = acceptance_model(), MuFunction()

    electric = None
    volts = {k: e for k, e in cfg.section("electric").items() if k.startswith("voltage.")}
    if volts:
        voltages = {}
        for k, e in volts.items():
            try:
                idx = int(k.split(".", 1)[1])
            except ValueError:
                raise ConfigSyntaxError(f"{e.where()}: electrode index must be an integer") from None
            voltages[idx] = float(e.value)
        perm = Expression(cfg.get("electric.permittivity", "1"))
        units = cfg.get("electric.units", "gaussian").lower()
        if units not in ("gaussian", "si"):
            raise ConfigSyntaxError("electric.units must be gaussian or si")
        electric = ElectricSpec(voltages, perm if not perm.constant else float(perm(0.0, 0.0)),
                                float(cfg.get("electric.e_min")) if "electric.e_min" in cfg else None,
                                units == "si", float(cfg.get("electric.density", "1")),
                                float(cfg.get("electric.deps_drho", "0")),
                                parse_bool(cfg.get("electric.coupling", "false")))

    regime = _enum(Regime, cfg.get("flow.regime", "STOKES"), "flow.regime")
    method = _enum(FlowMethod, cfg.get("solver.method", "NEWTON"), "solver.method")
    kw = {k: float(cfg.get(f"solver.{k}")) for k in _SOLVER_FLOATS if f"solver.{k}" in cfg}
    kw.update({k: int(cfg.get(f"solver.{k}")) for k in _SOLVER_INTS if f"solver.{k}" in cfg})
    if "solver.rho" in cfg:
        kw["rho_schedule"] = parse_floats(cfg.get("solver.rho"))
    if "solver.t" in cfg:
        t = cfg.get("solver.t")
        kw["t"] = t if t.upper() == "AUTO" else float(t)
    if "solver.lambda_schedule" in cfg:
        kw["lambda_schedule"] = parse_floats(cfg.get("solver.lambda_schedule"))
    if "solver.inner_method" in cfg:
        kw["inner_method"] = cfg.get("solver.inner_method").upper()
    if "solver.linear_method" in cfg:
        kw["linear_method"] = cfg.get("solver.linear_method")
    solver = SolverConfig(**kw)

    fsrc = cfg.get("flow.field", "electric" if electric else "none").strip().lower()
    if fsrc == "electric":
        if electric is None:
            raise ConfigSyntaxError("flow.field = electric needs electric.voltage.* entries")
        field_source = "electric"
    elif fsrc == "none":
        field_source = None
    else:
        vals = parse_floats(fsrc)
        if len(vals) != 2:
            raise ConfigSyntaxError("flow.field must be 'electric', 'none' or two numbers")
        field_source = tuple(vals)

    bounds = None
    if "flow.density_bounds" in cfg:
        b = parse_floats(cfg.get("flow.density_bounds"))
        if len(b) != 2 or not 0 < b[0] <= b[1]:
            raise ConfigSyntaxError("flow.density_bounds needs 0 < lower <= upper")
        bounds = (b[0], b[1])
    density = float(cfg.get("flow.density", "1"))
    if not density > 0 or (bounds and not bounds[0] <= density <= bounds[1]):
        raise ConfigSyntaxError(f"flow.density = {density!r} must be positive and inside its bounds")

    fmt = cfg.get("output.format", "csv").lower()
    if fmt not in writers.FORMATS:
        raise ConfigSyntaxError(f"output.format must be one of {', '.join(writers.FORMATS)}")
    return Scenario(
        mesh=ms, model=model, mu_fn=mu_fn, regime=regime, method=method, solver=solver, electric=electric,
        field_source=field_source,
        boundary_velocity=_pair(cfg, "flow.velocity", ("x", "y")),
        body=_pair(cfg, "flow.body", ("x", "y")),
        traction=_pair(cfg, "flow.traction", ("x", "y", "nx", "ny")),
        density=density, density_bounds=bounds,
        diagnostics=parse_bool(cfg.get("diagnostics.solvability", "false")),
        diagnostic_samples=int(cfg.get("diagnostics.samples", "200")),
        output_format=fmt, output_stem=cfg.get("output.stem", "fields"),
        write_report=parse_bool(cfg.get("output.report", "true")),
        seed=int(cfg.get("seed", "42")),
    )


def check_against_mesh(sc: Scenario, mesh) -> None:
    """Mesh-dependent config invariants, checked before any solve."""
    if sc.electric is not None:
        present = mesh.electrode_indices()
        unknown = sorted(set(sc.electric.voltages) - present)
        if unknown:
            raise ScenarioError("config", f"voltage given for electrode(s) {unknown} but the mesh has "
                                          f"electrodes {sorted(present) or 'none'}")
        missing = sorted(present - set(sc.electric.voltages))
        if missing:
            raise ScenarioError("config", f"no voltage for electrode(s) {missing}")
        if not mesh.edges_with(TagKind.ELECTRODE_GROUND):
            raise ScenarioError("config", "electric solve needs a GROUND boundary")
    if sc.regime is Regime.INERTIAL_DIRICHLET and mesh.has_traction():
        raise ScenarioError("config", "INERTIAL_DIRICHLET requires an empty TRACTION boundary")
    if sc.regime is Regime.INERTIAL_MIXED and not mesh.has_traction():
        raise ScenarioError("config", "INERTIAL_MIXED requires a TRACTION boundary")
    if sc.regime is not Regime.NONE and not mesh.edges_with(TagKind.DIRICHLET):
        raise ScenarioError("config", "flow solve needs a DIRICHLET boundary")


@dataclass
class RunResult:
    mesh: object
    electric_state: object = None
    flow_state: object = None
    report: object = None
    diagnostics: object = None
    files: list[Path] = field(default_factory=list)


def _flow_solve(sc: Scenario, prob: FlowProblem):
    cfg = sc.solver
    if sc.regime in (Regime.INERTIAL_DIRICHLET, Regime.INERTIAL_MIXED):
        from ..inertial_solvers import InertialProblem, solve_inertial
        iprob = InertialProblem(prob, sc.density, sc.density_bounds)
        return solve_inertial(iprob, cfg), iprob
    if sc.method is FlowMethod.AUGMENTED_LAGRANGIAN:
        solver = lambda p, c, init: augmented_lagrangian_solve(p, c, init)
    elif sc.method is FlowMethod.GRADIENT:
        solver = lambda p, c, init: gradient_solve(p, c, init)
    else:
        solver = lambda p, c, init: solve_mixed(p, c, init)
    if len(cfg.lambda_schedule):
        if not hasattr(prob.model, "with_lambda"):
            raise ConfigError("solver.lambda_schedule needs a regularized model")
        states, rep = lambda_continuation(prob, cfg.lambda_schedule, solver=solver, config=cfg)
        return (states[-1] if states else prob.zero_state(), rep), None
    return solver(prob, cfg, None), None


def run_scenario(sc: Scenario, output_dir: Path | str, fmt: str | None = None) -> RunResult:
    output_dir = Path(output_dir)
    np.random.seed(sc.seed)
    try:
        mesh = sc.mesh.build()
    except (MeshError, OSError, ValueError) as exc:
        raise ScenarioError("mesh", str(exc)) from None
    check_against_mesh(sc, mesh)
    res = RunResult(mesh)
    log.info("mesh: %d nodes, %d triangles", len(mesh.nodes), len(mesh.triangles))

    if sc.electric is not None:
        try:
            res.electric_state = solve_potential(mesh, sc.electric.permittivity, sc.electric.voltages,
                                                 e_min=sc.electric.e_min)
        except (ElectricConfigError, ValueError, ArithmeticError) as exc:
            raise ScenarioError("electric", str(exc)) from None
        log.info("electric: relative residual %.3e", res.electric_state.residual)

    if sc.regime is not Regime.NONE:
        extra = None
        if sc.electric is not None and sc.electric.coupling:
            try:
                vspace = FeSpace(mesh, 2, 2)
                forces = compute_electric_forces(res.electric_state, sc.electric.density, sc.electric.deps_drho,
                                                 sc.electric.si_units)
                extra = forces.body_load(vspace) + forces.traction_load(vspace)
            except (ValueError, ArithmeticError) as exc:
                raise ScenarioError("forces", str(exc)) from None
        E = res.electric_state if sc.field_source == "electric" else sc.field_source
        try:
            prob = FlowProblem(mesh, sc.model, sc.mu_fn, E=E, boundary_velocity=sc.boundary_velocity,
                               body=sc.body, traction=sc.traction, extra_load=extra)
            (state, rep), iprob = _flow_solve(sc, prob)
        except (ConfigError, ValueError, ArithmeticError) as exc:
            raise ScenarioError("flow", str(exc)) from None
        res.flow_state, res.report = state, rep
        log.info("flow: %s", rep.summary())
        if sc.diagnostics and iprob is not None:
            from ..inertial_solvers import solvability_diagnostics
            res.diagnostics = solvability_diagnostics(iprob, sc.diagnostic_samples, sc.seed)
            log.info("diagnostics: %s", res.diagnostics.summary())
        if not rep.converged:
            _write(res, sc, output_dir, fmt)
            raise ScenarioError("flow", f"solver did not converge: {rep.message}")
    _write(res, sc, output_dir, fmt)
    return res


def _write(res: RunResult, sc: Scenario, output_dir: Path, fmt: str | None) -> None:
    try:
        fields = writers.nodal_fields(res.mesh, res.flow_state, res.electric_state)
        res.files = writers.write_fields(fields, output_dir, fmt or sc.output_format, sc.output_stem)
        if res.report is not None and sc.write_report:
            p = output_dir / f"{sc.output_stem}_report.csv"
            p.write_text(res.report.to_csv())
            res.files.append(p)
        if res.diagnostics is not None:
            p = output_dir / f"{sc.output_stem}_diagnostics.txt"
            p.write_text(res.diagnostics.summary() + "\n")
            res.files.append(p)
    except OSError as exc:
        raise ScenarioError("output", str(exc)) from None
