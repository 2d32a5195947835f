"""Run configuration: strict JSON with a versioned schema.

Unknown keys anywhere in the document are rejected, as are missing or
unsupported schema versions.  Omitted sections take scenario defaults.
"""
from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .krylov import METHODS, PRECONDITIONERS

SCHEMA = "vagdfn.run/1"
SCENARIOS = ("single_fracture", "four_fractures", "hex3d", "from_mesh_file")
AXES = ("x", "y", "z")


@dataclass
class MeshConfig:
    n_x: int = 100
    tan_theta: float = 0.5
    tan_theta1: float = 0.625
    tan_theta2: float = 0.25
    stretch: float = 1.1
    fracture_planes: list = field(default_factory=lambda: [["x", 0.5], ["y", 0.5], ["z", 0.5]])
    path: str | None = None


@dataclass
class PhysicsConfig:
    perm_matrix: float = 1.0
    perm_fracture: float = 20.0
    width: float = 0.01
    porosity_matrix: float = 1.0
    porosity_fracture: float = 1.0
    viscosity: float = 1.0
    fractures: dict = field(default_factory=dict)


@dataclass
class PlaneCondition:
    axis: str
    value: float
    pressure: float
    concentration: float = 0.0


@dataclass
class BoundaryConfig:
    """``affine``: all boundary nodes carry ``value + gradient . x``;
    ``planes``: nodes on the listed coordinate planes carry constant data."""

    type: str = "affine"
    value: float = 1.0
    gradient: list = field(default_factory=lambda: [-1.0, 0.0])
    planes: list = field(default_factory=list)
    concentration: typing.Any = "exact"


@dataclass
class WellConfig:
    name: str
    kind: str
    faces: list
    dx: list
    dz: float
    radius: float
    pressure: float | None = None
    rate: float | None = None
    injection_concentration: float = 1.0


@dataclass
class SolverSection:
    method: str = "cg"
    preconditioner: str = "jacobi"
    tolerance: float = 1e-10
    max_iterations: int = 5000


@dataclass
class TransportConfig:
    final_time: float = 0.5
    cfl_safety: float = 1.0
    omega_m: float = 0.1
    omega_f: float = 0.1
    snapshot_times: list = field(default_factory=lambda: [0.0, 0.25, 0.5])
    stationary_tol: float | None = None
    series_every: int = 0
    enabled: bool = True


@dataclass
class ParallelConfig:
    n_parts: int = 1
    deterministic: bool = True


@dataclass
class OutputConfig:
    directory: str = "out"
    vtk: bool = True
    csv: bool = True


@dataclass
class RunConfig:
    scenario: str
    schema: str = SCHEMA
    mesh: MeshConfig = field(default_factory=MeshConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    wells: list = field(default_factory=list)
    solver: SolverSection = field(default_factory=SolverSection)
    transport: TransportConfig = field(default_factory=TransportConfig)
    parallel: ParallelConfig = field(default_factory=ParallelConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


_NESTED = {
    "mesh": MeshConfig, "physics": PhysicsConfig, "boundary": BoundaryConfig, "solver": SolverSection,
    "transport": TransportConfig, "parallel": ParallelConfig, "output": OutputConfig,
}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _scenario_defaults(scenario: str) -> dict:
    if scenario == "single_fracture":
        return {"mesh": MeshConfig(n_x=100),
                "physics": PhysicsConfig(perm_fracture=20.0, width=0.01),
                "transport": TransportConfig(final_time=0.5, snapshot_times=[0.0, 0.25, 0.5])}
    if scenario == "four_fractures":
        return {"mesh": MeshConfig(n_x=50),
                "physics": PhysicsConfig(perm_fracture=200.0, width=0.01,
                                         fractures={"3": {"permeability": 400.0}, "4": {"permeability": 400.0}}),
                "transport": TransportConfig(final_time=20.0, snapshot_times=[20.0], stationary_tol=1e-8)}
    if scenario == "hex3d":
        return {"mesh": MeshConfig(n_x=32, stretch=1.1),
                "physics": PhysicsConfig(perm_fracture=20.0, width=0.01),
                "boundary": BoundaryConfig(type="planes", planes=[
                    PlaneCondition("z", 0.0, 1.0, 1.0), PlaneCondition("z", 1.0, 0.0, 0.0)], concentration=0.0),
                "transport": TransportConfig(final_time=0.5, snapshot_times=[0.0, 0.2, 0.4, 0.5])}
    return {}


def _pos(v, what):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and math.isfinite(v)):
        raise ConfigurationError(f"{what} must be a positive number, got {v!r}")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.schema != SCHEMA:
        raise ConfigurationError(f"unsupported schema {cfg.schema!r}; expected {SCHEMA!r}")
    if cfg.scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {cfg.scenario!r}; expected one of {SCENARIOS}")
    m, p, t = cfg.mesh, cfg.physics, cfg.transport
    if not isinstance(m.n_x, int) or isinstance(m.n_x, bool) or m.n_x < 1:
        raise ConfigurationError("mesh.n_x must be a positive integer")
    if cfg.scenario == "from_mesh_file" and not m.path:
        raise ConfigurationError("mesh.path is required for scenario 'from_mesh_file'")
    for name in ("perm_matrix", "perm_fracture", "width", "porosity_matrix", "porosity_fracture", "viscosity"):
        _pos(getattr(p, name), f"physics.{name}")
    for fid, props in p.fractures.items():
        if not isinstance(props, dict) or set(props) - {"width", "permeability", "porosity"}:
            raise ConfigurationError(f"physics.fractures[{fid!r}]: allowed keys are width, permeability, porosity")
        for k, v in props.items():
            _pos(v, f"physics.fractures[{fid!r}].{k}")
    b = cfg.boundary
    if b.type not in ("affine", "planes"):
        raise ConfigurationError("boundary.type must be 'affine' or 'planes'")
    if b.type == "planes":
        if not b.planes:
            raise ConfigurationError("boundary.planes must not be empty")
        for pl in b.planes:
            if pl.axis not in AXES:
                raise ConfigurationError(f"boundary plane axis must be one of {AXES}")
    if not (b.concentration == "exact" or isinstance(b.concentration, (int, float))):
        raise ConfigurationError("boundary.concentration must be 'exact' or a number")
    if b.concentration == "exact" and cfg.scenario not in ("single_fracture", "four_fractures"):
        raise ConfigurationError("boundary.concentration 'exact' is only available for the analytic scenarios")
    s = cfg.solver
    if s.method not in METHODS:
        raise ConfigurationError(f"solver.method must be one of {METHODS}")
    if s.preconditioner not in PRECONDITIONERS:
        raise ConfigurationError(f"solver.preconditioner must be one of {PRECONDITIONERS}")
    _pos(s.tolerance, "solver.tolerance")
    _pos(t.final_time, "transport.final_time")
    if not 0.0 < t.cfl_safety <= 1.0:
        raise ConfigurationError("transport.cfl_safety must lie in (0, 1]")
    for name in ("omega_m", "omega_f"):
        if not 0.0 <= getattr(t, name) < 1.0:
            raise ConfigurationError(f"transport.{name} must lie in [0, 1)")
    if any((not isinstance(x, (int, float))) or x < 0.0 or x > t.final_time for x in t.snapshot_times):
        raise ConfigurationError("transport.snapshot_times must lie in [0, final_time]")
    if not isinstance(cfg.parallel.n_parts, int) or cfg.parallel.n_parts < 1:
        raise ConfigurationError("parallel.n_parts must be a positive integer")
    return cfg


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    if "schema" not in data:
        raise ConfigurationError(f"missing 'schema' field (expected {SCHEMA!r})")
    if "scenario" not in data:
        raise ConfigurationError("missing 'scenario' field")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s) {unknown}")
    scenario = data["scenario"]
    defaults = _scenario_defaults(scenario) if isinstance(scenario, str) else {}
    kw = {"scenario": scenario, "schema": data["schema"]}
    for name, cls in _NESTED.items():
        base = asdict(defaults[name]) if name in defaults else {}
        if name in data:
            sec = data[name]
            if not isinstance(sec, dict):
                raise ConfigurationError(f"{name}: expected an object")
            _build(cls, sec, name)  # key check against the section's own fields
            base.update(sec)
        obj = _build(cls, base, name)
        kw[name] = obj
    if kw["boundary"].planes:
        kw["boundary"].planes = [pl if isinstance(pl, PlaneCondition) else _build(PlaneCondition, pl, "boundary.planes")
                                 for pl in kw["boundary"].planes]
    kw["wells"] = [_build(WellConfig, w, f"wells[{i}]") for i, w in enumerate(data.get("wells", []))]
    return validate(RunConfig(**kw))


def load(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"configuration file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def dump(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
