"""Turn a :class:`RunConfig` into meshes, properties, boundary data and runs."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analytic import FourFractureCase, SingleFractureCase, l1_error
from .config import RunConfig
from .darcy import BoundaryConditions, SourceTerms, solve_pressure
from .dofs import DofLayout
from .errors import ConfigurationError
from .krylov import SolverConfig, SolveResult
from .mesh import Mesh, build_four_fracture_mesh_2d, build_hex_mesh_3d, build_single_fracture_mesh_2d
from .mesh_io import read_mesh
from .parallel import ParallelFlow, parallel_darcy_solve, parallel_transport_run, partition_cells
from .properties import FractureProperties, MatrixProperties
from .transport import (ControlVolumes, FluxField, TransportProblem, TransportResult, WellTerms,
                        build_control_volumes, run)
from .vag import Transmissibilities, assemble_transmissibilities
from .wells import Well, apply_wells, transport_terms

BoundaryFn = Callable[[float, np.ndarray], np.ndarray]
PLANE_TOL = 1e-12


@dataclass(eq=False)
class Scenario:
    config: RunConfig
    mesh: Mesh
    matrix: MatrixProperties
    fracture: FractureProperties
    bc: BoundaryConditions
    concentration: BoundaryFn
    time_dependent: bool
    wells: list = field(default_factory=list)
    case: object = None

    @property
    def layout(self) -> DofLayout:
        return DofLayout.of(self.mesh)

    @property
    def sources(self) -> SourceTerms:
        return apply_wells(self.wells, self.fracture)

    @property
    def solver(self) -> SolverConfig:
        s = self.config.solver
        return SolverConfig(s.method, s.preconditioner, s.tolerance, s.max_iterations)


def build_mesh(cfg: RunConfig) -> Mesh:
    m = cfg.mesh
    if cfg.scenario == "single_fracture":
        return build_single_fracture_mesh_2d(m.n_x, m.tan_theta)
    if cfg.scenario == "four_fractures":
        return build_four_fracture_mesh_2d(m.n_x, m.tan_theta1, m.tan_theta2)
    if cfg.scenario == "hex3d":
        return build_hex_mesh_3d(m.n_x, [tuple(p) for p in m.fracture_planes], m.stretch)
    return read_mesh(m.path)


def analytic_case(cfg: RunConfig):
    """Reference solution of the analytic scenarios (``None`` otherwise)."""
    p = cfg.physics

    def prop(fid, key, default):
        return float(p.fractures.get(str(fid), {}).get(key, default))

    if cfg.scenario == "single_fracture":
        return SingleFractureCase(cfg.mesh.tan_theta, prop(1, "permeability", p.perm_fracture),
                                  prop(1, "width", p.width))
    if cfg.scenario == "four_fractures":
        return FourFractureCase(cfg.mesh.tan_theta1, cfg.mesh.tan_theta2,
                                prop(1, "permeability", p.perm_fracture), prop(3, "permeability", p.perm_fracture),
                                prop(1, "width", p.width), prop(3, "width", p.width))
    return None


def _dirichlet(cfg: RunConfig, mesh: Mesh, case):
    b = cfg.boundary
    if b.type == "affine":
        nodes = mesh.boundary_nodes
        grad = np.zeros(mesh.dim)
        g = np.asarray(b.gradient, float)[: mesh.dim]
        grad[: len(g)] = g
        bc = BoundaryConditions.from_function(mesh, nodes, lambda x: b.value + x @ grad)
    else:
        nodes, vals = [], []
        taken = np.zeros(mesh.n_nodes, dtype=bool)
        for pl in b.planes:
            ax = "xyz".index(pl.axis)
            if ax >= mesh.dim:
                raise ConfigurationError(f"boundary plane axis {pl.axis!r} exceeds the mesh dimension")
            sel = mesh.is_boundary_node & (np.abs(mesh.nodes[:, ax] - pl.value) <= PLANE_TOL) & ~taken
            taken |= sel
            nodes.append(np.flatnonzero(sel))
            vals.append(np.full(int(sel.sum()), float(pl.pressure)))
        nodes = np.concatenate(nodes)
        if len(nodes) == 0:
            raise ConfigurationError("no boundary node lies on the configured planes")
        bc = BoundaryConditions(nodes, np.concatenate(vals))
    if b.concentration == "exact":
        if isinstance(case, SingleFractureCase):
            return bc, (lambda t, x: case.evaluate(x, t)), True
        return bc, (lambda t, x: case.evaluate(x)), False
    if b.type == "planes":
        return bc, _plane_concentration(b.planes), False
    c = float(b.concentration)
    return bc, (lambda t, x: np.full(len(x), c)), False


def _plane_concentration(planes) -> BoundaryFn:
    """Concentration of the first listed plane containing each point."""

    def fn(t, x):
        out = np.full(len(x), np.nan)
        for pl in planes:
            sel = np.isnan(out) & (np.abs(x[:, "xyz".index(pl.axis)] - pl.value) <= PLANE_TOL)
            out[sel] = pl.concentration
        return out

    return fn


def build_wells(cfg: RunConfig) -> list:
    return [Well(w.name, w.kind, tuple(int(f) for f in w.faces), tuple(float(d) for d in w.dx), float(w.dz),
                 float(w.radius), w.pressure, w.rate, float(w.injection_concentration)) for w in cfg.wells]


def build_scenario(cfg: RunConfig) -> Scenario:
    mesh = build_mesh(cfg)
    p = cfg.physics
    matrix = MatrixProperties.build(mesh, p.perm_matrix, p.porosity_matrix)
    fracture = FractureProperties.build(mesh, p.width, p.perm_fracture, p.porosity_fracture, by_id=p.fractures)
    case = analytic_case(cfg)
    bc, conc, td = _dirichlet(cfg, mesh, case)
    return Scenario(cfg, mesh, matrix, fracture, bc, conc, td, build_wells(cfg), case)


# ------------------------------------------------------------------- runs
@dataclass(eq=False)
class Flow:
    u: np.ndarray
    result: SolveResult
    trans: Transmissibilities | None
    parallel: ParallelFlow | None
    seconds: float


def solve_flow(sc: Scenario, n_parts: int | None = None) -> Flow:
    """Darcy solve, sequential when ``n_parts`` is 1."""
    n = sc.config.parallel.n_parts if n_parts is None else int(n_parts)
    t0 = time.perf_counter()
    mu = sc.config.physics.viscosity
    if n == 1:
        trans = assemble_transmissibilities(sc.mesh, sc.matrix, sc.fracture, mu)
        sol = solve_pressure(trans, sc.bc, sc.solver, sc.sources, sc.config.parallel.deterministic)
        return Flow(sol.u, sol.result, trans, None, time.perf_counter() - t0)
    pf = parallel_darcy_solve(sc.mesh, sc.matrix, sc.fracture, sc.bc, partition_cells(sc.mesh, n), sc.solver,
                              mu, sc.sources, sc.config.parallel.deterministic)
    return Flow(pf.u, pf.result, None, pf, time.perf_counter() - t0)


def control_volumes(sc: Scenario) -> ControlVolumes:
    t = sc.config.transport
    return build_control_volumes(sc.mesh, sc.matrix, sc.fracture, sc.bc.mask(sc.mesh.n_nodes), t.omega_m, t.omega_f)


def well_terms(sc: Scenario, flow: Flow) -> WellTerms | None:
    if not sc.wells:
        return None
    return transport_terms(sc.wells, sc.fracture, flow.u, sc.layout)


def simulate(sc: Scenario, flow: Flow, on_step=None, max_steps=None) -> TransportResult:
    """Transport run with the scenario's schedule (sequential or on the flow's workers)."""
    t = sc.config.transport
    vol = control_volumes(sc)
    wt = well_terms(sc, flow)
    kw = dict(snapshot_times=t.snapshot_times, cfl_safety=t.cfl_safety, stationary_tol=t.stationary_tol,
              series_every=t.series_every, max_steps=max_steps)
    if flow.parallel is not None:
        return parallel_transport_run(sc.mesh, flow.parallel, vol, sc.concentration, t.final_time, wt,
                                      sc.time_dependent, **kw).result
    dmask = sc.bc.mask(sc.mesh.n_nodes)
    prob = TransportProblem(FluxField.from_pressure(flow.trans, flow.u, dmask), vol, sc.mesh.nodes,
                            sc.concentration, wt, sc.time_dependent)
    return run(prob, t.final_time, fracture_nodes=sc.mesh.is_fracture_node, on_step=on_step, **kw)


def exact_values(sc: Scenario, t: float):
    """Reference values at cell centres and fracture-face centres."""
    mesh, case = sc.mesh, sc.case
    xc = mesh.cell_centers
    xf = mesh.face_centers[mesh.fracture_faces]
    if isinstance(case, SingleFractureCase):
        return case.c_matrix(xc[:, 0], xc[:, 1], t), case.c_fracture(xf[:, 0], t)
    if isinstance(case, FourFractureCase):
        return case.c_matrix(xc[:, 0], xc[:, 1]), case.c_fracture_at(xf)
    raise ConfigurationError(f"scenario {sc.config.scenario!r} has no reference solution")


def level_errors(sc: Scenario, result: TransportResult) -> tuple[float, float]:
    em, ef = exact_values(sc, result.final_time)
    return l1_error(result.final, sc.mesh, em, ef, sc.fracture.width)


def level_config(cfg: RunConfig, n_x: int) -> RunConfig:
    return cfg.replace(mesh=dataclasses.replace(cfg.mesh, n_x=int(n_x)))


def run_level(cfg: RunConfig, n_x: int) -> tuple[float, float]:
    sc = build_scenario(level_config(cfg, n_x))
    return level_errors(sc, simulate(sc, solve_flow(sc)))

