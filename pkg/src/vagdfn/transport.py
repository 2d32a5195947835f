"""Control volumes and the explicit upwind tracer scheme.

Darcy fluxes are frozen into a :class:`FluxField`: one entry per incidence
``(centre, target)`` where the centre is a cell or a fracture face and the
target one of its nodes or fracture faces, with ``F`` oriented from centre
to target.  Every balance equation is then

    phi_i (c_i^{n+1} - c_i^n) / dt + sum_{centre = i} H_e - sum_{target = i} H_e + W_i = 0

with ``H_e = c_centre F_e^+ + c_target F_e^-`` and ``W_i`` the well term of a
perforated fracture face.  Dirichlet nodes are overwritten by the boundary
data after each step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numba import njit

from ._csr import Csr
from .dofs import KIND_NAMES, DofLayout
from .errors import CFLViolationError, ConfigurationError, InvalidParameterError, NoFlowError
from .mesh import Mesh
from .properties import FractureProperties, MatrixProperties
from .vag import Transmissibilities

# Relative slack accepted on user-supplied time steps above the CFL bound.
CFL_SLACK = 1e-12
SLIVER = 1e-3


# ------------------------------------------------------------ control volumes
@dataclass(frozen=True, eq=False)
class VolumeFractions:
    """``alpha`` aligned with ``mesh.cell_nodes.idx`` and with the node lists
    of the fracture faces (``mesh.face_nodes.take(mesh.fracture_faces)``)."""

    cell: np.ndarray
    face: np.ndarray


def compute_volume_fractions(mesh: Mesh, matrix: MatrixProperties, fracture: FractureProperties,
                             dirichlet: np.ndarray, omega_m: float = 0.1,
                             omega_f: float = 0.1) -> VolumeFractions:
    """Split a fraction of the most permeable neighbours' pore volume onto nodes.

    For every eligible node, the cells (resp. fracture faces) around it whose
    largest permeability eigenvalue is maximal donate; a donor gives
    ``omega / (number of its eligible nodes)`` to each of its eligible nodes.
    Matrix-eligible nodes are the non-Dirichlet, non-fracture nodes; fracture
    eligible nodes are the non-Dirichlet fracture nodes.
    """
    for name, om in (("omega_m", omega_m), ("omega_f", omega_f)):
        if not 0.0 <= om < 1.0:
            raise InvalidParameterError(f"{name} must lie in [0, 1), got {om}")
    dirichlet = np.asarray(dirichlet, dtype=bool)
    frac_node = mesh.is_fracture_node

    def split(csr: Csr, lam: np.ndarray, eligible_node: np.ndarray, omega: float) -> np.ndarray:
        owner, node = csr.row_ids, csr.idx
        elig = eligible_node[node]
        n_elig = np.bincount(owner, weights=elig, minlength=len(csr))
        best = np.full(mesh.n_nodes, -np.inf)
        np.maximum.at(best, node, lam[owner])
        win = lam[owner] == best[node]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(elig & win, omega / n_elig[owner], 0.0)

    cell = split(mesh.cell_nodes, matrix.magnitude(), ~dirichlet & ~frac_node, omega_m)
    fcsr = mesh.face_nodes.take(mesh.fracture_faces)
    face = split(fcsr, fracture.magnitude(), ~dirichlet & frac_node, omega_f)
    return VolumeFractions(cell, face)


@dataclass(frozen=True, eq=False)
class ControlVolumes:
    """Pore volume ``phi`` of every dof (zero on Dirichlet nodes)."""

    layout: DofLayout
    phi: np.ndarray
    dirichlet: np.ndarray
    width: np.ndarray

    @cached_property
    def active(self) -> np.ndarray:
        """Dofs carrying a balance equation (all but the Dirichlet nodes)."""
        act = np.ones(self.layout.size, dtype=bool)
        act[: self.layout.n_nodes] = ~self.dirichlet
        return act

    def total(self) -> float:
        return math.fsum(self.phi)

    def scaled(self, factor: float) -> "ControlVolumes":
        return ControlVolumes(self.layout, self.phi * factor, self.dirichlet, self.width)


def compute_porous_volumes(mesh: Mesh, fractions: VolumeFractions, matrix: MatrixProperties,
                           fracture: FractureProperties, dirichlet: np.ndarray) -> ControlVolumes:
    """Pore volumes of cells, fracture faces and non-Dirichlet nodes.

    Raises
    ------
    ConfigurationError
        If any active control volume has a non-positive pore volume.
    """
    lay = DofLayout.of(mesh)
    dirichlet = np.asarray(dirichlet, dtype=bool)
    vol_m = mesh.cell_volumes * matrix.porosity
    area = mesh.face_measures[mesh.fracture_faces]
    vol_f = fracture.width * area * fracture.porosity
    cn = mesh.cell_nodes
    fcsr = mesh.face_nodes.take(mesh.fracture_faces)
    phi = np.zeros(lay.size)
    phi[lay.n_cells_offset:] = (1.0 - np.bincount(cn.row_ids, weights=fractions.cell,
                                                  minlength=mesh.n_cells)) * vol_m
    phi[lay.n_nodes: lay.n_cells_offset] = (1.0 - np.bincount(fcsr.row_ids, weights=fractions.face,
                                                              minlength=mesh.n_fracture_faces)) * vol_f
    node = np.bincount(cn.idx, weights=fractions.cell * vol_m[cn.row_ids], minlength=mesh.n_nodes)
    node += np.bincount(fcsr.idx, weights=fractions.face * vol_f[fcsr.row_ids], minlength=mesh.n_nodes)
    node[dirichlet] = 0.0
    phi[: lay.n_nodes] = node
    cv = ControlVolumes(lay, phi, dirichlet, fracture.width.copy())
    bad = np.flatnonzero(cv.active & ~(phi > 0.0))
    if len(bad):
        kind = KIND_NAMES[lay.kind()[bad[0]]]
        raise ConfigurationError(
            f"{len(bad)} control volume(s) without pore volume (first: {kind} {lay.local_ids()[bad[0]]}); "
            "a node needs a donor cell or fracture face and omega > 0")
    return cv


def build_control_volumes(mesh, matrix, fracture, dirichlet, omega_m=0.1, omega_f=0.1) -> ControlVolumes:
    fr = compute_volume_fractions(mesh, matrix, fracture, dirichlet, omega_m, omega_f)
    return compute_porous_volumes(mesh, fr, matrix, fracture, dirichlet)


# ---------------------------------------------------------------- flux field
@dataclass(frozen=True, eq=False)
class FluxField:
    """Frozen Darcy fluxes on every incidence, cells first then fracture faces."""

    layout: DofLayout
    centre: np.ndarray
    target: np.ndarray
    flux: np.ndarray
    dirichlet: np.ndarray

    @classmethod
    def from_pressure(cls, trans: Transmissibilities, u, dirichlet) -> "FluxField":
        u = np.asarray(u, float)
        parts = [(np.repeat(b.centre, b.dofs.counts), b.dofs.idx, b.fluxes(u)) for b in (trans.cells, trans.faces)]
        return cls(
            trans.layout,
            np.concatenate([p[0] for p in parts]).astype(np.int64),
            np.concatenate([p[1] for p in parts]).astype(np.int64),
            np.concatenate([p[2] for p in parts]),
            np.asarray(dirichlet, dtype=bool),
        )

    def __len__(self) -> int:
        return len(self.flux)

    @cached_property
    def gather(self) -> tuple[Csr, np.ndarray]:
        """Per-dof incidence lists (ordered by incidence) and their signs."""
        n = len(self.flux)
        inc = np.arange(n, dtype=np.int64)
        csr = Csr.from_pairs(np.concatenate([self.centre, self.target]), np.concatenate([inc, inc]),
                             self.layout.size)
        sign = np.where(self.centre[csr.idx] == csr.row_ids, 1.0, -1.0)
        return csr, sign

    @cached_property
    def outflow_nodes(self) -> np.ndarray:
        """Dirichlet nodes receiving only non-negative fluxes (boolean over nodes)."""
        n_v = self.layout.n_nodes
        low = np.full(n_v, np.inf)
        is_node = self.target < n_v
        np.minimum.at(low, self.target[is_node], self.flux[is_node])
        return self.dirichlet & (low >= 0.0)

    def checked(self) -> np.ndarray:
        """Dofs subject to the maximum principle (all but outflow nodes)."""
        m = np.ones(self.layout.size, dtype=bool)
        m[: self.layout.n_nodes] = ~self.outflow_nodes
        return m

    def outflow(self, wells: "WellTerms | None" = None) -> np.ndarray:
        """Positive-part outflow sum of each control volume."""
        csr, sign = self.gather
        out = _outflow(csr.ptr, csr.idx, sign, self.flux)
        if wells is not None:
            out = out + wells.production
        return out


@njit(cache=True, nogil=True)
def _outflow(ptr, idx, sign, flux):
    out = np.zeros(len(ptr) - 1)
    for i in range(len(out)):
        acc = 0.0
        for p in range(ptr[i], ptr[i + 1]):
            f = sign[p] * flux[idx[p]]
            if f > 0.0:
                acc += f
        out[i] = acc
    return out


@dataclass(frozen=True, eq=False)
class WellTerms:
    """Per-dof well rates for transport: production ``q^+`` and injected tracer ``q^- c_inj``."""

    production: np.ndarray
    injection: np.ndarray

    @classmethod
    def none(cls, layout: DofLayout) -> "WellTerms":
        return cls(np.zeros(layout.size), np.zeros(layout.size))

    @classmethod
    def from_rates(cls, layout: DofLayout, faces, q, c_inj) -> "WellTerms":
        """``q > 0`` produces at the face concentration, ``q < 0`` injects at ``c_inj``."""
        prod = np.zeros(layout.size)
        inj = np.zeros(layout.size)
        rows = layout.fracture_face(np.asarray(faces, dtype=np.int64))
        q = np.asarray(q, float)
        np.add.at(prod, rows, np.maximum(q, 0.0))
        np.add.at(inj, rows, np.minimum(q, 0.0) * np.broadcast_to(np.asarray(c_inj, float), q.shape))
        return cls(prod, inj)


def cfl_timestep(flux: FluxField, volumes: ControlVolumes, wells: WellTerms | None = None) -> float:
    """Largest step satisfying the CFL bound over all active control volumes.

    Raises
    ------
    NoFlowError
        If no active control volume has outflow.
    """
    out = flux.outflow(wells)
    sel = volumes.active & (out > 0.0)
    if not np.any(sel):
        raise NoFlowError("no control volume has outflow; the CFL step is unbounded")
    return float(np.min(volumes.phi[sel] / out[sel]))


def upwind_fluxes(flux: FluxField, c) -> np.ndarray:
    """Transport flux ``H`` on every incidence."""
    c = np.asarray(c, float)
    return c[flux.centre] * np.maximum(flux.flux, 0.0) + c[flux.target] * np.minimum(flux.flux, 0.0)


# -------------------------------------------------------------------- kernel
# stats layout written by _advance
S_LHS, S_LHS_C, S_LHS_ABS, S_RHS, S_RHS_C, S_SCALE, S_DMAX, S_MIN, S_MAX = range(9)
N_STATS = 9


@njit(cache=True, nogil=True)
def _kb_add(s, comp, x):
    t = s + x
    if abs(s) >= abs(x):
        comp += (s - t) + x
    else:
        comp += (x - t) + s
    return t, comp


@njit(cache=True, nogil=True)
def _advance(c, out, centre, target, fp, fm, inc_own, tgt_dir, g_ptr, g_idx, g_sgn, rows, row_own,
             row_chk, phi, wprod, winj, dt, h, stats):
    """One explicit step on ``rows``; fills ``out`` there and the audit ``stats``.

    ``stats`` receives (over owned rows / incidences): the compensated sum of
    ``phi dc`` and of the boundary plus well outflow, the scale
    ``sum |phi dc| + dt sum |H|``, ``max |dc|`` and the extrema of the new
    values on checked rows.
    """
    n_inc = len(fp)
    bsum = 0.0
    bcomp = 0.0
    habs = 0.0
    for e in range(n_inc):
        he = c[centre[e]] * fp[e] + c[target[e]] * fm[e]
        h[e] = he
        if inc_own[e]:
            habs += abs(he)
            if tgt_dir[e]:
                bsum, bcomp = _kb_add(bsum, bcomp, he)
    lsum = 0.0
    lcomp = 0.0
    labs = 0.0
    dmax = 0.0
    lo = np.inf
    hi = -np.inf
    wsum = 0.0
    for r in range(len(rows)):
        i = rows[r]
        acc = 0.0
        for p in range(g_ptr[i], g_ptr[i + 1]):
            acc += g_sgn[p] * h[g_idx[p]]
        w = wprod[i] * c[i] + winj[i]
        acc += w
        ci = c[i] - dt / phi[i] * acc
        out[i] = ci
        if row_own[r]:
            d = phi[i] * (ci - c[i])
            lsum, lcomp = _kb_add(lsum, lcomp, d)
            labs += abs(d)
            if w != 0.0:
                bsum, bcomp = _kb_add(bsum, bcomp, w)
                wsum += abs(w)
            dc = abs(ci - c[i])
            if dc > dmax:
                dmax = dc
        if row_chk[r]:
            if ci < lo:
                lo = ci
            if ci > hi:
                hi = ci
    stats[S_LHS] = lsum
    stats[S_LHS_C] = lcomp
    stats[S_LHS_ABS] = labs
    stats[S_RHS] = -dt * bsum
    stats[S_RHS_C] = -dt * bcomp
    stats[S_SCALE] = labs + dt * (habs + wsum)
    stats[S_DMAX] = dmax
    stats[S_MIN] = lo
    stats[S_MAX] = hi


# ------------------------------------------------------------------- problem
BoundaryFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(eq=False)
class TransportProblem:
    """Everything the explicit scheme needs, with the kernel arrays prepared.

    Parameters
    ----------
    flux, volumes : FluxField, ControlVolumes
    node_coords : (n_nodes, d) array
        Positions passed to ``boundary``.
    boundary : callable ``(t, coords) -> values``
        Dirichlet concentration on the Dirichlet nodes.
    wells : WellTerms, optional
    time_dependent : bool
        Re-evaluate ``boundary`` after every step (otherwise once).
    rows, row_own, inc_own, own : optional
        Restriction used by parallel workers: updated rows, which of them are
        owned, owned incidences and owned dofs.  Default: everything.
    """

    flux: FluxField
    volumes: ControlVolumes
    node_coords: np.ndarray
    boundary: BoundaryFn
    wells: WellTerms | None = None
    time_dependent: bool = True
    rows: np.ndarray | None = None
    row_own: np.ndarray | None = None
    inc_own: np.ndarray | None = None
    own: np.ndarray | None = None

    def __post_init__(self):
        lay = self.flux.layout
        if self.wells is None:
            self.wells = WellTerms.none(lay)
        act = self.volumes.active
        if self.rows is None:
            self.rows = np.flatnonzero(act).astype(np.int64)
        if self.row_own is None:
            self.row_own = np.ones(len(self.rows), dtype=bool)
        if self.inc_own is None:
            self.inc_own = np.ones(len(self.flux), dtype=bool)
        self.dir_nodes = np.flatnonzero(self.volumes.dirichlet).astype(np.int64)
        self._fp = np.maximum(self.flux.flux, 0.0)
        self._fm = np.minimum(self.flux.flux, 0.0)
        dir_full = np.zeros(lay.size, dtype=bool)
        dir_full[self.dir_nodes] = True
        self._tgt_dir = dir_full[self.flux.target]
        csr, sign = self.flux.gather
        self._g = (csr.ptr, csr.idx, sign)
        self._row_chk = self.flux.checked()[self.rows]
        self._h = np.empty(len(self.flux))
        self._bc_cache = None

    @property
    def layout(self) -> DofLayout:
        return self.flux.layout

    def cfl(self) -> float:
        """CFL bound over this problem's owned rows."""
        out = self.flux.outflow(self.wells)
        rows = self.rows[self.row_own]
        sel = out[rows] > 0.0
        if not np.any(sel):
            return math.inf
        return float(np.min(self.volumes.phi[rows][sel] / out[rows][sel]))

    def boundary_values(self, t: float) -> np.ndarray:
        if not self.time_dependent and self._bc_cache is not None:
            return self._bc_cache
        vals = np.asarray(self.boundary(t, self.node_coords[self.dir_nodes]), float)
        vals = np.broadcast_to(vals, self.dir_nodes.shape).astype(float)
        self._bc_cache = vals
        return vals

    def initial_state(self, c0=None, t0: float = 0.0) -> np.ndarray:
        c = np.zeros(self.layout.size) if c0 is None else np.array(c0, dtype=float)
        c[self.dir_nodes] = self.boundary_values(t0)
        return c

    def advance(self, c, dt: float, t_new: float, out=None, stats=None):
        """Explicit step from ``c``; returns ``(c_new, stats)``."""
        out = np.array(c, dtype=float) if out is None else out
        stats = np.empty(N_STATS) if stats is None else stats
        _advance(c, out, self.flux.centre, self.flux.target, self._fp, self._fm, self.inc_own,
                 self._tgt_dir, *self._g, self.rows, self.row_own, self._row_chk, self.volumes.phi,
                 self.wells.production, self.wells.injection, float(dt), self._h, stats)
        out[self.dir_nodes] = self.boundary_values(t_new)
        return out, stats


def mass_defect(stats) -> tuple[float, float]:
    """Absolute and relative mismatch of the mass balance from one step's stats."""
    lhs = math.fsum([stats[S_LHS], stats[S_LHS_C]])
    rhs = math.fsum([stats[S_RHS], stats[S_RHS_C]])
    err = abs(lhs - rhs)
    scale = stats[S_SCALE]
    return err, (err / scale if scale > 0.0 else err)


def step(problem: TransportProblem, c, dt: float, t_new: float, dt_cfl: float | None = None) -> np.ndarray:
    """One checked explicit step.

    Raises
    ------
    CFLViolationError
        If ``dt`` exceeds the CFL bound.
    """
    bound = problem.cfl() if dt_cfl is None else dt_cfl
    if dt > bound * (1.0 + CFL_SLACK):
        raise CFLViolationError(f"time step {dt!r} exceeds the CFL bound {bound!r}")
    return problem.advance(np.asarray(c, float), dt, t_new)[0]


# --------------------------------------------------------------------- run
def step_schedule(t0: float, t1: float, dt: float) -> np.ndarray:
    """``N = ceil((t1 - t0) / dt)`` steps of size ``dt``, the last one shortened.

    A remainder below ``SLIVER * dt`` is not taken as a step of its own: the
    last two steps then share ``dt + remainder`` evenly.  A sliver step would
    change the state by less than the rounding of the state itself.
    """
    if not t1 > t0:
        return np.zeros(0)
    span = t1 - t0
    n = max(1, math.ceil(span / dt - 1e-12))
    steps = np.full(n, dt)
    steps[-1] = span - (n - 1) * dt
    if n >= 2 and steps[-1] < SLIVER * dt:
        pair = span - (n - 2) * dt
        steps[-2] = 0.5 * pair
        steps[-1] = pair - steps[-2]
    return steps


@dataclass
class RunStats:
    n_steps: int = 0
    max_mass_defect: float = 0.0
    min_value: float = math.inf
    max_value: float = -math.inf
    last_change_rate: float = math.inf

    def update(self, stats, dt):
        self.n_steps += 1
        self.max_mass_defect = max(self.max_mass_defect, mass_defect(stats)[1])
        self.min_value = min(self.min_value, stats[S_MIN])
        self.max_value = max(self.max_value, stats[S_MAX])
        self.last_change_rate = stats[S_DMAX] / dt


@dataclass
class TransportResult:
    times: list[float]
    states: list[np.ndarray]
    dt: float
    final_time: float
    stats: RunStats
    bounds: tuple[float, float]
    series: list[tuple[float, float, float]] = field(default_factory=list)
    stationary: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def max_principle_violation(self) -> float:
        lo, hi = self.bounds
        return max(0.0, lo - self.stats.min_value, self.stats.max_value - hi)


def tracer_volumes(volumes: ControlVolumes, fracture_nodes: np.ndarray, c, own=None) -> tuple[float, float]:
    """Tracer volume in the matrix (cells, matrix nodes) and in the fractures (faces, fracture nodes)."""
    lay = volumes.layout
    v = volumes.phi * np.asarray(c, float)
    if own is not None:
        v = np.where(own, v, 0.0)
    node_v = v[: lay.n_nodes]
    m = math.fsum(v[lay.n_cells_offset:]) + math.fsum(node_v[~fracture_nodes])
    f = math.fsum(v[lay.n_nodes: lay.n_cells_offset]) + math.fsum(node_v[fracture_nodes])
    return m, f


class Collective:
    """Reductions seen by the time loop; trivial when running sequentially.

    Parallel workers substitute a communicating implementation so the same
    loop drives every part.
    """

    def min(self, x: float) -> float:
        return x

    def max(self, x: float) -> float:
        return x

    def sum(self, values) -> list[float]:
        return [float(v) for v in values]

    def sync(self, c) -> None:
        """Refresh ghost values of ``c`` in place."""

    def stats(self, stats):
        return stats


def run(problem: TransportProblem, T: float, c0=None, snapshot_times=(), cfl_safety: float = 1.0,
        dt: float | None = None, stationary_tol: float | None = None, series_every: int = 0,
        fracture_nodes=None, on_step=None, max_steps: int | None = None,
        collective: Collective | None = None) -> TransportResult:
    """Advance to ``T`` and record snapshots.

    The interval between consecutive snapshot times is covered with the
    uniform CFL step and one shortened final step, so snapshots are taken at
    their exact times; without intermediate snapshots this is the plain
    ``ceil(T / dt)`` schedule.  With ``stationary_tol`` the run stops early,
    once ``max |dc| / dt`` falls below it; ``max_steps`` caps the step count.
    """
    coll = collective or Collective()
    if not T > 0.0:
        raise InvalidParameterError("final time must be positive")
    if not 0.0 < cfl_safety <= 1.0:
        raise InvalidParameterError("cfl_safety must lie in (0, 1]")
    dt_cfl = coll.min(problem.cfl())
    if not math.isfinite(dt_cfl):
        raise NoFlowError("no control volume has outflow; the CFL step is unbounded")
    if dt is None:
        dt = cfl_safety * dt_cfl
    elif dt > dt_cfl * (1.0 + CFL_SLACK):
        raise CFLViolationError(f"time step {dt!r} exceeds the CFL bound {dt_cfl!r}")
    snaps = sorted({float(s) for s in snapshot_times} | {float(T)})
    if snaps[0] < 0.0 or snaps[-1] > T:
        raise InvalidParameterError("snapshot times must lie in [0, T]")
    c = problem.initial_state(c0, 0.0)
    coll.sync(c)
    chk = problem.flux.checked()
    lo = coll.min(float(np.min(c[chk], initial=np.inf)))
    hi = coll.max(float(np.max(c[chk], initial=-np.inf)))
    stats_acc = RunStats()
    result = TransportResult([], [], dt, 0.0, stats_acc, (lo, hi))
    fn = np.zeros(problem.layout.n_nodes, bool) if fracture_nodes is None else fracture_nodes

    def volumes_now(t_now):
        m, f = coll.sum(tracer_volumes(problem.volumes, fn, c, problem.own))
        result.series.append((t_now, m, f))

    if snaps[0] == 0.0:
        result.times.append(0.0)
        result.states.append(c.copy())
    if series_every:
        volumes_now(0.0)
    buf = c.copy()
    stats = np.empty(N_STATS)
    t = 0.0
    stop = False
    for t_snap in snaps:
        if t_snap == 0.0:
            continue
        base = t
        steps = step_schedule(base, t_snap, dt)
        for k, h in enumerate(steps):
            t_new = t_snap if k == len(steps) - 1 else (base + (k + 1) * dt if h == dt else t + h)
            buf, stats = problem.advance(c, h, t_new, buf, stats)
            c, buf = buf, c
            coll.sync(c)
            t = t_new
            stats_acc.update(coll.stats(stats), h)
            if problem.time_dependent and len(problem.dir_nodes):
                dv = problem.boundary_values(t)
                result.bounds = (min(result.bounds[0], float(dv.min())), max(result.bounds[1], float(dv.max())))
            if on_step is not None:
                on_step(t, c)
            if series_every and stats_acc.n_steps % series_every == 0:
                volumes_now(t)
            if stationary_tol is not None and stats_acc.last_change_rate < stationary_tol:
                result.stationary = stop = True
            if max_steps is not None and stats_acc.n_steps >= max_steps:
                stop = True
            if stop:
                break
        if stop:
            result.times.append(t)
            result.states.append(c.copy())
            break
        result.times.append(t_snap)
        result.states.append(c.copy())
    result.final_time = t
    if series_every and result.series[-1][0] != t:
        volumes_now(t)
    return result


# ------------------------------------------------------------------ output
def dof_positions(mesh: Mesh) -> np.ndarray:
    return np.concatenate([mesh.nodes, mesh.face_centers[mesh.fracture_faces], mesh.cell_centers])


def write_snapshot_csv(path, mesh: Mesh, c, time: float | None = None) -> None:
    """One row per dof: id, kind, kind-local index, coordinates, value."""
    lay = DofLayout.of(mesh)
    pos = dof_positions(mesh)
    kinds = lay.kind()
    local = lay.local_ids()
    axes = "xyz"[: mesh.dim]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow((["time"] if time is not None else []) + ["dof", "kind", "index", *axes, "value"])
        pre = [repr(float(time))] if time is not None else []
        for i in range(lay.size):
            w.writerow(pre + [i, KIND_NAMES[kinds[i]], int(local[i]), *(repr(float(x)) for x in pos[i]),
                              repr(float(c[i]))])


def write_series_csv(path, series) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "tracer_matrix", "tracer_fracture"])
        for t, m, f in series:
            w.writerow([repr(float(t)), repr(float(m)), repr(float(f))])


def write_snapshot_vtk(path, mesh: Mesh, c, extra_cell=None, extra_point=None, title="tracer") -> None:
    from .mesh_io import write_vtk

    lay = DofLayout.of(mesh)
    nodes, faces, cells = lay.split(np.asarray(c, float))
    cell_data = {"concentration": cells, **(extra_cell or {})}
    point_data = {"concentration": nodes, **(extra_point or {})}
    write_vtk(path, mesh, cell_data=cell_data, point_data=point_data,
              fracture_data={"concentration": faces}, title=title)
