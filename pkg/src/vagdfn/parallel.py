"""Owner/ghost domain decomposition and an in-process SPMD engine.

Cells are split by recursive coordinate bisection.  A node (resp. fracture
face) belongs to the part of its lowest-numbered neighbouring cell.  Each
part also holds one layer of ghost cells, every cell sharing a node with
an owned cell, which is exactly what its own rows need for the Darcy and
transport equations.

Workers are threads that run the same code on their local meshes and meet
only in collectives (all-gather behind a barrier).  Local numbering is
monotone in the global numbering and local rows are assembled in the same
order as sequential ones, so with exactly rounded inner products the
parallel iterates match the sequential ones bit for bit.
"""
from __future__ import annotations

import csv
import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .darcy import BoundaryConditions, SourceTerms, back_substitute, check_solvable, condense
from .dofs import DofLayout
from .errors import InvalidParameterError, VagError
from .krylov import SOLVERS, SolverConfig, SolveResult, csr_matvec, direct_solve, dot_partials, make_preconditioner
from .mesh import Mesh, RestrictedMesh
from .properties import FractureProperties, MatrixProperties, fracture_frames
from .transport import (N_STATS, S_DMAX, S_LHS, S_LHS_ABS, S_LHS_C, S_MAX, S_MIN, S_RHS, S_RHS_C, S_SCALE,
                        Collective, ControlVolumes, FluxField, TransportProblem, TransportResult, WellTerms, run)
from .vag import assemble_transmissibilities


class ParallelConsistencyError(VagError):
    """A ghost dof has no owner or an owned row references a missing dof."""


# --------------------------------------------------------------- partition
@dataclass(frozen=True, eq=False)
class Partition:
    n_parts: int
    cell_part: np.ndarray
    node_owner: np.ndarray
    face_owner: np.ndarray  # by fracture index

    def cells(self, p: int) -> np.ndarray:
        return np.flatnonzero(self.cell_part == p)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cell_part, minlength=self.n_parts)


def _rcb(centres, ids, k, out, first):
    if k == 1:
        out[ids] = first
        return
    k1 = k // 2
    pts = centres[ids]
    axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
    order = np.lexsort((ids, pts[:, axis]))
    n1 = int(math.floor(len(ids) * k1 / k + 0.5))
    _rcb(centres, np.sort(ids[order[:n1]]), k1, out, first)
    _rcb(centres, np.sort(ids[order[n1:]]), k - k1, out, first + k1)


def _min_per_row(csr) -> np.ndarray:
    out = np.full(len(csr), -1, dtype=np.int64)
    nz = csr.counts > 0
    out[nz] = np.minimum.reduceat(csr.idx, csr.ptr[:-1][nz])
    return out


def partition_cells(mesh: Mesh, n_parts: int) -> Partition:
    """Recursive coordinate bisection of the cell centres (ties by index)."""
    n_parts = int(n_parts)
    if n_parts < 1 or n_parts > mesh.n_cells:
        raise InvalidParameterError(f"number of parts must lie in [1, {mesh.n_cells}], got {n_parts}")
    part = np.zeros(mesh.n_cells, dtype=np.int64)
    _rcb(mesh.cell_centers, np.arange(mesh.n_cells), n_parts, part, 0)
    return _with_owners(mesh, n_parts, part)


def _with_owners(mesh: Mesh, n_parts: int, part: np.ndarray) -> Partition:
    first_cell = _min_per_row(mesh.adjacency.cells_of_node)
    if np.any(first_cell < 0):
        raise ParallelConsistencyError("node without cell")
    fc = mesh.face_cells[mesh.fracture_faces]
    first_face_cell = np.where(fc < 0, np.iinfo(np.int64).max, fc).min(axis=1)
    return Partition(n_parts, part, part[first_cell], part[first_face_cell])


def partition_from_labels(mesh: Mesh, labels) -> Partition:
    """Partition from explicit cell labels ``0 .. N_p - 1``."""
    labels = np.asarray(labels, dtype=np.int64)
    n = int(labels.max()) + 1
    if labels.shape != (mesh.n_cells,) or labels.min() < 0 or len(np.unique(labels)) != n:
        raise InvalidParameterError("labels must cover 0 .. N_p - 1, one per cell")
    return _with_owners(mesh, n, labels)


# ----------------------------------------------------------------- overlap
@dataclass(frozen=True, eq=False)
class LocalPart:
    rank: int
    sub: RestrictedMesh
    own_cells: np.ndarray
    own_nodes: np.ndarray
    own_faces: np.ndarray

    @property
    def mesh(self) -> Mesh:
        return self.sub.mesh

    @property
    def layout(self) -> DofLayout:
        return DofLayout.of(self.sub.mesh)

    @property
    def own_reduced(self) -> np.ndarray:
        return np.concatenate([self.own_nodes, self.own_faces])

    @property
    def own_dofs(self) -> np.ndarray:
        return np.concatenate([self.own_nodes, self.own_faces, self.own_cells])

    def global_dofs(self, layout: DofLayout) -> np.ndarray:
        """Global index of every local dof."""
        return np.concatenate([self.sub.nodes, layout.fracture_face(self.sub.fracture_faces),
                               layout.cell(self.sub.cells)]).astype(np.int64)

    @property
    def ghost_cells(self) -> np.ndarray:
        return self.sub.cells[~self.own_cells]


@dataclass(frozen=True, eq=False)
class OverlapPartition:
    partition: Partition
    parts: list


def build_overlap(mesh: Mesh, partition: Partition) -> OverlapPartition:
    """Own cells plus every cell sharing a node with them, for each part."""
    cn = mesh.cell_nodes
    con = mesh.adjacency.cells_of_node
    parts = []
    for p in range(partition.n_parts):
        own = partition.cells(p)
        nodes = np.unique(cn.take(own).idx)
        cells = np.unique(con.take(nodes).idx)
        sub = mesh.restrict(cells)
        parts.append(LocalPart(
            p, sub,
            partition.cell_part[sub.cells] == p,
            partition.node_owner[sub.nodes] == p,
            partition.face_owner[sub.fracture_faces] == p,
        ))
    return OverlapPartition(partition, parts)


# ---------------------------------------------------------------- exchange
@dataclass(frozen=True, eq=False)
class PartRoutes:
    own_pos: np.ndarray
    ghost_pos: np.ndarray
    src_part: np.ndarray
    src_index: np.ndarray

    def groups(self):
        """``(source part, local positions, source indices)`` per source."""
        out = []
        for q in np.unique(self.src_part):
            sel = self.src_part == q
            out.append((int(q), self.ghost_pos[sel], self.src_index[sel]))
        return out


@dataclass(frozen=True, eq=False)
class ExchangePlan:
    """Routes of every ghost node / fracture-face value from its owner.

    Owned vectors list the owned reduced dofs of a part in local order.
    """

    routes: list

    def apply(self, owned: list) -> list:
        """Full local reduced vectors from the owned vectors of all parts."""
        out = []
        for r in self.routes:
            v = np.empty(len(r.own_pos) + len(r.ghost_pos))
            v[r.own_pos] = owned[len(out)]
            v[r.ghost_pos] = [owned[q][i] for q, i in zip(r.src_part, r.src_index)] if len(r.ghost_pos) else []
            out.append(v)
        return out


def build_exchange(mesh: Mesh, overlap: OverlapPartition) -> ExchangePlan:
    n_v = mesh.n_nodes
    owned_global = []
    for part in overlap.parts:
        g = np.concatenate([part.sub.nodes, n_v + part.sub.fracture_faces])
        owned_global.append(g[part.own_reduced])
    owner = np.full(n_v + mesh.n_fracture_faces, -1, dtype=np.int64)
    index = np.full_like(owner, -1)
    for q, g in enumerate(owned_global):
        if np.any(owner[g] >= 0):
            raise ParallelConsistencyError("dof owned twice")
        owner[g] = q
        index[g] = np.arange(len(g))
    routes = []
    for part in overlap.parts:
        g = np.concatenate([part.sub.nodes, n_v + part.sub.fracture_faces])
        own = part.own_reduced
        ghost = np.flatnonzero(~own)
        src = owner[g[ghost]]
        if np.any(src < 0):
            raise ParallelConsistencyError("ghost dof without owner")
        routes.append(PartRoutes(np.flatnonzero(own), ghost, src, index[g[ghost]]))
    return ExchangePlan(routes)


# ------------------------------------------------------------------- SPMD
class Comm:
    """Barrier-synchronised all-gather between in-process workers."""

    def __init__(self, size: int):
        self.size = size
        self._barrier = threading.Barrier(size)
        self._slots = [None] * size

    def allgather(self, rank: int, obj) -> list:
        if self.size == 1:
            return [obj]
        self._slots[rank] = obj
        self._barrier.wait()
        out = list(self._slots)
        self._barrier.wait()
        return out

    def barrier(self) -> None:
        if self.size > 1:
            self._barrier.wait()

    def abort(self) -> None:
        self._barrier.abort()


def run_spmd(n: int, fn) -> list:
    """Run ``fn(rank, comm)`` on ``n`` threads and return the results by rank."""
    comm = Comm(n)
    if n == 1:
        return [fn(0, comm)]
    results, errors = [None] * n, [None] * n

    def target(r):
        try:
            results[r] = fn(r, comm)
        except BaseException as exc:  # propagate to the caller after joining
            errors[r] = exc
            comm.abort()

    threads = [threading.Thread(target=target, args=(r,), name=f"worker-{r}") for r in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    real = [e for e in errors if e is not None and not isinstance(e, threading.BrokenBarrierError)]
    if real:
        raise real[0]
    if any(e is not None for e in errors):
        raise next(e for e in errors if e is not None)
    return results


class DistributedSpace:
    """Vector space over the owned rows of a distributed matrix.

    ``rows`` is ``(n_own, n_local)`` in local reduced numbering; vectors are
    owned slices.  Each mat-vec refreshes the ghosts first.
    """

    def __init__(self, comm: Comm, rank: int, rows: sp.csr_matrix, routes: PartRoutes,
                 preconditioner: str = "jacobi", deterministic: bool = True):
        rows = rows.tocsr()
        rows.sort_indices()
        self.comm, self.rank = comm, rank
        self._ptr = rows.indptr.astype(np.int64)
        self._idx = rows.indices.astype(np.int64)
        self._val = rows.data.astype(float)
        self.n = rows.shape[0]
        self.routes = routes
        self._groups = routes.groups()
        self._buf = np.zeros(rows.shape[1])
        self.deterministic = deterministic
        self.precond = make_preconditioner(preconditioner, rows[:, routes.own_pos].tocsr())

    def refresh(self, x) -> np.ndarray:
        """Local vector (own + ghosts) built from owned slices of all parts."""
        parts = self.comm.allgather(self.rank, x)
        buf = self._buf
        buf[self.routes.own_pos] = x
        for q, pos, idx in self._groups:
            buf[pos] = parts[q][idx]
        return buf

    def matvec(self, x):
        buf = self.refresh(np.ascontiguousarray(x, float))
        out = np.empty(self.n)
        csr_matvec(self._ptr, self._idx, self._val, buf, out)
        return out

    def dots(self, pairs):
        if self.deterministic:
            local = [dot_partials(np.ascontiguousarray(x, float), np.ascontiguousarray(y, float)) for x, y in pairs]
            allp = self.comm.allgather(self.rank, local)
            return [math.fsum(np.concatenate([p[k] for p in allp])) for k in range(len(pairs))]
        local = [float(np.dot(x, y)) for x, y in pairs]
        allp = self.comm.allgather(self.rank, local)
        return [sum(p[k] for p in allp) for k in range(len(pairs))]

    def dot(self, x, y) -> float:
        return self.dots([(x, y)])[0]

    def norm(self, x) -> float:
        return math.sqrt(max(self.dot(x, x), 0.0))

    def apply_precond(self, r):
        return self.precond.apply(r)

    def zeros(self):
        return np.zeros(self.n)


# --------------------------------------------------------------- Darcy
@dataclass
class Timings:
    assembly: float = 0.0
    solve: float = 0.0
    exchange: float = 0.0
    update: float = 0.0


@dataclass(eq=False)
class WorkerFlow:
    part: LocalPart
    trans: object
    u: np.ndarray
    bc: BoundaryConditions
    timings: Timings


@dataclass(eq=False)
class ParallelFlow:
    overlap: OverlapPartition
    plan: ExchangePlan
    u: np.ndarray
    result: SolveResult
    workers: list
    timings: list = field(default_factory=list)


def _local_sources(sources: SourceTerms | None, part: LocalPart, mesh: Mesh) -> SourceTerms | None:
    if sources is None or len(sources) == 0:
        return None
    loc = np.full(mesh.n_fracture_faces, -1, dtype=np.int64)
    loc[part.sub.fracture_faces] = np.arange(len(part.sub.fracture_faces))
    j = loc[np.asarray(sources.faces, dtype=np.int64)]
    keep = j >= 0
    return SourceTerms(j[keep], np.asarray(sources.diag)[keep], np.asarray(sources.rhs)[keep])


def parallel_darcy_solve(mesh: Mesh, matrix: MatrixProperties, fracture: FractureProperties,
                         bc: BoundaryConditions, partition: Partition, config: SolverConfig,
                         mu: float = 1.0, sources: SourceTerms | None = None, deterministic: bool = True,
                         frames=None) -> ParallelFlow:
    """Local assembly, local condensation, distributed solve, ghost update, cell recovery."""
    check_solvable(bc, sources)
    overlap = build_overlap(mesh, partition)
    plan = build_exchange(mesh, overlap)
    frames = fracture_frames(mesh) if frames is None else frames
    node_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
    layout = DofLayout.of(mesh)

    def worker(rank: int, comm: Comm):
        tm = Timings()
        part = overlap.parts[rank]
        sub = part.sub
        t0 = time.perf_counter()
        trans = assemble_transmissibilities(sub.mesh, matrix.take(sub.cells), fracture.take(sub.fracture_faces),
                                            mu, frames[sub.fracture_faces])
        nm = node_map.copy()
        nm[sub.nodes] = np.arange(len(sub.nodes))
        lbc = bc.restrict(nm)
        own = part.own_reduced
        row_map = np.full(len(own), -1, dtype=np.int64)
        row_map[own] = np.arange(int(own.sum()))
        schur = condense(trans, lbc, _local_sources(sources, part, mesh), keep_rows=own, row_map=row_map,
                         n_rows=int(own.sum()))
        tm.assembly = time.perf_counter() - t0
        routes = plan.routes[rank]
        t0 = time.perf_counter()
        if config.method == "direct":
            res = _gathered_direct(comm, rank, schur.matrix, schur.rhs, part, layout)
        else:
            space = DistributedSpace(comm, rank, schur.matrix, routes, config.preconditioner, deterministic)
            res = SOLVERS[config.method](space, schur.rhs, tol=config.tolerance, max_iter=config.max_iterations)
        tm.solve = time.perf_counter() - t0
        t0 = time.perf_counter()
        parts = comm.allgather(rank, res.x)
        x_local = np.empty(len(own))
        x_local[routes.own_pos] = res.x
        for q, pos, idx in routes.groups():
            x_local[pos] = parts[q][idx]
        tm.exchange = time.perf_counter() - t0
        t0 = time.perf_counter()
        u_local = back_substitute(schur, x_local)
        tm.update = time.perf_counter() - t0
        return WorkerFlow(part, trans, u_local, lbc, tm), res

    out = run_spmd(partition.n_parts, worker)
    u = np.empty(layout.size)
    for wf, _ in out:
        g = wf.part.global_dofs(layout)
        own = wf.part.own_dofs
        u[g[own]] = wf.u[own]
    workers = [wf for wf, _ in out]
    return ParallelFlow(overlap, plan, u, out[0][1], workers, [w.timings for w in workers])


def _gathered_direct(comm: Comm, rank: int, rows: sp.csr_matrix, rhs, part: LocalPart, layout: DofLayout):
    """Gather the distributed rows on every worker, factor on rank 0, scatter."""
    g = np.concatenate([part.sub.nodes, layout.fracture_face(part.sub.fracture_faces)])
    g_rows = g[part.own_reduced]
    coo = rows.tocoo()
    allp = comm.allgather(rank, (g_rows, g_rows[coo.row], g[coo.col], coo.data, rhs))
    if rank == 0:
        n = layout.n_reduced
        r = np.concatenate([p[1] for p in allp])
        c = np.concatenate([p[2] for p in allp])
        v = np.concatenate([p[3] for p in allp])
        b = np.zeros(n)
        for p in allp:
            b[p[0]] = p[4]
        res = direct_solve(sp.csr_matrix((v, (r, c)), shape=(n, n)), b)
    else:
        res = None
    res = comm.allgather(rank, res)[0]
    return SolveResult(res.x[g_rows], res.iterations, res.residual, res.history)


# ------------------------------------------------------------ transport
class WorkerCollective(Collective):
    """Reductions and ghost refresh for one transport worker."""

    def __init__(self, comm: Comm, rank: int, sync_pos, sync_src, sync_idx, own_dofs, timings: Timings):
        self.comm, self.rank = comm, rank
        self._own_dofs = own_dofs
        self._groups = [(int(q), sync_pos[sync_src == q], sync_idx[sync_src == q]) for q in np.unique(sync_src)]
        self.timings = timings

    def min(self, x):
        return min(self.comm.allgather(self.rank, x))

    def max(self, x):
        return max(self.comm.allgather(self.rank, x))

    def sum(self, values):
        allv = self.comm.allgather(self.rank, [float(v) for v in values])
        return [math.fsum(p[k] for p in allv) for k in range(len(values))]

    def sync(self, c):
        t0 = time.perf_counter()
        parts = self.comm.allgather(self.rank, c[self._own_dofs])
        for q, pos, idx in self._groups:
            c[pos] = parts[q][idx]
        self.timings.exchange += time.perf_counter() - t0

    def stats(self, stats):
        allp = self.comm.allgather(self.rank, stats.copy())
        out = np.empty(N_STATS)
        out[S_LHS] = math.fsum([p[S_LHS] for p in allp] + [p[S_LHS_C] for p in allp])
        out[S_LHS_C] = 0.0
        out[S_RHS] = math.fsum([p[S_RHS] for p in allp] + [p[S_RHS_C] for p in allp])
        out[S_RHS_C] = 0.0
        out[S_LHS_ABS] = math.fsum(p[S_LHS_ABS] for p in allp)
        out[S_SCALE] = math.fsum(p[S_SCALE] for p in allp)
        out[S_DMAX] = max(p[S_DMAX] for p in allp)
        out[S_MIN] = min(p[S_MIN] for p in allp)
        out[S_MAX] = max(p[S_MAX] for p in allp)
        return out


@dataclass(eq=False)
class ParallelTransport:
    result: TransportResult
    states: list
    timings: list


def _dof_routes(mesh: Mesh, overlap: OverlapPartition):
    """Ghost routes over all local dofs (nodes, fracture faces, cells)."""
    layout = DofLayout.of(mesh)
    owner = np.full(layout.size, -1, dtype=np.int64)
    index = np.full(layout.size, -1, dtype=np.int64)
    for part in overlap.parts:
        g = part.global_dofs(layout)[part.own_dofs]
        owner[g] = part.rank
        index[g] = np.arange(len(g))
    out = []
    for part in overlap.parts:
        g = part.global_dofs(layout)
        ghost = np.flatnonzero(~part.own_dofs)
        out.append((ghost, owner[g[ghost]], index[g[ghost]]))
    return out


def parallel_transport_run(mesh: Mesh, flow: ParallelFlow, volumes: ControlVolumes, boundary,
                           T: float, wells: WellTerms | None = None, time_dependent: bool = True,
                           deterministic: bool = True, **run_kw) -> ParallelTransport:
    """Explicit upwind transport on the workers of ``flow``.

    Each worker updates its own nodes and fracture faces and every overlap
    cell, then refreshes ghosts; the time step is a global minimum.
    Snapshots are assembled from the owners' values.
    """
    layout = DofLayout.of(mesh)
    routes = _dof_routes(mesh, flow.overlap)
    n_parts = len(flow.workers)
    timings = [Timings() for _ in range(n_parts)]

    def worker(rank: int, comm: Comm):
        wf = flow.workers[rank]
        part = wf.part
        g = part.global_dofs(layout)
        lay = part.layout
        dmask = np.zeros(lay.n_nodes, dtype=bool)
        dmask[wf.bc.nodes] = True
        flux = FluxField.from_pressure(wf.trans, wf.u, dmask)
        vol = ControlVolumes(lay, volumes.phi[g], dmask, volumes.width[part.sub.fracture_faces])
        lw = None
        if wells is not None:
            lw = WellTerms(wells.production[g], wells.injection[g])
        own = part.own_dofs
        active = vol.active
        rows = np.flatnonzero(active & (own | (lay.kind() == 2)))
        own_cells_full = np.zeros(lay.size, dtype=bool)
        own_cells_full[lay.n_cells_offset:] = part.own_cells
        own_fr = np.zeros(lay.size, dtype=bool)
        own_fr[lay.n_nodes: lay.n_cells_offset] = part.own_faces
        inc_own = (own_cells_full | own_fr)[flux.centre]
        prob = TransportProblem(flux, vol, part.mesh.nodes, boundary, lw, time_dependent,
                                rows=rows.astype(np.int64), row_own=own[rows], inc_own=inc_own, own=own)
        ghost, src, idx = routes[rank]
        coll = WorkerCollective(comm, rank, ghost, src, idx, own, timings[rank])
        fnodes = part.mesh.is_fracture_node
        t0 = time.perf_counter()
        res = run(prob, T, collective=coll, fracture_nodes=fnodes, **run_kw)
        timings[rank].update = time.perf_counter() - t0 - timings[rank].exchange
        return res, g, own

    out = run_spmd(n_parts, worker)
    first = out[0][0]
    states = []
    for k in range(len(first.states)):
        c = np.empty(layout.size)
        for res, g, own in out:
            c[g[own]] = res.states[k][own]
        states.append(c)
    first.states = states
    for res, _, _ in out[1:]:
        first.bounds = (min(first.bounds[0], res.bounds[0]), max(first.bounds[1], res.bounds[1]))
    return ParallelTransport(first, states, timings)


def write_timings_csv(path, timings, phase: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["part", "assembly", "solve", "exchange", "update"])
        for p, t in enumerate(timings):
            w.writerow([p, repr(t.assembly), repr(t.solve), repr(t.exchange), repr(t.update)])
