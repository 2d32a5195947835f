"""Discrete Darcy system, cell elimination and solution.

Unknowns are ordered as in :class:`~vagdfn.dofs.DofLayout`: nodes ``v``,
fracture faces ``f``, cells ``c``.  Only cells couple to their own nodes and
fracture faces, so ``A_cc`` is diagonal and the cells are eliminated without
fill-in.  Dirichlet nodes are treated by symmetric elimination: identity
rows and their known columns moved to the right-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numba import njit

from .dofs import DofLayout
from .errors import InvalidParameterError, SingularSystemError
from .krylov import SolveResult, SolverConfig, solve_linear
from .vag import LocalBlocks, Transmissibilities


@dataclass(frozen=True, eq=False)
class BoundaryConditions:
    """Dirichlet pressures on a subset of the boundary nodes."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        values = np.broadcast_to(np.asarray(self.values, dtype=float), nodes.shape).copy()
        order = np.argsort(nodes, kind="stable")
        nodes, values = nodes[order], values[order]
        if len(np.unique(nodes)) != len(nodes):
            raise InvalidParameterError("duplicate Dirichlet node")
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("Dirichlet values must be finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, mesh, nodes, fn) -> "BoundaryConditions":
        nodes = np.asarray(nodes, dtype=np.int64)
        if np.any(~mesh.is_boundary_node[nodes]):
            raise InvalidParameterError("Dirichlet nodes must be boundary nodes")
        return cls(nodes, np.asarray(fn(mesh.nodes[nodes]), dtype=float))

    def mask(self, n_nodes: int) -> np.ndarray:
        m = np.zeros(n_nodes, dtype=bool)
        m[self.nodes] = True
        return m

    def restrict(self, node_map: np.ndarray) -> "BoundaryConditions":
        """Keep the nodes present in a local numbering (``node_map[g] >= 0``)."""
        local = node_map[self.nodes]
        keep = local >= 0
        return BoundaryConditions(local[keep], self.values[keep])


@dataclass(frozen=True, eq=False)
class SourceTerms:
    """Fracture-face well terms: ``diag`` added to the row, ``rhs`` to its rhs.

    A pressure-controlled perforation contributes ``WI`` and ``WI p_w``; a
    rate-controlled one contributes ``0`` and ``-q``.
    """

    faces: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    diag: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.faces)


# ----------------------------------------------------------- block system
@njit(cache=True, nogil=True)
def _full_triplets(d_ptr, d_idx, centre, vptr, val, rows, cols, vals, start):
    """Symmetric stiffness entries of every local block (centre last)."""
    p = start
    for k in range(len(d_ptr) - 1):
        p0 = d_ptr[k]
        m = d_ptr[k + 1] - p0
        v0 = vptr[k]
        c = centre[k]
        tot = 0.0
        for i in range(m):
            ri = 0.0
            for j in range(m):
                a = val[v0 + i * m + j]
                ri += a
                rows[p] = d_idx[p0 + i]
                cols[p] = d_idx[p0 + j]
                vals[p] = a
                p += 1
            tot += ri
            rows[p] = d_idx[p0 + i]
            cols[p] = c
            vals[p] = -ri
            p += 1
            rows[p] = c
            cols[p] = d_idx[p0 + i]
            vals[p] = -ri
            p += 1
        rows[p] = c
        cols[p] = c
        vals[p] = tot
        p += 1
    return p


def _full_size(blocks: LocalBlocks) -> int:
    m = blocks.dofs.counts
    return int(np.sum(m * m + 2 * m + 1))


def stiffness_matrix(trans: Transmissibilities) -> sp.csr_matrix:
    """Global symmetric matrix of the conservation equations (no Dirichlet)."""
    n = trans.layout.size
    size = _full_size(trans.cells) + _full_size(trans.faces)
    rows = np.empty(size, np.int64)
    cols = np.empty(size, np.int64)
    vals = np.empty(size)
    p = 0
    for blocks in (trans.cells, trans.faces):
        p = _full_triplets(blocks.dofs.ptr, blocks.dofs.idx, blocks.centre, blocks.ptr, blocks.values,
                           rows, cols, vals, p)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Full system after Dirichlet treatment, with named block views."""

    layout: DofLayout
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: np.ndarray  # bool mask over nodes

    def _slices(self):
        lay = self.layout
        return {"v": slice(0, lay.n_nodes), "f": slice(lay.n_nodes, lay.n_cells_offset),
                "c": slice(lay.n_cells_offset, lay.size)}

    def block(self, row: str, col: str) -> sp.csr_matrix:
        s = self._slices()
        return self.matrix[s[row], :][:, s[col]].tocsr()

    def rhs_block(self, row: str) -> np.ndarray:
        return self.rhs[self._slices()[row]]

    @cached_property
    def A_cc(self) -> sp.csr_matrix:
        return self.block("c", "c")

    def solve_dense(self) -> np.ndarray:
        """Dense direct solve of the whole block system (small sizes only)."""
        return np.linalg.solve(self.matrix.toarray(), self.rhs)


def _check_sources(layout: DofLayout, sources: SourceTerms | None):
    if sources is None or len(sources) == 0:
        return SourceTerms()
    faces = np.asarray(sources.faces, dtype=np.int64)
    if np.any(faces < 0) or np.any(faces >= layout.n_fracture_faces):
        raise InvalidParameterError("source term on a missing fracture face")
    return sources


def _check_solvable(bc: BoundaryConditions, sources: SourceTerms):
    if len(bc.nodes) == 0 and not np.any(np.asarray(sources.diag) > 0.0):
        raise SingularSystemError("no Dirichlet node and no pressure-controlled well: pressure is undetermined")


def assemble_darcy(trans: Transmissibilities, bc: BoundaryConditions,
                   sources: SourceTerms | None = None) -> BlockSystem:
    """Conservation equations for cells, fracture faces and nodes."""
    lay = trans.layout
    sources = _check_sources(lay, sources)
    _check_solvable(bc, sources)
    a = stiffness_matrix(trans).tolil()
    b = np.zeros(lay.size)
    if len(sources):
        rows = lay.fracture_face(sources.faces)
        for r, dg, rh in zip(rows, sources.diag, sources.rhs):
            a[r, r] = a[r, r] + dg
            b[r] += rh
    a = a.tocsr()
    mask = bc.mask(lay.n_nodes)
    ubar = np.zeros(lay.size)
    ubar[bc.nodes] = bc.values
    b -= a @ ubar
    keep = np.ones(lay.size)
    keep[bc.nodes] = 0.0
    d = sp.diags(keep)
    a = (d @ a @ d).tocsr() + sp.diags(1.0 - keep)
    b[bc.nodes] = bc.values
    a.eliminate_zeros()
    return BlockSystem(lay, a.tocsr(), b, mask)


# ---------------------------------------------------------- Schur system
@dataclass(frozen=True, eq=False)
class SchurSystem:
    """Reduced system over nodes and fracture faces plus elimination data.

    ``a_cc`` is the cell diagonal, ``a_cx`` the cell rows restricted to the
    reduced unknowns (all columns, Dirichlet ones included) and ``b_c`` the
    matching cell right-hand side, so ``U_c = (b_c - a_cx U) / a_cc``.
    """

    layout: DofLayout
    matrix: sp.csr_matrix
    rhs: np.ndarray
    a_cc: np.ndarray
    a_cx: sp.csr_matrix
    b_c: np.ndarray
    dirichlet: np.ndarray


def schur_eliminate(system: BlockSystem) -> SchurSystem:
    """Eliminate the cell unknowns of a block system with sparse algebra."""
    lay = system.layout
    a = system.matrix
    n_red = lay.n_reduced
    a_cc = system.A_cc.diagonal()
    off = system.A_cc - sp.diags(a_cc)
    if off.count_nonzero():
        raise SingularSystemError("cell block is not diagonal")
    if np.any(a_cc == 0.0):
        raise SingularSystemError("zero diagonal entry in the cell block")
    a_xx = a[:n_red, :][:, :n_red]
    a_xc = a[:n_red, :][:, n_red:]
    a_cx = a[n_red:, :][:, :n_red].tocsr()
    b_c = system.rhs[n_red:].copy()
    inv = sp.diags(1.0 / a_cc)
    s = (a_xx - a_xc @ inv @ a_cx).tocsr()
    s.sum_duplicates()
    s.sort_indices()
    rhs = system.rhs[:n_red] - a_xc @ (b_c / a_cc)
    return SchurSystem(lay, s, rhs, a_cc, a_cx, b_c, system.dirichlet)


@njit(cache=True, nogil=True)
def _schur_triplets(c_ptr, c_idx, c_vptr, c_val, f_ptr, f_idx, f_centre, f_vptr, f_val,
                    is_dir, dval, keep, s_idx, s_diag, s_rhs, rows, cols, vals, rhs):
    """Condensed entries in a fixed order: cells, fracture faces, wells, Dirichlet rows."""
    p = 0
    rsum = np.empty(64)
    for k in range(len(c_ptr) - 1):
        p0 = c_ptr[k]
        m = c_ptr[k + 1] - p0
        v0 = c_vptr[k]
        if m > len(rsum):
            rsum = np.empty(2 * m)
        tot = 0.0
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += c_val[v0 + i * m + j]
            rsum[i] = acc
            tot += acc
        for i in range(m):
            ri = c_idx[p0 + i]
            if is_dir[ri] or not keep[ri]:
                continue
            for j in range(m):
                cj = c_idx[p0 + j]
                s = c_val[v0 + i * m + j] - rsum[i] * rsum[j] / tot
                if is_dir[cj]:
                    rhs[ri] -= s * dval[cj]
                else:
                    rows[p] = ri
                    cols[p] = cj
                    vals[p] = s
                    p += 1
    for k in range(len(f_ptr) - 1):
        p0 = f_ptr[k]
        m = f_ptr[k + 1] - p0
        v0 = f_vptr[k]
        c = f_centre[k]
        if m > len(rsum):
            rsum = np.empty(2 * m)
        tot = 0.0
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += f_val[v0 + i * m + j]
            rsum[i] = acc
            tot += acc
        for i in range(m):
            ri = f_idx[p0 + i]
            if is_dir[ri] or not keep[ri]:
                continue
            for j in range(m):
                cj = f_idx[p0 + j]
                a = f_val[v0 + i * m + j]
                if is_dir[cj]:
                    rhs[ri] -= a * dval[cj]
                else:
                    rows[p] = ri
                    cols[p] = cj
                    vals[p] = a
                    p += 1
            rows[p] = ri
            cols[p] = c
            vals[p] = -rsum[i]
            p += 1
        if keep[c]:
            for j in range(m):
                cj = f_idx[p0 + j]
                if is_dir[cj]:
                    rhs[c] += rsum[j] * dval[cj]
                else:
                    rows[p] = c
                    cols[p] = cj
                    vals[p] = -rsum[j]
                    p += 1
            rows[p] = c
            cols[p] = c
            vals[p] = tot
            p += 1
    for q in range(len(s_idx)):
        r = s_idx[q]
        if keep[r]:
            rows[p] = r
            cols[p] = r
            vals[p] = s_diag[q]
            p += 1
            rhs[r] += s_rhs[q]
    for r in range(len(is_dir)):
        if is_dir[r] and keep[r]:
            rows[p] = r
            cols[p] = r
            vals[p] = 1.0
            p += 1
            rhs[r] = dval[r]
    return p


@njit(cache=True, nogil=True)
def _reduce_sorted(rows, cols, vals, order, n_rows):
    """Sum duplicates of pre-sorted triplets sequentially into CSR arrays."""
    n = len(order)
    ptr = np.zeros(n_rows + 1, np.int64)
    idx = np.empty(n, np.int64)
    out = np.empty(n)
    q = -1
    last_r = -1
    last_c = -1
    for t in range(n):
        o = order[t]
        r = rows[o]
        c = cols[o]
        if r == last_r and c == last_c:
            out[q] += vals[o]
        else:
            q += 1
            idx[q] = c
            out[q] = vals[o]
            ptr[r + 1] += 1
            last_r = r
            last_c = c
    for i in range(n_rows):
        ptr[i + 1] += ptr[i]
    return ptr, idx[: q + 1].copy(), out[: q + 1].copy()


def deterministic_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """CSR matrix whose duplicate entries are summed in input order."""
    order = np.lexsort((cols, rows))
    ptr, idx, out = _reduce_sorted(rows, cols, vals, order, shape[0])
    return sp.csr_matrix((out, idx, ptr), shape=shape)


def condense(trans: Transmissibilities, bc: BoundaryConditions, sources: SourceTerms | None = None,
             keep_rows=None, row_map=None, n_rows=None) -> SchurSystem:
    """Assemble the Schur system directly from the local blocks.

    Entries are accumulated cell by cell, then face by face, and reduced in
    that order, so a worker assembling its own rows from an overlapping local
    mesh reproduces the global rows bit for bit.

    Parameters
    ----------
    keep_rows : bool array over reduced unknowns, optional
        Rows to assemble (all by default).
    row_map, n_rows : optional
        Renumbering of kept rows (local owned index) and their count; columns
        keep the reduced numbering of ``trans``.
    """
    lay = trans.layout
    n_red = lay.n_reduced
    sources = _check_sources(lay, sources)
    is_dir = np.zeros(n_red, dtype=bool)
    is_dir[bc.nodes] = True
    dval = np.zeros(n_red)
    dval[bc.nodes] = bc.values
    keep = np.ones(n_red, dtype=bool) if keep_rows is None else np.asarray(keep_rows, dtype=bool)
    cells, faces = trans.cells, trans.faces
    cap = (int(np.sum(cells.dofs.counts ** 2)) + int(np.sum((faces.dofs.counts + 1) ** 2))
           + len(sources) + n_red)
    rows = np.empty(cap, np.int64)
    cols = np.empty(cap, np.int64)
    vals = np.empty(cap)
    rhs = np.zeros(n_red)
    s_idx = np.asarray(lay.fracture_face(np.asarray(sources.faces, dtype=np.int64)), dtype=np.int64)
    n = _schur_triplets(
        cells.dofs.ptr, cells.dofs.idx, cells.ptr, cells.values,
        faces.dofs.ptr, faces.dofs.idx, faces.centre, faces.ptr, faces.values,
        is_dir, dval, keep, s_idx, np.asarray(sources.diag, float), np.asarray(sources.rhs, float),
        rows, cols, vals, rhs,
    )
    rows, cols, vals = rows[:n], cols[:n], vals[:n]
    if row_map is None:
        mat = deterministic_csr(rows, cols, vals, (n_red, n_red))
        out_rhs = rhs
    else:
        mat = deterministic_csr(np.asarray(row_map)[rows], cols, vals, (n_rows, n_red))
        out_rhs = np.zeros(n_rows)
        sel = np.flatnonzero(keep)
        out_rhs[np.asarray(row_map)[sel]] = rhs[sel]
    a_cc, a_cx = cell_elimination_data(cells, lay)
    return SchurSystem(lay, mat, out_rhs, a_cc, a_cx, np.zeros(lay.n_cells), is_dir[: lay.n_nodes].copy())


def cell_elimination_data(cells: LocalBlocks, lay: DofLayout):
    """``A_cc`` diagonal and ``A_cx`` rows of the cell equations."""
    rs = cells.row_sums()
    a_cc = np.bincount(cells.dofs.row_ids, weights=rs, minlength=len(cells))
    a_cx = sp.csr_matrix((-rs, cells.dofs.idx, cells.dofs.ptr), shape=(len(cells), lay.n_reduced))
    return a_cc, a_cx


def check_solvable(bc: BoundaryConditions, sources: SourceTerms | None = None) -> None:
    _check_solvable(bc, sources if sources is not None else SourceTerms())


def solve(schur: SchurSystem, config: SolverConfig, deterministic: bool = True) -> SolveResult:
    """Solve the reduced system; returns node and fracture-face values."""
    return solve_linear(schur.matrix, schur.rhs, config, deterministic)


def back_substitute(schur: SchurSystem, x) -> np.ndarray:
    """Recover the cell values and return the full dof vector."""
    x = np.asarray(x, float)
    if np.any(schur.a_cc == 0.0):
        raise SingularSystemError("zero diagonal entry in the cell block")
    cells = (schur.b_c - schur.a_cx @ x) / schur.a_cc
    return np.concatenate([x, cells])


@dataclass(frozen=True, eq=False)
class PressureSolution:
    u: np.ndarray
    result: SolveResult
    schur: SchurSystem


def solve_pressure(trans: Transmissibilities, bc: BoundaryConditions, config: SolverConfig,
                   sources: SourceTerms | None = None, deterministic: bool = True) -> PressureSolution:
    """Assemble, condense, solve and back-substitute."""
    check_solvable(bc, sources)
    schur = condense(trans, bc, sources)
    res = solve(schur, config, deterministic)
    return PressureSolution(back_substitute(schur, res.x), res, schur)


def export_coo(path, matrix) -> None:
    """Write ``row col value`` lines (0-based) for external checks."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")


def write_solver_log(path, result: SolveResult) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(result.history):
            w.writerow([i, repr(float(r))])
