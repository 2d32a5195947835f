"""VAG transmissibilities and Darcy fluxes.

Cell blocks ``a_K`` are indexed by the cell's nodes (sorted) followed by its
fracture faces (sorted); fracture-face blocks ``a_f`` by the face's node
cycle.  Both are computed exactly from constant P1 gradients on the submesh
(see :mod:`vagdfn.submesh` for the construction, which the kernels below
replicate simplex by simplex without storing it).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._csr import Csr
from .dofs import DofLayout
from .errors import GeometryError, InvalidParameterError, InvalidPropertyError
from .mesh import Mesh
from .properties import FractureProperties, MatrixProperties, fracture_frames


# ----------------------------------------------------------------- kernels
@njit(cache=True, nogil=True)
def _inv3(j):
    """Inverse and determinant of a 3x3 matrix."""
    c00 = j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1]
    c01 = j[1, 2] * j[2, 0] - j[1, 0] * j[2, 2]
    c02 = j[1, 0] * j[2, 1] - j[1, 1] * j[2, 0]
    det = j[0, 0] * c00 + j[0, 1] * c01 + j[0, 2] * c02
    inv = np.empty((3, 3))
    inv[0, 0] = c00 / det
    inv[1, 0] = c01 / det
    inv[2, 0] = c02 / det
    inv[0, 1] = (j[0, 2] * j[2, 1] - j[0, 1] * j[2, 2]) / det
    inv[1, 1] = (j[0, 0] * j[2, 2] - j[0, 2] * j[2, 0]) / det
    inv[2, 1] = (j[0, 1] * j[2, 0] - j[0, 0] * j[2, 1]) / det
    inv[0, 2] = (j[0, 1] * j[1, 2] - j[0, 2] * j[1, 1]) / det
    inv[1, 2] = (j[0, 2] * j[1, 0] - j[0, 0] * j[1, 2]) / det
    inv[2, 2] = (j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]) / det
    return inv, det


@njit(cache=True, nogil=True)
def _inv2(j):
    det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
    inv = np.empty((2, 2))
    inv[0, 0] = j[1, 1] / det
    inv[0, 1] = -j[0, 1] / det
    inv[1, 0] = -j[1, 0] / det
    inv[1, 1] = j[0, 0] / det
    return inv, det


@njit(cache=True, nogil=True)
def _accumulate(block, m, ids, grads, n_ids, lam, w):
    """block[ids_i, ids_j] += w * g_j . lam g_i, mirrored so blocks stay exactly symmetric."""
    d = grads.shape[1]
    lg = np.empty(d)
    for i in range(n_ids):
        for r in range(d):
            acc = 0.0
            for c in range(d):
                acc += lam[r, c] * grads[i, c]
            lg[r] = acc
        for jj in range(i, n_ids):
            acc = 0.0
            for r in range(d):
                acc += grads[jj, r] * lg[r]
            block[ids[i] * m + ids[jj]] += w * acc
            if jj != i:
                block[ids[jj] * m + ids[i]] += w * acc


@njit(cache=True, nogil=True)
def _cell_blocks(dim, nodes, cell_centers, face_centers, cn_ptr, cn_idx, cf_ptr, cf_idx,
                 fn_ptr, fn_idx, face_cell0, frac_index, ffc_ptr, ffc_idx, perm, inv_mu,
                 out_ptr, out):
    n_cells = len(cn_ptr) - 1
    max_face = 0
    for f in range(len(fn_ptr) - 1):
        max_face = max(max_face, fn_ptr[f + 1] - fn_ptr[f])
    ids = np.empty(max_face + 1, np.int64)
    lpos = np.empty(max_face, np.int64)
    grads = np.zeros((max_face + 1, dim))
    jac = np.empty((dim, dim))
    xk = np.empty(dim)
    for k in range(n_cells):
        nn = cn_ptr[k + 1] - cn_ptr[k]
        m = nn + ffc_ptr[k + 1] - ffc_ptr[k]
        block = out[out_ptr[k] : out_ptr[k + 1]]
        lam = perm[k]
        for r in range(dim):
            xk[r] = cell_centers[k, r]
        for p in range(cf_ptr[k], cf_ptr[k + 1]):
            f = cf_idx[p]
            f0 = fn_ptr[f]
            mf = fn_ptr[f + 1] - f0
            beta = 1.0 / mf
            sgn = 1.0 if face_cell0[f] == k else -1.0
            j = frac_index[f]
            cpos = -1
            if j >= 0:
                for q in range(ffc_ptr[k], ffc_ptr[k + 1]):
                    if ffc_idx[q] == j:
                        cpos = nn + q - ffc_ptr[k]
            for q in range(mf):
                s = fn_idx[f0 + q]
                lo = cn_ptr[k]
                hi = cn_ptr[k + 1]
                while lo < hi:
                    mid = (lo + hi) // 2
                    if cn_idx[mid] < s:
                        lo = mid + 1
                    else:
                        hi = mid
                lpos[q] = lo - cn_ptr[k]
            if dim == 3:
                for e in range(mf):
                    a = e
                    b = (e + 1) % mf
                    sa = fn_idx[f0 + a]
                    sb = fn_idx[f0 + b]
                    for r in range(3):
                        jac[r, 0] = face_centers[f, r] - xk[r]
                        jac[r, 1] = nodes[sa, r] - xk[r]
                        jac[r, 2] = nodes[sb, r] - xk[r]
                    inv, det = _inv3(jac)
                    vol = sgn * det / 6.0
                    if not vol > 0.0:
                        return k
                    n_ids = 0
                    if cpos >= 0:
                        ids[0] = cpos
                        for r in range(3):
                            grads[0, r] = inv[0, r]
                            grads[1, r] = inv[1, r]
                            grads[2, r] = inv[2, r]
                        ids[1] = lpos[a]
                        ids[2] = lpos[b]
                        n_ids = 3
                    else:
                        for q in range(mf):
                            ids[q] = lpos[q]
                            for r in range(3):
                                g = beta * inv[0, r]
                                if q == a:
                                    g += inv[1, r]
                                if q == b:
                                    g += inv[2, r]
                                grads[q, r] = g
                        n_ids = mf
                    _accumulate(block, m, ids, grads, n_ids, lam, vol * inv_mu)
            else:
                sa = fn_idx[f0]
                sb = fn_idx[f0 + 1]
                if cpos < 0:
                    for r in range(2):
                        jac[r, 0] = nodes[sa, r] - xk[r]
                        jac[r, 1] = nodes[sb, r] - xk[r]
                    inv, det = _inv2(jac)
                    vol = sgn * det / 2.0
                    if not vol > 0.0:
                        return k
                    ids[0] = lpos[0]
                    ids[1] = lpos[1]
                    for r in range(2):
                        grads[0, r] = inv[0, r]
                        grads[1, r] = inv[1, r]
                    _accumulate(block, m, ids, grads, 2, lam, vol * inv_mu)
                else:
                    for half in range(2):
                        for r in range(2):
                            if half == 0:
                                jac[r, 0] = nodes[sa, r] - xk[r]
                                jac[r, 1] = face_centers[f, r] - xk[r]
                            else:
                                jac[r, 0] = face_centers[f, r] - xk[r]
                                jac[r, 1] = nodes[sb, r] - xk[r]
                        inv, det = _inv2(jac)
                        vol = sgn * det / 2.0
                        if not vol > 0.0:
                            return k
                        ids[0] = lpos[half]
                        ids[1] = cpos
                        for r in range(2):
                            grads[0, r] = inv[half, r]
                            grads[1, r] = inv[1 - half, r]
                        _accumulate(block, m, ids, grads, 2, lam, vol * inv_mu)
    return -1


@njit(cache=True, nogil=True)
def _face_blocks(dim, nodes, face_centers, faces, fn_ptr, fn_idx, frames, perm, width, inv_mu,
                 out_ptr, out):
    n = len(faces)
    sub = dim - 1
    ids = np.empty(2, np.int64)
    grads = np.zeros((2, sub))
    jac = np.empty((2, 2))
    for jf in range(n):
        f = faces[jf]
        f0 = fn_ptr[f]
        mf = fn_ptr[f + 1] - f0
        block = out[out_ptr[jf] : out_ptr[jf + 1]]
        lam = perm[jf]
        w = width[jf] * inv_mu
        if dim == 2:
            for q in range(2):
                s = fn_idx[f0 + q]
                h = 0.0
                for r in range(2):
                    h += frames[jf, 0, r] * (nodes[s, r] - face_centers[f, r])
                if h == 0.0:
                    return jf
                ids[0] = q
                grads[0, 0] = 1.0 / h
                _accumulate(block, mf, ids, grads, 1, lam, abs(h) * w)
        else:
            ref = 0.0
            for e in range(mf):
                a = e
                b = (e + 1) % mf
                sa = fn_idx[f0 + a]
                sb = fn_idx[f0 + b]
                for t in range(2):
                    ua = 0.0
                    ub = 0.0
                    for r in range(3):
                        ua += frames[jf, t, r] * (nodes[sa, r] - face_centers[f, r])
                        ub += frames[jf, t, r] * (nodes[sb, r] - face_centers[f, r])
                    jac[t, 0] = ua
                    jac[t, 1] = ub
                inv, det = _inv2(jac)
                if det == 0.0 or det * ref < 0.0:
                    return jf
                ref = det
                ids[0] = a
                ids[1] = b
                for t in range(2):
                    grads[0, t] = inv[0, t]
                    grads[1, t] = inv[1, t]
                _accumulate(block, mf, ids, grads, 2, lam, 0.5 * abs(det) * w)
    return -1


@njit(cache=True, nogil=True)
def _block_fluxes(ptr_dofs, idx_dofs, centre, vptr, values, u, out):
    """out[p] = sum_j a_ij (u_centre - u_j) for every incidence p = (row, i)."""
    for k in range(len(ptr_dofs) - 1):
        p0 = ptr_dofs[k]
        m = ptr_dofs[k + 1] - p0
        uc = u[centre[k]]
        v0 = vptr[k]
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += values[v0 + i * m + j] * (uc - u[idx_dofs[p0 + j]])
            out[p0 + i] = acc


# ------------------------------------------------------------------ types
@dataclass(frozen=True, eq=False)
class LocalBlocks:
    """Dense symmetric local matrices attached to a centre unknown.

    Attributes
    ----------
    centre : (n,) int array
        Dof index of the cell (or fracture face) owning each block.
    dofs : Csr
        Dof indices of the block rows.
    ptr : (n + 1,) int array
        Offsets of the flattened row-major blocks in ``values``.
    values : float array
    """

    centre: np.ndarray
    dofs: Csr
    ptr: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.centre)

    def block(self, i: int):
        dofs = self.dofs[i]
        m = len(dofs)
        return dofs, self.values[self.ptr[i] : self.ptr[i + 1]].reshape(m, m)

    def fluxes(self, u) -> np.ndarray:
        """Fluxes of every incidence, aligned with ``dofs.idx``."""
        out = np.empty(len(self.dofs.idx))
        _block_fluxes(self.dofs.ptr, self.dofs.idx, self.centre, self.ptr, self.values,
                      np.ascontiguousarray(u, dtype=float), out)
        return out

    def flux(self, i: int, dof: int, u) -> float:
        dofs, a = self.block(i)
        hit = np.flatnonzero(dofs == dof)
        if len(hit) == 0:
            raise IndexError(f"dof {dof} is not incident to block {i}")
        u = np.asarray(u, float)
        return float(a[hit[0]] @ (u[self.centre[i]] - u[dofs]))

    def row_sums(self) -> np.ndarray:
        m = self.dofs.counts
        out = np.empty(len(self.dofs.idx))
        for mm in np.unique(m):
            sel = np.flatnonzero(m == mm)
            blocks = self.values[self.ptr[sel][:, None] + np.arange(mm * mm)].reshape(-1, mm, mm)
            out[self.dofs.ptr[sel][:, None] + np.arange(mm)] = blocks.sum(axis=2)
        return out


class CellTransmissibilities(LocalBlocks):
    """Blocks ``a_K`` over ``V_K`` then ``F_{Gamma,K}``."""


class FaceTransmissibilities(LocalBlocks):
    """Blocks ``a_f`` over the node cycle of each fracture face."""


def _offsets(counts):
    ptr = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts.astype(np.int64) ** 2, out=ptr[1:])
    return ptr


def cell_dofs(mesh: Mesh, layout: DofLayout | None = None) -> Csr:
    layout = layout or DofLayout.of(mesh)
    adj = mesh.adjacency
    rows = np.concatenate([mesh.cell_nodes.row_ids, adj.fracture_faces_of_cell.row_ids])
    cols = np.concatenate([mesh.cell_nodes.idx, layout.fracture_face(adj.fracture_faces_of_cell.idx)])
    return Csr.from_pairs(rows, cols, mesh.n_cells)


def assemble_cell_transmissibilities(mesh: Mesh, props: MatrixProperties, mu: float = 1.0,
                                     submesh=None) -> CellTransmissibilities:
    """Exact ``a_K`` from submesh gradients.

    ``submesh`` is accepted for interface symmetry and ignored: the kernel
    walks the same simplices on the fly.
    """
    del submesh
    if not mu > 0.0:
        raise InvalidParameterError("viscosity must be positive")
    if props.permeability.shape != (mesh.n_cells, mesh.dim, mesh.dim):
        raise InvalidPropertyError("matrix permeability does not match the mesh")
    if mesh.n_cells and np.linalg.eigvalsh(props.permeability).min() <= 0.0:
        raise InvalidPropertyError("matrix permeability is not positive definite")
    layout = DofLayout.of(mesh)
    dofs = cell_dofs(mesh, layout)
    ptr = _offsets(dofs.counts)
    out = np.zeros(ptr[-1])
    adj = mesh.adjacency
    cf = mesh.cell_faces
    bad = _cell_blocks(
        mesh.dim, mesh.nodes, mesh.cell_centers, mesh.face_centers,
        mesh.cell_nodes.ptr, mesh.cell_nodes.idx, cf.ptr, cf.idx,
        mesh.face_nodes.ptr, mesh.face_nodes.idx, np.ascontiguousarray(mesh.face_cells[:, 0]),
        mesh.fracture_index, adj.fracture_faces_of_cell.ptr, adj.fracture_faces_of_cell.idx,
        np.ascontiguousarray(props.permeability), 1.0 / mu, ptr, out,
    )
    if bad >= 0:
        raise GeometryError(f"degenerate or inverted submesh simplex in cell {bad}")
    centre = layout.cell(np.arange(mesh.n_cells))
    return CellTransmissibilities(centre, dofs, ptr, out)


def assemble_face_transmissibilities(mesh: Mesh, props: FractureProperties, mu: float = 1.0,
                                     frames=None) -> FaceTransmissibilities:
    """Exact ``a_f`` with tangential gradients in the per-fracture frame."""
    if not mu > 0.0:
        raise InvalidParameterError("viscosity must be positive")
    n = mesh.n_fracture_faces
    if np.any(~(props.width > 0.0)):
        raise InvalidPropertyError("fracture width must be positive")
    if props.permeability.shape != (n, mesh.dim - 1, mesh.dim - 1):
        raise InvalidPropertyError("fracture permeability does not match the mesh")
    if n and np.linalg.eigvalsh(props.permeability).min() <= 0.0:
        raise InvalidPropertyError("fracture permeability is not positive definite")
    layout = DofLayout.of(mesh)
    frames = fracture_frames(mesh) if frames is None else np.ascontiguousarray(frames, float)
    dofs = mesh.face_nodes.take(mesh.fracture_faces)
    ptr = _offsets(dofs.counts)
    out = np.zeros(ptr[-1])
    bad = _face_blocks(
        mesh.dim, mesh.nodes, mesh.face_centers, mesh.fracture_faces,
        mesh.face_nodes.ptr, mesh.face_nodes.idx, frames,
        np.ascontiguousarray(props.permeability), np.ascontiguousarray(props.width), 1.0 / mu,
        ptr, out,
    )
    if bad >= 0:
        raise GeometryError(f"degenerate fracture face {int(mesh.fracture_faces[bad])}")
    centre = layout.fracture_face(np.arange(n))
    return FaceTransmissibilities(np.asarray(centre, dtype=np.int64), dofs, ptr, out)


@dataclass(frozen=True, eq=False)
class Transmissibilities:
    layout: DofLayout
    cells: CellTransmissibilities
    faces: FaceTransmissibilities


def assemble_transmissibilities(mesh: Mesh, matrix: MatrixProperties, fracture: FractureProperties,
                                mu: float = 1.0, frames=None) -> Transmissibilities:
    return Transmissibilities(
        DofLayout.of(mesh),
        assemble_cell_transmissibilities(mesh, matrix, mu),
        assemble_face_transmissibilities(mesh, fracture, mu, frames),
    )


def matrix_flux(k: int, nu: int, v, trans: Transmissibilities) -> float:
    """``F_{K,nu}(v)``; ``nu`` is a dof index (node or fracture face)."""
    return trans.cells.flux(k, nu, v)


def fracture_flux(j: int, s: int, v, trans: Transmissibilities) -> float:
    """``F_{f,s}(v)`` for fracture face index ``j`` and node ``s``."""
    return trans.faces.flux(j, s, v)


def dump_transmissibilities_csv(path, trans: Transmissibilities) -> None:
    """Write every local matrix entry as ``kind, owner, row dof, col dof, value``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "owner", "nu", "nu_prime", "value"])
        for kind, blocks, offset in (("cell", trans.cells, trans.layout.n_cells_offset),
                                     ("fracture_face", trans.faces, trans.layout.n_nodes)):
            for i in range(len(blocks)):
                dofs, a = blocks.block(i)
                for r, dr in enumerate(dofs):
                    for c, dc in enumerate(dofs):
                        w.writerow([kind, int(blocks.centre[i]) - offset, int(dr), int(dc), repr(float(a[r, c]))])
