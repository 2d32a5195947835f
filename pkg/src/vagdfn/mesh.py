"""Generalized polyhedral meshes conforming to a planar fracture network.

A mesh stores nodes, cells, faces (edges when ``dim == 2``) and the subset of
faces that discretize the fractures.  Faces are ordered node cycles oriented
outward from their first cell ``face_cells[f, 0]`` (or inward to the second
cell when the first slot is empty, which happens in restricted meshes).
Face centres are isobarycentres, ``beta_{f,s} = 1 / |V_f|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from ._csr import Csr
from .errors import GeometryError, InvalidParameterError


@dataclass(frozen=True)
class Adjacency:
    """Incidence lists derived from a :class:`Mesh`.

    Fracture faces are referred to by their fracture index ``j`` (position in
    ``Mesh.fracture_faces``), not by face id.
    """

    cells_of_node: Csr
    cells_of_face: np.ndarray
    fracture_faces_of_node: Csr
    fracture_faces_of_cell: Csr
    fracture_nodes: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    nodes: np.ndarray
    cell_nodes: Csr
    face_nodes: Csr
    face_cells: np.ndarray
    fracture_faces: np.ndarray
    fracture_ids: np.ndarray
    boundary_nodes: np.ndarray
    cell_centers: np.ndarray

    # ------------------------------------------------------------------ build
    @classmethod
    def build(
        cls,
        dim,
        nodes,
        cells,
        faces,
        fracture_faces=(),
        fracture_ids=None,
        boundary_nodes=None,
        face_cells=None,
        cell_centers=None,
        oriented=False,
    ) -> "Mesh":
        """Assemble a mesh from node coordinates and node-index lists.

        ``cells`` and ``faces`` are lists of node lists or :class:`Csr`.  When
        ``face_cells`` is omitted it is recovered by matching face nodes against
        cell nodes.  Unless ``oriented`` is set, face cycles are flipped so that
        they point away from ``face_cells[:, 0]``.
        """
        if dim not in (2, 3):
            raise InvalidParameterError(f"dimension must be 2 or 3, got {dim}")
        nodes = np.ascontiguousarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != dim:
            raise InvalidParameterError("nodes must be an (n, dim) array")
        if not np.all(np.isfinite(nodes)):
            raise InvalidParameterError("node coordinates must be finite")
        cell_csr = cells if isinstance(cells, Csr) else Csr.from_lists(cells)
        face_csr = faces if isinstance(faces, Csr) else Csr.from_lists(faces)
        n_nodes = len(nodes)
        for name, csr in (("cell", cell_csr), ("face", face_csr)):
            if len(csr.idx) and (csr.idx.min() < 0 or csr.idx.max() >= n_nodes):
                raise InvalidParameterError(f"{name} references a missing node")
        # canonical cell node lists: sorted, unique
        cell_csr = Csr.from_pairs(*_unique_pairs(cell_csr.row_ids, cell_csr.idx), len(cell_csr))
        if face_cells is None:
            face_cells = _match_face_cells(cell_csr, face_csr, n_nodes)
        face_cells = np.array(face_cells, dtype=np.int64).reshape(-1, 2)
        if len(face_cells) != len(face_csr):
            raise InvalidParameterError("face_cells must have one row per face")
        # canonical slots: smallest cell first, boundary faces as (cell, -1)
        swap = (face_cells[:, 0] < 0) | ((face_cells[:, 1] >= 0) & (face_cells[:, 1] < face_cells[:, 0]))
        if swap.any():
            face_cells[swap] = face_cells[swap][:, ::-1]
            if oriented:
                face_csr = _reverse_rows(face_csr, swap)
        if cell_centers is None:
            cell_centers = _row_means(cell_csr, nodes)
        cell_centers = np.ascontiguousarray(cell_centers, dtype=float)
        if not oriented:
            face_csr = _orient_faces(dim, nodes, face_csr, face_cells, cell_centers)
        fracture_faces = np.asarray(fracture_faces, dtype=np.int64).reshape(-1)
        if fracture_ids is None:
            fracture_ids = np.ones(len(fracture_faces), dtype=np.int64)
        fracture_ids = np.asarray(fracture_ids, dtype=np.int64).reshape(-1)
        if len(fracture_ids) != len(fracture_faces):
            raise InvalidParameterError("one fracture id per fracture face is required")
        order = np.argsort(fracture_faces, kind="stable")
        fracture_faces, fracture_ids = fracture_faces[order], fracture_ids[order]
        if len(np.unique(fracture_faces)) != len(fracture_faces):
            raise InvalidParameterError("duplicate fracture face")
        if len(fracture_faces) and (fracture_faces.min() < 0 or fracture_faces.max() >= len(face_csr)):
            raise InvalidParameterError("fracture face references a missing face")
        if boundary_nodes is None:
            bfaces = np.flatnonzero((face_cells < 0).any(axis=1))
            boundary_nodes = np.unique(face_csr.take(bfaces).idx)
        boundary_nodes = np.unique(np.asarray(boundary_nodes, dtype=np.int64))
        mesh = cls(
            dim=dim,
            nodes=nodes,
            cell_nodes=cell_csr,
            face_nodes=face_csr,
            face_cells=face_cells,
            fracture_faces=fracture_faces,
            fracture_ids=fracture_ids,
            boundary_nodes=boundary_nodes,
            cell_centers=cell_centers,
        )
        mesh._check_topology()
        return mesh

    def _check_topology(self):
        fc = self.face_cells
        n_adj = (fc >= 0).sum(axis=1)
        if np.any(n_adj == 0):
            raise GeometryError("a face belongs to no cell")
        if np.any(fc >= self.n_cells):
            raise GeometryError("face references a missing cell")
        both = (fc >= 0).all(axis=1)
        if np.any(fc[both, 0] == fc[both, 1]):
            raise GeometryError("a face is listed twice for the same cell")
        counts = self.face_nodes.counts
        if np.any(counts < (2 if self.dim == 2 else 3)):
            raise GeometryError("face with too few nodes")
        if self.dim == 2 and np.any(counts != 2):
            raise GeometryError("2D faces must be edges with two nodes")

    # ----------------------------------------------------------------- sizes
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cell_nodes)

    @property
    def n_faces(self) -> int:
        return len(self.face_nodes)

    @property
    def n_fracture_faces(self) -> int:
        return len(self.fracture_faces)

    # ------------------------------------------------------------- geometry
    @cached_property
    def face_centers(self) -> np.ndarray:
        return _row_means(self.face_nodes, self.nodes)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        """Measures of the cells, summed over the centre-face fan of simplices."""
        cf = self.cell_faces
        fn = self.face_nodes
        return _cell_volumes(self.dim, self.nodes, self.cell_centers, self.face_centers,
                             cf.ptr, cf.idx, fn.ptr, fn.idx)

    @cached_property
    def face_measures(self) -> np.ndarray:
        """Edge lengths (2D) or face areas (3D, fan triangulation from the centre)."""
        fn = self.face_nodes
        return _face_measures(self.dim, self.nodes, self.face_centers, fn.ptr, fn.idx)

    @cached_property
    def cell_faces(self) -> Csr:
        fc = self.face_cells
        faces = np.repeat(np.arange(self.n_faces, dtype=np.int64), 2)
        cells = fc.reshape(-1)
        keep = cells >= 0
        return Csr.from_pairs(cells[keep], faces[keep], self.n_cells)

    @cached_property
    def fracture_index(self) -> np.ndarray:
        """Map face id -> fracture index, -1 for non-fracture faces."""
        out = np.full(self.n_faces, -1, dtype=np.int64)
        out[self.fracture_faces] = np.arange(self.n_fracture_faces)
        return out

    @cached_property
    def is_boundary_node(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique node pairs (sorted) bounding faces; faces themselves in 2D."""
        if self.dim == 2:
            e = self.face_nodes.idx.reshape(-1, 2)
        else:
            fn = self.face_nodes
            nxt = _cycle_next(fn)
            e = np.stack([fn.idx, fn.idx[nxt]], axis=1)
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def adjacency(self) -> Adjacency:
        cells_of_node = self.cell_nodes.transpose(self.n_nodes)
        frac_nodes_csr = self.face_nodes.take(self.fracture_faces)
        ffn = frac_nodes_csr.transpose(self.n_nodes)
        fidx = self.fracture_index
        cf = self.cell_faces
        is_frac = fidx[cf.idx] >= 0
        ffc = Csr.from_pairs(cf.row_ids[is_frac], fidx[cf.idx[is_frac]], self.n_cells)
        return Adjacency(
            cells_of_node=cells_of_node,
            cells_of_face=self.face_cells,
            fracture_faces_of_node=ffn,
            fracture_faces_of_cell=ffc,
            fracture_nodes=np.unique(frac_nodes_csr.idx),
        )

    @cached_property
    def is_fracture_node(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.adjacency.fracture_nodes] = True
        return mask

    def fracture_id_set(self) -> list[int]:
        return sorted(set(self.fracture_ids.tolist()))

    def fracture_nodes_of(self, fracture_id: int) -> np.ndarray:
        faces = self.fracture_faces[self.fracture_ids == fracture_id]
        return np.unique(self.face_nodes.take(faces).idx)

    # ------------------------------------------------------------- restrict
    def restrict(self, cells) -> "RestrictedMesh":
        """Local mesh made of ``cells`` (sorted global ids), numbering preserved.

        Local numbering of cells, nodes, faces and fracture faces is monotone in
        the global numbering; ``boundary_nodes`` and cell centres are inherited
        from the global mesh, and face orientations are kept as-is.
        """
        cells = np.unique(np.asarray(cells, dtype=np.int64))
        cn = self.cell_nodes.take(cells)
        g_nodes = np.unique(cn.idx)
        cf = self.cell_faces.take(cells)
        g_faces = np.unique(cf.idx)
        node_map = np.full(self.n_nodes, -1, dtype=np.int64)
        node_map[g_nodes] = np.arange(len(g_nodes))
        cell_map = np.full(self.n_cells, -1, dtype=np.int64)
        cell_map[cells] = np.arange(len(cells))
        fnodes = self.face_nodes.take(g_faces)
        fc = self.face_cells[g_faces]
        local_fc = np.where(fc >= 0, cell_map[np.maximum(fc, 0)], -1)
        is_frac = self.fracture_index[g_faces] >= 0
        g_frac = self.fracture_index[g_faces[is_frac]]
        local = Mesh(
            dim=self.dim,
            nodes=self.nodes[g_nodes],
            cell_nodes=Csr(cn.ptr, node_map[cn.idx]),
            face_nodes=Csr(fnodes.ptr, node_map[fnodes.idx]),
            face_cells=local_fc,
            fracture_faces=np.flatnonzero(is_frac).astype(np.int64),
            fracture_ids=self.fracture_ids[g_frac],
            boundary_nodes=node_map[self.boundary_nodes[node_map[self.boundary_nodes] >= 0]],
            cell_centers=self.cell_centers[cells],
        )
        return RestrictedMesh(local, cells, g_nodes, g_faces, g_frac)


@dataclass(frozen=True, eq=False)
class RestrictedMesh:
    """A local mesh together with its local-to-global maps."""

    mesh: Mesh
    cells: np.ndarray
    nodes: np.ndarray
    faces: np.ndarray
    fracture_faces: np.ndarray


# ---------------------------------------------------------------- helpers
@njit(cache=True, nogil=True)
def _cell_volumes(dim, nodes, xk, xf, cf_ptr, cf_idx, fn_ptr, fn_idx):
    out = np.zeros(len(cf_ptr) - 1)
    for k in range(len(out)):
        acc = 0.0
        for p in range(cf_ptr[k], cf_ptr[k + 1]):
            f = cf_idx[p]
            a0 = fn_ptr[f]
            m = fn_ptr[f + 1] - a0
            if dim == 2:
                s0 = fn_idx[a0]
                s1 = fn_idx[a0 + 1]
                ux = nodes[s0, 0] - xk[k, 0]
                uy = nodes[s0, 1] - xk[k, 1]
                vx = nodes[s1, 0] - xk[k, 0]
                vy = nodes[s1, 1] - xk[k, 1]
                acc += 0.5 * abs(ux * vy - uy * vx)
            else:
                for i in range(m):
                    s0 = fn_idx[a0 + i]
                    s1 = fn_idx[a0 + (i + 1) % m]
                    a = xf[f] - xk[k]
                    b = nodes[s0] - xk[k]
                    c = nodes[s1] - xk[k]
                    det = (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                           + a[2] * (b[0] * c[1] - b[1] * c[0]))
                    acc += abs(det) / 6.0
        out[k] = acc
    return out


@njit(cache=True, nogil=True)
def _face_measures(dim, nodes, xf, fn_ptr, fn_idx):
    out = np.zeros(len(fn_ptr) - 1)
    for f in range(len(out)):
        a0 = fn_ptr[f]
        m = fn_ptr[f + 1] - a0
        if dim == 2:
            d = nodes[fn_idx[a0 + 1]] - nodes[fn_idx[a0]]
            out[f] = np.sqrt(d[0] * d[0] + d[1] * d[1])
        else:
            acc = 0.0
            for i in range(m):
                b = nodes[fn_idx[a0 + i]] - xf[f]
                c = nodes[fn_idx[a0 + (i + 1) % m]] - xf[f]
                x = b[1] * c[2] - b[2] * c[1]
                y = b[2] * c[0] - b[0] * c[2]
                z = b[0] * c[1] - b[1] * c[0]
                acc += 0.5 * np.sqrt(x * x + y * y + z * z)
            out[f] = acc
    return out


def _unique_pairs(rows, cols):
    key = np.unique(np.stack([rows, cols], axis=1), axis=0) if len(rows) else np.zeros((0, 2), np.int64)
    return key[:, 0], key[:, 1]


def _row_means(csr: Csr, points: np.ndarray) -> np.ndarray:
    counts = csr.counts
    sums = np.zeros((len(csr), points.shape[1]))
    for k in range(points.shape[1]):
        sums[:, k] = np.bincount(csr.row_ids, weights=points[csr.idx, k], minlength=len(csr))
    return sums / counts[:, None]


def _cycle_next(csr: Csr) -> np.ndarray:
    """Position of the next node in each face cycle (wrapping around)."""
    nxt = np.arange(1, len(csr.idx) + 1, dtype=np.int64)
    nxt[csr.ptr[1:] - 1] = csr.ptr[:-1]
    return nxt


def _match_face_cells(cells: Csr, faces: Csr, n_nodes: int) -> np.ndarray:
    cells_of_node = cells.transpose(n_nodes)
    out = np.full((len(faces), 2), -1, dtype=np.int64)
    for f in range(len(faces)):
        fnodes = faces[f]
        cand = set(cells_of_node[fnodes[0]].tolist())
        for s in fnodes[1:]:
            cand &= set(cells_of_node[s].tolist())
            if not cand:
                break
        cand = sorted(cand)
        if not cand:
            raise GeometryError(f"face {f} belongs to no cell")
        if len(cand) > 2:
            raise GeometryError(f"face {f} is shared by more than two cells")
        out[f, : len(cand)] = cand
    return out


def face_normals(dim: int, nodes: np.ndarray, faces: Csr) -> np.ndarray:
    """Area-weighted normals following the cycle orientation (Newell's rule).

    In 2D the normal of edge (a, b) is ``(dy, -dx)``, i.e. it points to the
    right of the direction a -> b.
    """
    if dim == 2:
        e = faces.idx.reshape(-1, 2)
        d = nodes[e[:, 1]] - nodes[e[:, 0]]
        return np.stack([d[:, 1], -d[:, 0]], axis=1)
    nxt = _cycle_next(faces)
    p = nodes[faces.idx]
    q = nodes[faces.idx[nxt]]
    cr = np.cross(p, q)
    rid = faces.row_ids
    n = np.zeros((len(faces), 3))
    for k in range(3):
        n[:, k] = 0.5 * np.bincount(rid, weights=cr[:, k], minlength=len(faces))
    return n


def _orient_faces(dim, nodes, faces: Csr, face_cells, cell_centers) -> Csr:
    normals = face_normals(dim, nodes, faces)
    centers = _row_means(faces, nodes)
    first = np.where(face_cells[:, 0] >= 0, face_cells[:, 0], face_cells[:, 1])
    sign = np.where(face_cells[:, 0] >= 0, 1.0, -1.0)
    out = np.einsum("ij,ij->i", normals, centers - cell_centers[first]) * sign
    flip = out < 0
    if not flip.any():
        return faces
    return _reverse_rows(faces, flip)


def _reverse_rows(csr: Csr, mask) -> Csr:
    idx = csr.idx.copy()
    rid = csr.row_ids
    pos = np.arange(len(idx))
    rev = csr.ptr[rid] + csr.ptr[rid + 1] - 1 - pos
    sel = np.asarray(mask)[rid]
    idx[sel] = csr.idx[rev[sel]]
    return Csr(csr.ptr, idx)


# ------------------------------------------------------------- generators
def _quad_grid(X: np.ndarray, Y: np.ndarray):
    """Structured quadrilateral mesh data from node coordinate tables ``[j, i]``.

    Returns the raw arrays plus lookup tables for horizontal and vertical edges.
    Horizontal edge (i, j) joins nodes (i, j)-(i+1, j); vertical edge (i, j)
    joins (i, j)-(i, j+1).
    """
    ny, nx = X.shape[0] - 1, X.shape[1] - 1
    nid = np.arange((nx + 1) * (ny + 1), dtype=np.int64).reshape(ny + 1, nx + 1)
    nodes = np.stack([X.reshape(-1), Y.reshape(-1)], axis=1)
    cid = np.arange(nx * ny, dtype=np.int64).reshape(ny, nx)
    cells = np.stack([nid[:-1, :-1], nid[:-1, 1:], nid[1:, 1:], nid[1:, :-1]], axis=-1).reshape(-1, 4)

    # horizontal edges: oriented so that the cell above (j) lies on the left
    h_id = np.arange(nx * (ny + 1), dtype=np.int64).reshape(ny + 1, nx)
    h_nodes = np.stack([nid[:, 1:], nid[:, :-1]], axis=-1).reshape(-1, 2)
    h_cells = np.full((ny + 1, nx, 2), -1, dtype=np.int64)
    h_cells[:-1, :, 0] = cid  # cell above the edge
    h_cells[1:, :, 1] = cid  # cell below the edge
    h_cells = h_cells.reshape(-1, 2)
    # vertical edges
    v_id = nx * (ny + 1) + np.arange((nx + 1) * ny, dtype=np.int64).reshape(ny, nx + 1)
    v_nodes = np.stack([nid[:-1, :], nid[1:, :]], axis=-1).reshape(-1, 2)
    v_cells = np.full((ny, nx + 1, 2), -1, dtype=np.int64)
    v_cells[:, :-1, 0] = cid  # cell to the right
    v_cells[:, 1:, 1] = cid  # cell to the left
    v_cells = v_cells.reshape(-1, 2)
    faces = np.concatenate([h_nodes, v_nodes])
    face_cells = np.concatenate([h_cells, v_cells])
    # keep a valid cell in slot 0
    swap = face_cells[:, 0] < 0
    face_cells[swap] = face_cells[swap][:, ::-1]
    faces[swap] = faces[swap][:, ::-1]
    return nodes, cells, faces, face_cells, h_id, v_id


def _check_nx(n_x):
    if int(n_x) != n_x or n_x < 4:
        raise InvalidParameterError(f"n_x must be an integer >= 4, got {n_x}")
    return int(n_x)


def _pivot_map(ref, r0, target):
    """Piecewise-linear map of [0, 1] sending ``r0`` to ``target``."""
    return np.where(ref <= r0, ref * target / r0, target + (ref - r0) * (1.0 - target) / (1.0 - r0))


def _check_tan(t, name="tan_theta"):
    if not (0.0 < t < 0.75):
        raise InvalidParameterError(f"{name} must lie in (0, 3/4), got {t}")


def build_single_fracture_mesh_2d(n_x: int, tan_theta: float) -> Mesh:
    """Deformed Cartesian ``n_x x n_x`` mesh of (0,1)^2 with one fracture.

    Node row ``n_x / 4`` is moved onto ``y = 1/4 + x tan_theta``; the rows
    below and above are stretched linearly.  The fracture (id 1) is the set of
    horizontal edges on that row.
    """
    n = _check_nx(n_x)
    if n % 4:
        raise InvalidParameterError(f"n_x must be a multiple of 4, got {n_x}")
    _check_tan(tan_theta)
    xh = np.arange(n + 1) / n
    X, Yh = np.meshgrid(xh, xh)
    j0 = n // 4
    yl = 0.25 + X * tan_theta
    Y = _pivot_map(Yh, j0 / n, yl)
    Y[j0, :] = yl[j0, :]
    Y[0, :] = 0.0
    Y[-1, :] = 1.0
    nodes, cells, faces, fc, h_id, _ = _quad_grid(X, Y)
    frac = h_id[j0, :]
    return Mesh.build(
        2, nodes, Csr.from_dense(cells), Csr.from_dense(faces), frac,
        np.ones(len(frac), dtype=np.int64), face_cells=fc,
    )


def four_fracture_intersection(tan_theta1: float, tan_theta2: float) -> tuple[float, float]:
    den = 4.0 * (1.0 + tan_theta1 * tan_theta2)
    return (3.0 - tan_theta2) / den, (1.0 + 3.0 * tan_theta1) / den


def build_four_fracture_mesh_2d(n_x: int, tan_theta1: float, tan_theta2: float,
                                tol: float = 1e-13, max_iter: int = 50) -> Mesh:
    """Deformed Cartesian mesh conforming to two crossing lines (four fractures).

    Row ``round(n_x/4)`` lies on ``y = 1/4 + x tan_theta1`` and column
    ``round(3 n_x/4)`` on ``x = 3/4 - y tan_theta2``.  Node positions solve the coupled piecewise
    linear remap by fixed-point iteration.  Fracture ids: 1 (row, left of the
    crossing), 2 (row, right), 3 (column, below), 4 (column, above).
    """
    n = _check_nx(n_x)
    _check_tan(tan_theta1, "tan_theta1")
    _check_tan(tan_theta2, "tan_theta2")
    ref = np.arange(n + 1) / n
    Xh, Yh = np.meshgrid(ref, ref)
    i0, j0 = int(round(3 * n / 4)), int(round(n / 4))

    def xmap(y):
        return _pivot_map(Xh, i0 / n, 0.75 - y * tan_theta2)

    def ymap(x):
        return _pivot_map(Yh, j0 / n, 0.25 + x * tan_theta1)

    x, y = Xh.copy(), Yh.copy()
    for _ in range(max_iter):
        x_new = xmap(y)
        y_new = ymap(x_new)
        delta = max(np.abs(x_new - x).max(), np.abs(y_new - y).max())
        x, y = x_new, y_new
        if delta < tol:
            break
    else:
        raise GeometryError(f"four-fracture remap did not converge (last change {delta:.3e})")
    # pin the fracture rows/columns onto their lines exactly
    y[j0, :] = 0.25 + x[j0, :] * tan_theta1
    x[:, i0] = 0.75 - y[:, i0] * tan_theta2
    x[:, 0], x[:, -1], y[0, :], y[-1, :] = 0.0, 1.0, 0.0, 1.0
    nodes, cells, faces, fc, h_id, v_id = _quad_grid(x, y)
    row = h_id[j0, :]
    col = v_id[:, i0]
    frac = np.concatenate([row, col])
    ids = np.concatenate([
        np.where(np.arange(n) < i0, 1, 2),
        np.where(np.arange(n) < j0, 3, 4),
    ])
    return Mesh.build(
        2, nodes, Csr.from_dense(cells), Csr.from_dense(faces), frac, ids, face_cells=fc,
    )


_AXES = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


def graded_coordinates(n: int, planes, stretch: float) -> np.ndarray:
    """Node coordinates on [0, 1] refined geometrically towards ``planes``.

    ``planes`` holds node indices of refinement planes.  Inside each segment
    between consecutive break points the spacing grows by ``stretch`` per cell
    away from the nearest refined end (segment ends on the domain boundary are
    not refined).
    """
    breaks = sorted(set([0, n] + list(planes)))
    refined = set(planes)
    x = np.zeros(n + 1)
    for a, b in zip(breaks[:-1], breaks[1:]):
        m = b - a
        k = np.arange(m)
        left, right = a in refined, b in refined
        if left and right:
            expo = np.minimum(k, m - 1 - k)
        elif left:
            expo = k
        elif right:
            expo = m - 1 - k
        else:
            expo = np.zeros(m)
        h = stretch ** expo.astype(float)
        h = h / h.sum() * (b - a) / n
        x[a + 1 : b + 1] = a / n + np.cumsum(h)
        x[b] = b / n
    x[0], x[n] = 0.0, 1.0
    return x


def build_hex_mesh_3d(n_x: int, fracture_planes=(("x", 0.5), ("y", 0.5), ("z", 0.5)),
                      stretch: float = 1.0) -> Mesh:
    """Topologically Cartesian hexahedral mesh of (0,1)^3 with planar fractures.

    ``fracture_planes`` is a sequence of ``(axis, value)`` with ``value`` a
    multiple of ``1/n_x``; plane number ``k`` receives fracture id ``k + 1``.
    """
    n = int(n_x)
    if n != n_x or n < 1:
        raise InvalidParameterError(f"n_x must be a positive integer, got {n_x}")
    if stretch < 1.0:
        raise InvalidParameterError("stretch must be >= 1")
    planes = []
    for axis, value in fracture_planes:
        if axis not in _AXES:
            raise InvalidParameterError(f"unknown axis {axis!r}")
        k = value * n
        if not (0.0 < value < 1.0) or abs(k - round(k)) > 1e-9:
            raise InvalidParameterError(f"plane {axis}={value} is not aligned with the grid")
        planes.append((_AXES[axis], int(round(k))))
    coords = [graded_coordinates(n, [k for a, k in planes if a == ax], stretch) for ax in range(3)]
    n1 = n + 1
    gx, gy, gz = np.meshgrid(*coords, indexing="ij")
    # node id = i + n1*(j + n1*k)
    nodes = np.stack([gx.transpose(2, 1, 0).reshape(-1), gy.transpose(2, 1, 0).reshape(-1),
                      gz.transpose(2, 1, 0).reshape(-1)], axis=1)
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).reshape(-1) for a in (i, j, k))

    def nid(a, b, c):
        return a + n1 * (b + n1 * c)

    cells = np.stack([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                      nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1),
                      nid(i, j + 1, k + 1)], axis=1)

    def cid(a, b, c):
        return a + n * (b + n * c)

    faces, fcells, frac, fids = [], [], [], []
    offset = 0
    for axis in range(3):
        # faces normal to `axis` at index p along it, (q, r) along the others
        p, q, r = np.meshgrid(np.arange(n1), np.arange(n), np.arange(n), indexing="ij")
        p, q, r = p.reshape(-1), q.reshape(-1), r.reshape(-1)
        if axis == 0:
            quad = [nid(p, q, r), nid(p, q + 1, r), nid(p, q + 1, r + 1), nid(p, q, r + 1)]
            lo, hi = cid(p - 1, q, r), cid(p, q, r)
        elif axis == 1:
            quad = [nid(q, p, r), nid(q, p, r + 1), nid(q + 1, p, r + 1), nid(q + 1, p, r)]
            lo, hi = cid(q, p - 1, r), cid(q, p, r)
        else:
            quad = [nid(q, r, p), nid(q + 1, r, p), nid(q + 1, r + 1, p), nid(q, r + 1, p)]
            lo, hi = cid(q, r, p - 1), cid(q, r, p)
        quad = np.stack(quad, axis=1)  # normal points along +axis
        lo = np.where(p > 0, lo, -1)
        hi = np.where(p < n, hi, -1)
        # slot 0 = the cell on the -axis side, cycle normal points out of it
        fc = np.stack([lo, hi], axis=1)
        first_missing = fc[:, 0] < 0
        fc[first_missing] = fc[first_missing][:, ::-1]
        quad[first_missing] = quad[first_missing][:, ::-1]
        faces.append(quad)
        fcells.append(fc)
        for fid, (ax, kp) in enumerate(planes, start=1):
            if ax == axis:
                sel = np.flatnonzero(p == kp)
                frac.append(offset + sel)
                fids.append(np.full(len(sel), fid))
        offset += len(p)
    faces = np.concatenate(faces)
    fcells = np.concatenate(fcells)
    frac = np.concatenate(frac) if frac else np.zeros(0, np.int64)
    fids = np.concatenate(fids) if fids else np.zeros(0, np.int64)
    return Mesh.build(3, nodes, Csr.from_dense(cells), Csr.from_dense(faces), frac, fids,
                      face_cells=fcells, oriented=True)
