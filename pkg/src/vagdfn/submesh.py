"""Simplicial submesh of a generalized polyhedral mesh.

Each cell ``K`` is split into simplices joining its centre ``x_K`` to the
pieces of its faces:

* ``d = 3``: one tetrahedron ``(x_K, x_f, s, s')`` per edge ``(s, s')`` of
  every face ``f``;
* ``d = 2``: one triangle ``(x_K, s, s')`` per non-fracture edge, and two
  triangles ``(x_K, s, x_f)``, ``(x_K, x_f, s')`` per fracture edge, split at
  its midpoint.

The values at non-fracture face centres are the isobarycentric
interpolation of the face nodes, so the submesh P1 space is spanned by the
cell, node and fracture-face unknowns only.  This module builds everything
explicitly with numpy; it serves as the geometric reference for the fast
assembly kernels.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
import scipy.sparse as sp

from .dofs import DofLayout
from .errors import GeometryError
from .mesh import Mesh

CELL_CENTRE, FACE_CENTRE = -2, -1


@dataclass(frozen=True, eq=False)
class Submesh:
    """Simplices with their parent cell and face.

    Attributes
    ----------
    cell, face : (n,) int arrays
        Parent cell and parent face of each simplex.
    roles : (n, d + 1) int array
        Vertex roles: ``-2`` cell centre, ``-1`` face centre, ``i >= 0`` the
        ``i``-th node of the parent face cycle.  Vertex 0 is always the cell
        centre.
    vertices : (n, d + 1, d) float array
    measure : (n,) float array
        Strictly positive simplex measures.
    gradients : (n, d + 1, d) float array
        Constant gradients of the barycentric coordinates.
    """

    mesh: Mesh
    cell: np.ndarray
    face: np.ndarray
    roles: np.ndarray
    vertices: np.ndarray
    measure: np.ndarray
    gradients: np.ndarray

    def __len__(self) -> int:
        return len(self.cell)

    def cell_measures(self) -> np.ndarray:
        return np.bincount(self.cell, weights=self.measure, minlength=self.mesh.n_cells)

    @cached_property
    def layout(self) -> DofLayout:
        return DofLayout.of(self.mesh)

    @cached_property
    def interpolation(self) -> sp.csr_matrix:
        """Sparse map from a dof vector to the values at every simplex vertex.

        Row ``t * (d + 1) + i`` holds the weights of vertex ``i`` of simplex
        ``t``.
        """
        mesh, lay = self.mesh, self.layout
        n, m = self.roles.shape
        rows, cols, vals = [], [], []
        flat = np.arange(n * m).reshape(n, m)
        fn = mesh.face_nodes
        fidx = mesh.fracture_index[self.face]
        for i in range(m):
            r = self.roles[:, i]
            cc = r == CELL_CENTRE
            rows.append(flat[cc, i]); cols.append(lay.cell(self.cell[cc])); vals.append(np.ones(cc.sum()))
            nd = r >= 0
            rows.append(flat[nd, i]); cols.append(fn.idx[fn.ptr[self.face[nd]] + r[nd]]); vals.append(np.ones(nd.sum()))
            fr = (r == FACE_CENTRE) & (fidx >= 0)
            rows.append(flat[fr, i]); cols.append(lay.fracture_face(fidx[fr])); vals.append(np.ones(fr.sum()))
            nf = np.flatnonzero((r == FACE_CENTRE) & (fidx < 0))
            cnt = fn.counts[self.face[nf]]
            rep = np.repeat(nf, cnt)
            starts = np.repeat(fn.ptr[self.face[nf]], cnt)
            offs = np.arange(len(rep)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            rows.append(flat[rep, i]); cols.append(fn.idx[starts + offs]); vals.append(1.0 / np.repeat(cnt, cnt))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * m, lay.size),
        )

    @cached_property
    def gradient_operator(self) -> sp.csr_matrix:
        """Sparse map from a dof vector to the ``(n * d)`` piecewise gradients."""
        n, m = self.roles.shape
        d = self.mesh.dim
        rows = np.repeat(np.arange(n * d).reshape(n, d), m, axis=1).reshape(n, d, m)
        cols = np.broadcast_to(np.arange(n * m).reshape(n, 1, m), (n, d, m))
        vals = np.swapaxes(self.gradients, 1, 2)
        g = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n * d, n * m))
        return (g @ self.interpolation).tocsr()

    def evaluate(self, v, points_bary) -> np.ndarray:
        """Values of the P1 interpolant at barycentric points, shape ``(n, q)``."""
        vert = (self.interpolation @ np.asarray(v, float)).reshape(len(self), -1)
        return vert @ np.asarray(points_bary, float).T


def _simplex_geometry(vertices: np.ndarray):
    """Signed measures and barycentric gradients of a batch of simplices."""
    d = vertices.shape[2]
    jac = np.swapaxes(vertices[:, 1:, :] - vertices[:, :1, :], 1, 2)  # columns = edges
    det = np.linalg.det(jac)
    grads = np.zeros_like(vertices)
    ok = det != 0.0
    inv = np.zeros_like(jac)
    inv[ok] = np.linalg.inv(jac[ok])
    grads[:, 1:, :] = inv
    grads[:, 0, :] = -inv.sum(axis=1)
    return det / factorial(d), grads


def build_submesh(mesh: Mesh, cells=None) -> Submesh:
    """Build the submesh of ``cells`` (all cells by default).

    Raises
    ------
    GeometryError
        If any simplex has a non-positive measure.
    """
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells, dtype=np.int64)
    cf = mesh.cell_faces.take(cells)
    pair_cell = cells[cf.row_ids]
    pair_face = cf.idx
    sign = np.where(mesh.face_cells[pair_face, 0] == pair_cell, 1.0, -1.0)
    fn = mesh.face_nodes
    m = fn.counts[pair_face]
    is_frac = mesh.fracture_index[pair_face] >= 0
    d = mesh.dim
    if d == 3:
        per = m
    else:
        per = np.where(is_frac, 2, 1)
    t_pair = np.repeat(np.arange(len(pair_face)), per)
    t_local = np.arange(len(t_pair)) - np.repeat(np.cumsum(per) - per, per)
    roles = np.full((len(t_pair), d + 1), CELL_CENTRE, dtype=np.int64)
    if d == 3:
        mm = m[t_pair]
        roles[:, 1] = FACE_CENTRE
        roles[:, 2] = t_local
        roles[:, 3] = (t_local + 1) % mm
    else:
        fr = is_frac[t_pair]
        first = t_local == 0
        roles[:, 1] = np.where(fr & ~first, FACE_CENTRE, 0)
        roles[:, 2] = np.where(fr & first, FACE_CENTRE, 1)
    face = pair_face[t_pair]
    cell = pair_cell[t_pair]
    verts = np.empty((len(t_pair), d + 1, d))
    for i in range(d + 1):
        r = roles[:, i]
        pts = np.empty((len(r), d))
        cc, fc, nd = r == CELL_CENTRE, r == FACE_CENTRE, r >= 0
        pts[cc] = mesh.cell_centers[cell[cc]]
        pts[fc] = mesh.face_centers[face[fc]]
        pts[nd] = mesh.nodes[fn.idx[fn.ptr[face[nd]] + r[nd]]]
        verts[:, i] = pts
    signed, grads = _simplex_geometry(verts)
    signed = signed * sign[t_pair]
    if np.any(signed <= 0.0):
        bad = int(cell[np.argmax(signed <= 0.0)])
        raise GeometryError(f"degenerate or inverted submesh simplex in cell {bad}")
    return Submesh(mesh, cell, face, roles, verts, signed, grads)
