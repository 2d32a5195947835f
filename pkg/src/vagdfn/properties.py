"""Piecewise-constant rock properties for the matrix and the fractures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPropertyError
from .mesh import Mesh


def _as_tensors(perm, n: int, dim: int, what: str) -> np.ndarray:
    """Broadcast scalar / per-item scalar / tensor input to ``(n, dim, dim)``."""
    perm = np.asarray(perm, dtype=float)
    if perm.ndim == 0:
        out = np.broadcast_to(perm * np.eye(dim), (n, dim, dim)).copy()
    elif perm.ndim == 1 and len(perm) == n:
        out = perm[:, None, None] * np.eye(dim)
    elif perm.shape == (dim, dim):
        out = np.broadcast_to(perm, (n, dim, dim)).copy()
    elif perm.shape == (n, dim, dim):
        out = perm.copy()
    else:
        raise InvalidPropertyError(f"{what}: cannot interpret permeability of shape {perm.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidPropertyError(f"{what}: permeability must be finite")
    if not np.allclose(out, np.swapaxes(out, 1, 2), rtol=1e-14, atol=0.0):
        raise InvalidPropertyError(f"{what}: permeability tensor is not symmetric")
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    if n and np.linalg.eigvalsh(out).min() <= 0.0:
        raise InvalidPropertyError(f"{what}: permeability tensor is not positive definite")
    return out


def _as_porosity(phi, n: int, what: str) -> np.ndarray:
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n,)).copy()
    if np.any(~(phi > 0.0)) or np.any(phi > 1.0):
        raise InvalidPropertyError(f"{what}: porosity must lie in (0, 1]")
    return phi


@dataclass(frozen=True, eq=False)
class MatrixProperties:
    """Per-cell permeability ``(n_cells, d, d)`` and porosity ``(n_cells,)``."""

    permeability: np.ndarray
    porosity: np.ndarray

    @classmethod
    def build(cls, mesh: Mesh, permeability=1.0, porosity=1.0) -> "MatrixProperties":
        return cls(
            _as_tensors(permeability, mesh.n_cells, mesh.dim, "matrix"),
            _as_porosity(porosity, mesh.n_cells, "matrix"),
        )

    def magnitude(self) -> np.ndarray:
        """Largest eigenvalue of each cell tensor."""
        return np.linalg.eigvalsh(self.permeability)[:, -1]

    def take(self, cells) -> "MatrixProperties":
        return MatrixProperties(self.permeability[cells], self.porosity[cells])


@dataclass(frozen=True, eq=False)
class FractureProperties:
    """Per-fracture-face width, tangential permeability and porosity.

    Tangential tensors have shape ``(n_fracture_faces, d - 1, d - 1)`` and are
    expressed in the per-fracture frame returned by :func:`fracture_frames`.
    """

    width: np.ndarray
    permeability: np.ndarray
    porosity: np.ndarray

    @classmethod
    def build(cls, mesh: Mesh, width=0.01, permeability=1.0, porosity=1.0,
              by_id: dict | None = None) -> "FractureProperties":
        """Uniform values, optionally overridden per fracture id.

        ``by_id`` maps a fracture id to a dict with any of ``width``,
        ``permeability`` and ``porosity``.
        """
        n = mesh.n_fracture_faces
        w = np.full(n, float(width)) if np.ndim(width) == 0 else np.asarray(width, float).copy()
        phi = np.broadcast_to(np.asarray(porosity, float), (n,)).copy()
        perm = _as_tensors(permeability, n, mesh.dim - 1, "fracture")
        for fid, vals in (by_id or {}).items():
            sel = mesh.fracture_ids == int(fid)
            unknown = set(vals) - {"width", "permeability", "porosity"}
            if unknown:
                raise InvalidPropertyError(f"unknown fracture property {sorted(unknown)}")
            if "width" in vals:
                w[sel] = vals["width"]
            if "porosity" in vals:
                phi[sel] = vals["porosity"]
            if "permeability" in vals:
                perm[sel] = _as_tensors(vals["permeability"], int(sel.sum()), mesh.dim - 1, "fracture")
        if np.any(~(w > 0.0)) or not np.all(np.isfinite(w)):
            raise InvalidPropertyError("fracture width must be positive")
        return cls(w, perm, _as_porosity(phi, n, "fracture"))

    def magnitude(self) -> np.ndarray:
        if self.permeability.shape[0] == 0:
            return np.zeros(0)
        return np.linalg.eigvalsh(self.permeability)[:, -1]

    def take(self, faces) -> "FractureProperties":
        return FractureProperties(self.width[faces], self.permeability[faces], self.porosity[faces])


def fracture_frames(mesh: Mesh) -> np.ndarray:
    """Orthonormal tangential frame per fracture face, shape ``(n_f, d - 1, d)``.

    The frame is fixed per fracture id: in 3D the two coordinate axes with the
    smallest normal components are projected onto the plane and
    orthonormalized; in 2D the unit tangent is oriented towards increasing
    coordinates along its dominant axis.
    """
    from .mesh import face_normals

    d = mesh.dim
    n_f = mesh.n_fracture_faces
    frames = np.zeros((n_f, d - 1, d))
    if n_f == 0:
        return frames
    normals = face_normals(d, mesh.nodes, mesh.face_nodes)[mesh.fracture_faces]
    for fid in mesh.fracture_id_set():
        sel = np.flatnonzero(mesh.fracture_ids == fid)
        nrm = normals[sel]
        # align signs before averaging so opposite orientations do not cancel
        ref = nrm[np.argmax(np.linalg.norm(nrm, axis=1))]
        nrm = nrm * np.where(nrm @ ref < 0.0, -1.0, 1.0)[:, None]
        n = nrm.sum(axis=0)
        n /= np.linalg.norm(n)
        if d == 2:
            t = np.array([-n[1], n[0]])
            if t[np.argmax(np.abs(t))] < 0:
                t = -t
            frames[sel, 0] = t
        else:
            axes = np.argsort(np.abs(n), kind="stable")[:2]
            basis = []
            for a in sorted(axes):
                e = np.zeros(3)
                e[a] = 1.0
                v = e - (e @ n) * n
                for b in basis:
                    v -= (v @ b) * b
                basis.append(v / np.linalg.norm(v))
            frames[sel] = np.array(basis)
    return frames
