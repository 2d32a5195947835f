"""Index layout of the unknown vector: nodes, then fracture faces, then cells."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NODE, FRACTURE_FACE, CELL = 0, 1, 2
KIND_NAMES = ("node", "fracture_face", "cell")


@dataclass(frozen=True)
class DofLayout:
    n_nodes: int
    n_fracture_faces: int
    n_cells: int

    @classmethod
    def of(cls, mesh) -> "DofLayout":
        return cls(mesh.n_nodes, mesh.n_fracture_faces, mesh.n_cells)

    @property
    def size(self) -> int:
        return self.n_nodes + self.n_fracture_faces + self.n_cells

    @property
    def n_faces_offset(self) -> int:
        return self.n_nodes

    @property
    def n_cells_offset(self) -> int:
        return self.n_nodes + self.n_fracture_faces

    @property
    def n_reduced(self) -> int:
        """Unknowns kept after eliminating the cells."""
        return self.n_nodes + self.n_fracture_faces

    def node(self, s):
        return np.asarray(s) if np.ndim(s) else int(s)

    def fracture_face(self, j):
        return np.asarray(j) + self.n_nodes if np.ndim(j) else int(j) + self.n_nodes

    def cell(self, k):
        return np.asarray(k) + self.n_cells_offset if np.ndim(k) else int(k) + self.n_cells_offset

    def kind(self) -> np.ndarray:
        out = np.empty(self.size, dtype=np.int8)
        out[: self.n_nodes] = NODE
        out[self.n_nodes : self.n_cells_offset] = FRACTURE_FACE
        out[self.n_cells_offset :] = CELL
        return out

    def local_ids(self) -> np.ndarray:
        return np.concatenate([
            np.arange(self.n_nodes), np.arange(self.n_fracture_faces), np.arange(self.n_cells),
        ]).astype(np.int64)

    def split(self, v):
        """Return the ``(nodes, fracture faces, cells)`` views of ``v``."""
        v = np.asarray(v)
        if v.shape[0] != self.size:
            raise ValueError(f"expected a vector of length {self.size}, got {v.shape[0]}")
        return v[: self.n_nodes], v[self.n_nodes : self.n_cells_offset], v[self.n_cells_offset :]
