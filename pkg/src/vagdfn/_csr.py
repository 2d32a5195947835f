"""Compressed row index lists (ragged arrays) used for mesh incidence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Csr:
    """Ragged integer array: row ``i`` is ``idx[ptr[i]:ptr[i + 1]]``."""

    ptr: np.ndarray
    idx: np.ndarray

    @classmethod
    def from_lists(cls, rows) -> "Csr":
        rows = [np.asarray(r, dtype=np.int64) for r in rows]
        counts = np.array([len(r) for r in rows], dtype=np.int64)
        ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        idx = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        return cls(ptr, idx.astype(np.int64))

    @classmethod
    def from_dense(cls, table) -> "Csr":
        table = np.asarray(table, dtype=np.int64)
        n, m = table.shape
        return cls(np.arange(n + 1, dtype=np.int64) * m, table.reshape(-1).copy())

    @classmethod
    def from_pairs(cls, rows, cols, n_rows) -> "Csr":
        """Group ``cols`` by ``rows``; order inside a row follows ``cols`` sorted."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        order = np.lexsort((cols, rows))
        counts = np.bincount(rows, minlength=n_rows)
        ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return cls(ptr, cols[order])

    def __len__(self) -> int:
        return len(self.ptr) - 1

    def __getitem__(self, i) -> np.ndarray:
        return self.idx[self.ptr[i]:self.ptr[i + 1]]

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)

    @property
    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(len(self), dtype=np.int64), self.counts)

    def transpose(self, n_cols: int) -> "Csr":
        return Csr.from_pairs(self.idx, self.row_ids, n_cols)

    def to_lists(self) -> list[list[int]]:
        return [self[i].tolist() for i in range(len(self))]

    def take(self, rows) -> "Csr":
        """Sub-array made of the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        counts = self.counts[rows]
        ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        starts = np.repeat(self.ptr[rows] - ptr[:-1], counts)
        pos = np.arange(ptr[-1], dtype=np.int64) + starts
        return Csr(ptr, self.idx[pos])

    def equals(self, other: "Csr") -> bool:
        return np.array_equal(self.ptr, other.ptr) and np.array_equal(self.idx, other.idx)


def positions_in_rows(csr: Csr, rows, values) -> np.ndarray:
    """Position of ``values[k]`` inside row ``rows[k]`` of a row-sorted ``csr``.

    Every row must be sorted ascending and ``values`` must be present; returns
    -1 where a value is missing.
    """
    rows = np.asarray(rows, dtype=np.int64)
    values = np.asarray(values, dtype=np.int64)
    if len(rows) == 0:
        return np.zeros(0, dtype=np.int64)
    width = int(max(csr.idx.max(initial=0), values.max(initial=0))) + 1
    keys = csr.row_ids * width + csr.idx
    q = rows * width + values
    pos = np.searchsorted(keys, q)
    pos_c = np.minimum(pos, len(keys) - 1)
    found = keys[pos_c] == q
    return np.where(found, pos_c - csr.ptr[rows], -1)
