"""Boolean sparsity patterns in compressed-column form, with a plain-text format.

Text format::

    nrows ncols
    row col
    row col
    ...

one line per structural nonzero, in column-major order.
"""

from __future__ import annotations

import numpy as np


def bits(mask):
    """Indices of the set bits of a Python int, ascending."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class SparsityPattern:
    """Structural nonzeros of an ``nrows x ncols`` matrix.

    Stored as CSC: ``indptr`` (ncols + 1) and strictly increasing row
    ``indices`` within each column.
    """

    def __init__(self, nrows, ncols, indptr, indices):
        self.nrows, self.ncols = int(nrows), int(ncols)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        if self.indptr.shape != (self.ncols + 1,) or self.indptr[0] != 0 \
                or self.indptr[-1] != len(self.indices) or np.any(np.diff(self.indptr) < 0):
            raise ValueError("malformed column pointer array")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.nrows):
            raise ValueError("row index out of range")
        for j in range(self.ncols):
            col = self.indices[self.indptr[j]:self.indptr[j + 1]]
            if np.any(np.diff(col) <= 0):
                raise ValueError(f"row indices of column {j} are not strictly increasing")

    @classmethod
    def from_columns(cls, nrows, cols):
        indptr = np.zeros(len(cols) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(c) for c in cols])
        indices = np.concatenate([np.asarray(sorted(c), dtype=np.int64) for c in cols]) if cols else []
        return cls(nrows, len(cols), indptr, indices)

    @classmethod
    def from_row_masks(cls, ncols, masks):
        """From one dependency bitmask per row (bit j set: row depends on column j)."""
        cols = [[] for _ in range(ncols)]
        for i, m in enumerate(masks):
            for j in bits(m):
                cols[j].append(i)
        return cls.from_columns(len(masks), cols)

    @classmethod
    def from_pairs(cls, nrows, ncols, pairs):
        cols = [set() for _ in range(ncols)]
        for i, j in pairs:
            cols[j].add(int(i))
        return cls.from_columns(nrows, [sorted(c) for c in cols])

    @classmethod
    def from_dense(cls, a, threshold=0.0):
        a = np.asarray(a)
        nz = np.abs(a) > threshold if a.dtype != bool else a
        return cls.from_columns(a.shape[0], [list(np.flatnonzero(nz[:, j])) for j in range(a.shape[1])])

    @property
    def shape(self):
        return self.nrows, self.ncols

    @property
    def nnz(self):
        return len(self.indices)

    def col(self, j):
        return self.indices[self.indptr[j]:self.indptr[j + 1]]

    def columns(self):
        return [self.col(j).tolist() for j in range(self.ncols)]

    def rows(self):
        """Column indices of each row (the transposed adjacency)."""
        out = [[] for _ in range(self.nrows)]
        for j in range(self.ncols):
            for i in self.col(j).tolist():
                out[i].append(j)
        return out

    def pairs(self):
        """``(row, col)`` of every nonzero in column-major order."""
        return [(i, j) for j in range(self.ncols) for i in self.col(j).tolist()]

    def transpose(self):
        return SparsityPattern.from_columns(self.ncols, self.rows())

    @property
    def T(self):
        return self.transpose()

    def to_dense(self):
        a = np.zeros(self.shape, dtype=bool)
        for i, j in self.pairs():
            a[i, j] = True
        return a

    def is_symmetric(self):
        return self.nrows == self.ncols and self == self.transpose()

    def issubset(self, other):
        return self.shape == other.shape and not np.any(self.to_dense() & ~other.to_dense())

    def __eq__(self, other):
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __repr__(self):
        return f"SparsityPattern({self.nrows}x{self.ncols}, nnz={self.nnz})"

    def to_text(self):
        lines = [f"{self.nrows} {self.ncols}"]
        lines.extend(f"{i} {j}" for i, j in self.pairs())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        nrows, ncols = map(int, lines[0])
        return cls.from_pairs(nrows, ncols, [(int(a), int(b)) for a, b in lines[1:]])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())
