"""Greedy colorings of sparsity patterns and the matching recovery maps.

All colorings visit vertices in natural index order and give each vertex the
smallest color not forbidden by its already colored neighbours.

``column``
    distance-2 coloring of the column intersection graph: columns of one
    color never share a row, so one pushforward per color recovers them.
``row``
    the same on the transpose, one pullback per color.
``symmetric``
    star coloring of the adjacency graph of a symmetric pattern; every
    nonzero can be read directly off one Hessian-vector product per color.
``bidirectional``
    low-degree columns are column-colored (pushforwards), and the rows that
    touch the remaining columns are row-colored (pullbacks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from adkit.sparse.pattern import SparsityPattern

__all__ = ["Coloring", "greedy_color"]


def _distance2(ncols, cols_of, rows_of, active=None):
    """Greedy distance-2 coloring of columns (restricted to ``active`` if given)."""
    colors = np.full(ncols, -1, dtype=np.int64)
    forbidden = np.full(ncols + 1, -1, dtype=np.int64)
    for j in range(ncols):
        if active is not None and not active[j]:
            continue
        for i in rows_of[j]:
            for k in cols_of[i]:
                c = colors[k]
                if c >= 0:
                    forbidden[c] = j
        c = 0
        while forbidden[c] == j:
            c += 1
        colors[j] = c
    return colors


def _star(n, adj):
    """Greedy star coloring (distance-1 coloring with no two-colored path on four vertices)."""
    colors = np.full(n, -1, dtype=np.int64)
    forbidden = np.full(n + 1, -1, dtype=np.int64)
    for v in range(n):
        for w in adj[v]:
            cw = colors[w]
            if cw >= 0:
                forbidden[cw] = v
        for w in adj[v]:
            cw = colors[w]
            if cw < 0:
                for x in adj[w]:
                    if x != v and colors[x] >= 0:
                        forbidden[colors[x]] = v
            else:
                for x in adj[w]:
                    cx = colors[x]
                    if x == v or cx < 0:
                        continue
                    for y in adj[x]:
                        if y != w and colors[y] == cw:
                            forbidden[cx] = v
                            break
        c = 0
        while forbidden[c] == v:
            c += 1
        colors[v] = c
    return colors


@dataclass
class Coloring:
    """A coloring with its seeds and recovery map.

    Attributes
    ----------
    partition : str
        ``column``, ``row``, ``symmetric`` or ``bidirectional``.
    colors : ndarray
        Per-column colors (per-row for ``row``); ``-1`` marks columns handled
        by the reverse half of a bidirectional coloring.
    row_colors : ndarray or None
        Per-row colors of the reverse half (``bidirectional`` only).
    recovery : ndarray
        For each nonzero of ``pattern`` in CSC order, a flat index into the
        compressed products (see :meth:`compressed_layout`).
    """

    pattern: SparsityPattern
    partition: str
    colors: np.ndarray
    row_colors: np.ndarray | None = None
    recovery: np.ndarray = field(default=None, repr=False)

    @property
    def n_forward(self):
        return int(self.colors.max()) + 1 if self.partition != "row" and (self.colors >= 0).any() else 0

    @property
    def n_reverse(self):
        if self.partition == "row":
            return int(self.colors.max()) + 1 if len(self.colors) else 0
        if self.partition == "bidirectional" and (self.row_colors >= 0).any():
            return int(self.row_colors.max()) + 1
        return 0

    @property
    def ncolors(self):
        return self.n_forward + self.n_reverse

    def _groups(self, colors, size, k):
        seeds = np.zeros((k, size))
        for j, c in enumerate(colors):
            if c >= 0:
                seeds[c, j] = 1.0
        return seeds

    @property
    def seed_matrix(self):
        """Columns are the seeds: ``(ncols, colors)``, or ``(nrows, colors)`` for rows."""
        if self.partition == "row":
            return self._groups(self.colors, self.pattern.nrows, self.n_reverse).T
        return self._groups(self.colors, self.pattern.ncols, self.n_forward).T

    def forward_seeds(self):
        return self._groups(self.colors, self.pattern.ncols, self.n_forward) \
            if self.partition != "row" else np.zeros((0, self.pattern.ncols))

    def reverse_seeds(self):
        if self.partition == "row":
            return self._groups(self.colors, self.pattern.nrows, self.n_reverse)
        if self.partition == "bidirectional":
            return self._groups(self.row_colors, self.pattern.nrows, self.n_reverse)
        return np.zeros((0, self.pattern.nrows))

    def compressed_layout(self):
        """Shapes of the compressed products the recovery indices point into.

        Forward products are stored color-major, ``(n_forward, nrows)``,
        followed by reverse products ``(n_reverse, ncols)``.
        """
        return (self.n_forward, self.pattern.nrows), (self.n_reverse, self.pattern.ncols)

    def decompress(self, forward=None, reverse=None):
        """Matrix values on the pattern from compressed products (dense result)."""
        parts = []
        if self.n_forward:
            parts.append(np.ravel(forward))
        if self.n_reverse:
            parts.append(np.ravel(reverse))
        buf = np.concatenate(parts) if parts else np.zeros(0)
        out = np.zeros(self.pattern.shape)
        for (i, j), v in zip(self.pattern.pairs(), buf[self.recovery]):
            out[i, j] = v
        return out

    def to_text(self):
        lines = [f"# partition={self.partition} colors={self.ncolors}"]
        if self.partition == "row":
            lines.append("# row color")
            lines.extend(f"{i} {c}" for i, c in enumerate(self.colors.tolist()))
        else:
            lines.extend(f"{j} {c}" for j, c in enumerate(self.colors.tolist()))
        if self.partition == "bidirectional":
            lines.append("# row color")
            lines.extend(f"{i} {c}" for i, c in enumerate(self.row_colors.tolist()))
        return "\n".join(lines) + "\n"


def greedy_color(pattern, partition="column"):
    """Color ``pattern`` for compressed evaluation; deterministic in natural order."""
    p = pattern
    cols_of = p.rows()          # row -> columns
    rows_of = p.columns()       # column -> rows
    m, n = p.shape
    if partition == "column":
        colors = _distance2(n, cols_of, rows_of)
        rec = [int(colors[j]) * m + i for i, j in p.pairs()]
        return Coloring(p, "column", colors, None, np.asarray(rec, dtype=np.int64))
    if partition == "row":
        colors = _distance2(m, rows_of, cols_of)
        rec = [int(colors[i]) * n + j for i, j in p.pairs()]
        return Coloring(p, "row", colors, None, np.asarray(rec, dtype=np.int64))
    if partition == "symmetric":
        if not p.is_symmetric():
            raise ValueError("symmetric coloring needs a structurally symmetric pattern")
        adj = [[k for k in rows_of[j] if k != j] for j in range(n)]
        colors = _star(n, adj)
        return Coloring(p, "symmetric", colors, None, _star_recovery(p, adj, colors))
    if partition == "bidirectional":
        return _bidirectional(p, cols_of, rows_of)
    raise ValueError(f"unknown partition '{partition}'")


def _star_recovery(p, adj, colors):
    n = p.ncols
    # count[v][c]: neighbours of v with color c
    count = [dict() for _ in range(n)]
    for v in range(n):
        for w in adj[v]:
            c = int(colors[w])
            count[v][c] = count[v].get(c, 0) + 1
    source = {}
    rec = []
    for i, j in p.pairs():
        if i == j:
            rec.append(int(colors[i]) * n + i)
            continue
        key = (min(i, j), max(i, j))
        s = source.get(key)
        if s is None:
            a, b = key
            # H[a, b] sits alone in row a of color(b)'s product, or in row b of color(a)'s
            if count[a][int(colors[b])] == 1:
                s = int(colors[b]) * n + a
            elif count[b][int(colors[a])] == 1:
                s = int(colors[a]) * n + b
            else:
                raise AssertionError(f"star coloring cannot recover entry {key}")
            source[key] = s
        rec.append(s)
    return np.asarray(rec, dtype=np.int64)


def _bidirectional(p, cols_of, rows_of):
    m, n = p.shape
    degree = np.array([len(r) for r in rows_of])
    k = float(np.median(degree)) if n else 0.0
    fwd = degree <= k
    colors = _distance2(n, cols_of, rows_of, active=fwd)
    # rows touching reverse columns, colored on the reverse submatrix
    rev_cols_of = [[j for j in cols if not fwd[j]] for cols in cols_of]
    rev_rows_of = [rows if not fwd[j] else [] for j, rows in enumerate(rows_of)]
    need = np.array([bool(c) for c in rev_cols_of])
    row_colors = _distance2(m, rev_rows_of, rev_cols_of, active=need)
    nf = int(colors.max()) + 1 if fwd.any() else 0
    rec = []
    for i, j in p.pairs():
        if fwd[j]:
            rec.append(int(colors[j]) * m + i)
        else:
            rec.append(nf * m + int(row_colors[i]) * n + j)
    return Coloring(p, "bidirectional", colors, row_colors, np.asarray(rec, dtype=np.int64))
