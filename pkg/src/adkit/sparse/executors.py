"""Prepared sparse Jacobian and Hessian evaluation.

Preparation detects the pattern, colors it and builds one seeded
pushforward/pullback/hvp executor whose fixed seeds are the color groups.
Each call then makes one derivative pass per color and gathers the nonzeros
with a precomputed index map.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse

from adkit.errors import PreparationMismatch, ShapeMismatch
from adkit.function import float_payloads
from adkit.sparse.coloring import greedy_color
from adkit.sparse.tracers import detect_hessian_pattern, detect_jacobian_pattern

_PARTITION = {"pushforward": "column", "pullback": "row", "bidirectional": "bidirectional"}


def build_sparse(node, f, x, contexts, ws, stats, out_shape):
    if node.operator == "jacobian":
        return SparseJacobian(node, f, x, contexts, ws, stats, out_shape)
    return SparseHessian(node, f, x, contexts, ws, stats, out_shape)


class _Sparse:
    def _finish(self, pattern, coloring, ws):
        self.pattern, self.coloring = pattern, coloring
        self.indptr = pattern.indptr.astype(np.int32)
        self.indices = pattern.indices.astype(np.int32)
        self.data = ws.empty(pattern.nnz)

    def _check(self, x):
        if np.shape(x) != self.x_shape:
            raise PreparationMismatch("input shape differs from the one the pattern was detected for",
                                      operator=self.operator,
                                      shapes={"input": np.shape(x), "prepared": self.x_shape})

    def _matrix(self, buf):
        np.take(buf, self.coloring.recovery, out=self.data)
        return scipy.sparse.csc_matrix((self.data, self.indices, self.indptr), shape=self.pattern.shape)

    def _plain_value(self, x, contexts):
        payloads = float_payloads(contexts)
        if self.f.inplace:
            return self.f.call(x, payloads, np.empty(self.out_shape))
        return self.f.call(x, payloads)


class SparseJacobian(_Sparse):
    operator = "jacobian"

    def __init__(self, node, f, x, contexts, ws, stats, out_shape):
        from adkit.fallbacks import build

        self.f, self.out_shape, self.x_shape = f, tuple(out_shape), tuple(np.shape(x))
        pattern = detect_jacobian_pattern(f, x, *contexts)
        coloring = greedy_color(pattern, _PARTITION[node.via])
        self._finish(pattern, coloring, ws)
        self.fwd = self.rev = None
        fseeds = [s.reshape(self.x_shape) for s in coloring.forward_seeds()]
        rseeds = [s.reshape(self.out_shape) for s in coloring.reverse_seeds()]
        if node.via == "bidirectional":
            pf_node, pb_node = node.children
        else:
            pf_node = pb_node = node.children[0]
        if fseeds:
            self.fwd = build(pf_node, f, x, contexts, ws, stats, out_shape, len(fseeds), fseeds)
        if rseeds:
            self.rev = build(pb_node, f, x, contexts, ws, stats, out_shape, len(rseeds), rseeds)

    def run(self, x, contexts, seeds=None):
        self._check(x)
        parts = []
        y = None
        if self.fwd is not None:
            y, t = self.fwd.run(x, contexts)
            parts.append(np.ravel(t))
        if self.rev is not None:
            y, g = self.rev.run(x, contexts)
            parts.append(np.ravel(g))
        if y is None:
            y = self._plain_value(x, contexts)
        buf = parts[0] if len(parts) == 1 else np.concatenate(parts) if parts else np.zeros(0)
        return y, self._matrix(buf)


class SparseHessian(_Sparse):
    operator = "hessian"

    def __init__(self, node, f, x, contexts, ws, stats, out_shape):
        from adkit.fallbacks import build

        if tuple(out_shape) != ():
            raise ShapeMismatch("hessian needs a scalar-valued function", operator="hessian",
                                shapes={"output": tuple(out_shape)})
        self.f, self.out_shape, self.x_shape = f, (), tuple(np.shape(x))
        pattern = detect_hessian_pattern(f, x, *contexts)
        coloring = greedy_color(pattern, "symmetric")
        self._finish(pattern, coloring, ws)
        seeds = [s.reshape(self.x_shape) for s in coloring.forward_seeds()]
        self.hvp = build(node.children[0], f, x, contexts, ws, stats, (), len(seeds), seeds) if seeds else None

    def run(self, x, contexts, seeds=None):
        self._check(x)
        if self.hvp is None:
            return self._plain_value(x, contexts), self._matrix(np.zeros(0))
        y, hv = self.hvp.run(x, contexts)
        return y, self._matrix(np.ravel(hv))
