"""Sparsity detection by propagating index sets through a function.

Each input ``x_i`` becomes a tracer holding the set ``{i}`` (a Python int
used as a bitmask); every primitive returns the union of its arguments'
sets.  Nothing here looks at values, so the detected pattern is valid for
every input (a global pattern), at the price of over-approximation wherever
a function's structure depends on values.

Second-order tracers also collect the index pairs that interact
nonlinearly.  Pairs are kept as a lazy DAG of ``(mask, mask)`` products so
the cost of a dense interaction does not multiply through every later
operation; the DAG is flattened once at the end.
"""

from __future__ import annotations

import numpy as np

from adkit._active import ScalarActive
from adkit.errors import ShapeMismatch, UnsupportedPrimitive
from adkit.function import Cache, as_function, readonly
from adkit.primitives import BILINEAR, LINEAR
from adkit.sparse.pattern import SparsityPattern, bits

__all__ = ["GradientTracer", "HessianTracer", "detect_jacobian_pattern", "detect_hessian_pattern"]


class GradientTracer(ScalarActive):
    """First-order tracer: the set of inputs a value depends on."""

    __slots__ = ("deps",)
    _mode = "trace"

    def __init__(self, deps=0):
        self.deps = deps

    def _primal(self):
        raise UnsupportedPrimitive("primal", mode="trace")

    def _apply_scalar(self, prim, args):
        if "trace" not in prim.modes:
            raise UnsupportedPrimitive(prim.name, mode="trace")
        m = 0
        for a in args:
            if isinstance(a, GradientTracer):
                m |= a.deps
        return GradientTracer(m)

    @classmethod
    def _opaque(cls, xs, out_shape):
        m = 0
        for a in xs:
            if isinstance(a, GradientTracer):
                m |= a.deps
        return _fill(out_shape, lambda: GradientTracer(m))

    def __repr__(self):
        return f"GradientTracer({bits(self.deps)})"


class _Pairs:
    __slots__ = ("parents", "pairs")

    def __init__(self, parents, pairs):
        self.parents = parents
        self.pairs = pairs


class HessianTracer(ScalarActive):
    """Second-order tracer: first-order set plus nonlinear interaction pairs."""

    __slots__ = ("deps", "hess")
    _mode = "trace"

    def __init__(self, deps=0, hess=None):
        self.deps = deps
        self.hess = hess

    def _primal(self):
        raise UnsupportedPrimitive("primal", mode="trace")

    def _apply_scalar(self, prim, args):
        if "trace" not in prim.modes:
            raise UnsupportedPrimitive(prim.name, mode="trace")
        tracers = [a for a in args if isinstance(a, HessianTracer)]
        m = 0
        for t in tracers:
            m |= t.deps
        parents = tuple(t.hess for t in tracers if t.hess is not None)
        kind = prim.kind
        if kind == BILINEAR and len(tracers) == 2:
            pairs = ((tracers[0].deps, tracers[1].deps),)
        elif kind == BILINEAR or kind == LINEAR or len(tracers) == 0:
            pairs = ()
        elif kind in ("zero", "compare"):
            # piecewise constant: no curvature of its own
            pairs = ()
        else:
            pairs = ((m, m),) if m else ()
        if not pairs and len(parents) <= 1:
            return HessianTracer(m, parents[0] if parents else None)
        return HessianTracer(m, _Pairs(parents, pairs))

    @classmethod
    def _opaque(cls, xs, out_shape):
        m = 0
        for a in xs:
            if isinstance(a, HessianTracer):
                m |= a.deps
        return _fill(out_shape, lambda: HessianTracer(m, _Pairs((), ((m, m),))))

    def __repr__(self):
        return f"HessianTracer({bits(self.deps)})"


def _fill(shape, make):
    if shape == ():
        return make()
    out = np.empty(shape, dtype=object)
    flat = out.reshape(-1)
    for i in range(flat.size):
        flat[i] = make()
    return out


def _inputs(x, cls):
    x = np.asarray(x, dtype=float)
    xs = np.empty(x.shape, dtype=object)
    flat = xs.reshape(-1)
    for i in range(x.size):
        flat[i] = cls(1 << i)
    return x, (xs if x.ndim else xs[()])


def _run(f, xin, contexts, out_shape=None):
    payloads = [np.full(c.shape, 0.0, dtype=object) if isinstance(c, Cache) else readonly(c.value)
                for c in contexts]
    if f.inplace:
        return f.call(xin, payloads, np.full(f.output_shape, 0.0, dtype=object))
    return f.call(xin, payloads)


def detect_jacobian_pattern(f, x, *contexts):
    """Superset of the Jacobian's nonzeros of ``f`` at inputs shaped like ``x``."""
    f = as_function(f)
    x, xin = _inputs(x, GradientTracer)
    y = _run(f, xin, contexts)
    items = np.ravel(y).tolist() if isinstance(y, np.ndarray) else [y]
    masks = [e.deps if isinstance(e, GradientTracer) else 0 for e in items]
    return SparsityPattern.from_row_masks(x.size, masks)


def detect_hessian_pattern(f, x, *contexts):
    """Structurally symmetric superset of the Hessian's nonzeros of a scalar ``f``."""
    f = as_function(f)
    x, xin = _inputs(x, HessianTracer)
    y = _run(f, xin, contexts)
    if np.shape(y) != ():
        raise ShapeMismatch("Hessian pattern needs a scalar-valued function",
                            shapes={"output": np.shape(y)})
    if isinstance(y, np.ndarray):
        y = y[()]
    n = x.size
    rows = [0] * n
    stack = [y.hess] if isinstance(y, HessianTracer) and y.hess is not None else []
    seen = set()
    done = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        for a, b in node.pairs:
            if (a, b) in done:
                continue
            done.add((a, b))
            for i in bits(a):
                rows[i] |= b
            for j in bits(b):
                rows[j] |= a
        stack.extend(node.parents)
    return SparsityPattern.from_row_masks(n, rows)
