"""Forward mode with vectorized dual numbers.

A :class:`DualArray` stores the primal array and its tangents in two arrays
(struct of arrays): ``value`` has the primal shape and ``tangent`` has one
extra trailing axis of lanes, one lane per seed direction in the current
chunk.  Every primitive updates all lanes with a single numpy operation.

Each forward pass gets a fresh ``tag``.  When duals are nested (forward over
forward, or forward over the tape), a primitive only differentiates the
operands carrying its own tag and treats everything else as a constant, which
is the usual cure for perturbation confusion.
"""

from __future__ import annotations

import itertools
from collections import Counter

import numpy as np

from adkit import numpy as anp
from adkit._active import Active
from adkit.errors import ShapeMismatch, TraceEscape, UnsupportedOperator, UnsupportedPrimitive
from adkit.function import Cache, Workspace, as_function, float_payloads, readonly
from adkit.primitives import COMPARE, ZERO, primitive_rules

__all__ = ["DualArray", "SeedBank", "ForwardPushforward", "dual_eval", "primitive_rules"]

_tags = itertools.count(1)


def new_tag():
    return next(_tags)


def _shape(a):
    sh = getattr(a, "shape", None)
    return np.shape(a) if sh is None else sh


def _ndim(a):
    nd = getattr(a, "ndim", None)
    return np.ndim(a) if nd is None else nd


def _lane_index(idx):
    if not isinstance(idx, tuple):
        idx = (idx,)
    if any(i is Ellipsis for i in idx):
        return idx + (slice(None),)
    return idx


def _store(buf, idx, v):
    if isinstance(buf, np.ndarray) and buf.dtype != object:
        if isinstance(v, Active) or (isinstance(v, np.ndarray) and v.dtype == object):
            raise TraceEscape("a float buffer cannot hold a traced value; use adkit.numpy.zeros_like")
    buf[idx] = v


class DualArray(Active):
    """Primal array plus a trailing axis of tangent lanes."""

    __slots__ = ("value", "tangent", "tag")
    _rank = 2
    _mode = "forward"

    def __init__(self, value, tangent, tag):
        self.value = value
        self.tangent = tangent
        self.tag = tag

    def _outranks(self, other):
        if isinstance(other, DualArray):
            return self.tag > other.tag
        return True

    @property
    def shape(self):
        return _shape(self.value)

    @property
    def ndim(self):
        return _ndim(self.value)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def lanes(self):
        return _shape(self.tangent)[-1]

    def _primal(self):
        return anp.primal(self.value)

    def _apply(self, prim, args):
        if "forward" not in prim.modes:
            raise UnsupportedPrimitive(prim.name, mode="forward", backend="dual")
        tag = self.tag
        own = [isinstance(a, DualArray) and a.tag == tag for a in args]
        vals = tuple(a.value if o else a for a, o in zip(args, own))
        y = anp.apply(prim, *vals)
        if prim.kind == COMPARE:
            return y
        yshape = tuple(_shape(y))
        lanes = self.lanes
        if prim.kind == ZERO:
            return DualArray(y, np.zeros(yshape + (lanes,)), tag)
        t = None
        if prim.coeffs is not None:
            for c, a, o in zip(prim.coeffs, args, own):
                if not o:
                    continue
                if t is None:
                    t = a.tangent if c == 1 else -a.tangent
                else:
                    t = t + a.tangent if c == 1 else t - a.tangent
        else:
            for k, (a, o) in enumerate(zip(args, own)):
                if not o:
                    continue
                p = prim.partial_fns[k](*vals, y)
                term = (p if _ndim(p) == 0 else p[..., None]) * a.tangent
                t = term if t is None else t + term
        if tuple(_shape(t))[:-1] != yshape:
            t = t + np.zeros(yshape + (lanes,))
        return DualArray(y, t, tag)

    # array protocol

    def __array__(self, dtype=None, copy=None):
        raise TraceEscape("cannot convert a DualArray to a plain array; use adkit.numpy")

    def __bool__(self):
        raise TraceEscape("truth value of a DualArray is not observable; compare explicitly")

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, idx):
        return DualArray(self.value[idx], self.tangent[_lane_index(idx)], self.tag)

    def __setitem__(self, idx, v):
        tidx = _lane_index(idx)
        if isinstance(v, DualArray) and v.tag == self.tag:
            _store(self.value, idx, v.value)
            _store(self.tangent, tidx, v.tangent)
        elif isinstance(v, DualArray) and v.tag > self.tag:
            raise TraceEscape("storing an inner dual into an outer buffer")
        else:
            _store(self.value, idx, v)
            _store(self.tangent, tidx, 0.0)

    def sum(self, axis=None, **kwargs):
        if axis is None:
            t = anp.sum(self.tangent.reshape((-1, self.lanes)), axis=0)
        else:
            t = anp.sum(self.tangent, axis=axis % self.ndim)
        return DualArray(anp.sum(self.value, axis=axis), t, self.tag)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        value = self.value.reshape(shape)
        return DualArray(value, self.tangent.reshape(tuple(_shape(value)) + (self.lanes,)), self.tag)

    def ravel(self):
        return self.reshape(-1)

    def transpose(self, *axes):
        nd = self.ndim
        if not axes:
            axes = tuple(reversed(range(nd)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return DualArray(self.value.transpose(axes), self.tangent.transpose(tuple(axes) + (nd,)), self.tag)

    @property
    def T(self):
        return self.transpose()

    def dot(self, other):
        return anp.dot(self, other)

    def __matmul__(self, other):
        return anp.dot(self, other)

    def __rmatmul__(self, other):
        return anp.dot(other, self)

    def copy(self):
        return DualArray(self.value.copy(), self.tangent.copy(), self.tag)

    @classmethod
    def zeros(cls, shape, like):
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        value = anp.zeros_like(like.value, shape)
        tangent = anp.zeros_like(like.tangent, shape + (like.lanes,))
        return cls(value, tangent, like.tag)

    @classmethod
    def _join(cls, items, axis, top, how):
        tag, lanes = top.tag, top.lanes
        vals, tans = [], []
        for it in items:
            if isinstance(it, DualArray) and it.tag == tag:
                vals.append(it.value)
                tans.append(it.tangent)
            else:
                vals.append(it)
                tans.append(np.zeros(tuple(_shape(it)) + (lanes,)))
        join = anp.stack if how == "stack" else anp.concatenate
        value = join(vals, axis)
        tangent = join(tans, axis % _ndim(value))
        return cls(value, tangent, tag)

    def __repr__(self):
        return f"DualArray(value={anp.primal(self.value)!r}, lanes={self.lanes}, tag={self.tag})"


def lanes_first(t):
    """Move the trailing lane axis to the front (a view for plain arrays)."""
    nd = _ndim(t)
    if isinstance(t, np.ndarray):
        return np.moveaxis(t, -1, 0)
    return t.transpose((nd - 1,) + tuple(range(nd - 1)))


class SeedBank:
    """Seed directions partitioned into chunks of at most ``chunk_size`` lanes.

    Each chunk owns a tangent buffer of shape ``x_shape + (width,)`` allocated
    once.  Fixed seeds (standard basis, coloring seeds) are written at
    construction; user seeds are copied in per call.
    """

    def __init__(self, x_shape, ndirs, chunk_size, ws, fixed=None):
        if ndirs < 1:
            raise ShapeMismatch("at least one seed direction is required")
        self.x_shape = tuple(x_shape)
        self.ndirs = ndirs
        self.chunks = [(s, min(s + chunk_size, ndirs)) for s in range(0, ndirs, chunk_size)]
        self.tangents = [ws.zeros(self.x_shape + (stop - start,)) for start, stop in self.chunks]
        if fixed is not None:
            self.load(fixed)

    def load(self, seeds):
        if len(seeds) != self.ndirs:
            raise ShapeMismatch(f"expected {self.ndirs} seeds, got {len(seeds)}")
        for (start, stop), t in zip(self.chunks, self.tangents):
            for j in range(stop - start):
                v = seeds[start + j]
                if np.shape(v) != self.x_shape:
                    raise ShapeMismatch("seed shape differs from input shape",
                                        shapes={"seed": np.shape(v), "input": self.x_shape})
                np.copyto(t[..., j], v)

    def __len__(self):
        return len(self.chunks)


def basis(shape):
    """The standard basis of an array space, as a list of arrays of ``shape``."""
    n = int(np.prod(shape))
    eye = np.eye(n)
    return [eye[i].reshape(shape) for i in range(n)]


class ForwardPushforward:
    """Prepared batched pushforward: one dual pass per chunk of seed directions."""

    def __init__(self, f, x, contexts, ndirs, chunk_size, ws, stats, out_shape, fixed=None):
        if f.inplace:
            raise UnsupportedOperator("the dual backend requires out-of-place functions",
                                      operator="pushforward", backend="dual")
        self.f = f
        self.ndirs = ndirs
        self.chunk_size = chunk_size
        self.stats = stats
        self.fixed = fixed is not None
        self.x_shape = tuple(np.shape(x))
        self.out_shape = tuple(out_shape)
        self.bank = SeedBank(self.x_shape, ndirs, chunk_size, ws, fixed)
        self.xv = ws.empty(self.x_shape)
        self.inputs = [DualArray(self.xv, t, 0) for t in self.bank.tangents]
        # one dual-valued copy of every Cache per chunk width
        self.caches = []
        for start, stop in self.bank.chunks:
            row = []
            for c in contexts:
                if isinstance(c, Cache):
                    row.append(DualArray(ws.zeros(c.shape), ws.zeros(c.shape + (stop - start,)), 0))
                else:
                    row.append(None)
            self.caches.append(row)
        self.y = ws.empty(self.out_shape)
        self.out = ws.empty(self.out_shape + (ndirs,))

    def _payloads(self, contexts, row, tag):
        out = []
        for c, d in zip(contexts, row):
            if d is None:
                out.append(readonly(c.value))
            else:
                d.tag = tag
                out.append(d)
        return out

    def run(self, x, contexts, seeds=None):
        self.stats["pushforward"] += self.ndirs
        self.stats["passes"] += len(self.bank)
        if seeds is not None:
            self.bank.load(seeds)
        elif not self.fixed:
            raise ShapeMismatch("pushforward needs seeds")
        if isinstance(x, Active) or (isinstance(x, np.ndarray) and x.dtype == object):
            return self._run_active(x, contexts)
        np.copyto(self.xv, x)
        for (start, stop), xd, row in zip(self.bank.chunks, self.inputs, self.caches):
            tag = new_tag()
            xd.tag = tag
            yd = self.f.call(xd, self._payloads(contexts, row, tag))
            if isinstance(yd, DualArray) and yd.tag == tag:
                yv, yt = yd.value, yd.tangent
            else:
                yv, yt = yd, 0.0
            if not (_plain(yv) and _plain(yt)):
                # f closed over an enclosing active value: assemble generically
                return self._run_active(x.copy(), contexts)
            if np.shape(yv) != self.out_shape:
                raise ShapeMismatch("output shape changed since preparation",
                                    shapes={"output": np.shape(yv), "prepared": self.out_shape})
            self.out[..., start:stop] = yt
        np.copyto(self.y, yv)
        return self.y, lanes_first(self.out)

    def _run_active(self, x, contexts):
        # nested use (this backend differentiating another active type):
        # same chunking, but buffers follow the element type of x
        pieces = []
        for (start, stop), t in zip(self.bank.chunks, self.bank.tangents):
            tag = new_tag()
            xd = DualArray(x, t, tag)
            payloads = []
            for c in contexts:
                if isinstance(c, Cache):
                    w = stop - start
                    payloads.append(DualArray(anp.zeros_like(x, c.shape), np.zeros(c.shape + (w,)), tag))
                else:
                    payloads.append(readonly(c.value))
            yd = self.f.call(xd, payloads)
            if isinstance(yd, DualArray) and yd.tag == tag:
                y, yt = yd.value, yd.tangent
            else:
                y, yt = yd, np.zeros(tuple(_shape(yd)) + (stop - start,))
            pieces.append(yt)
        out = pieces[0] if len(pieces) == 1 else anp.concatenate(pieces, axis=-1)
        return y, lanes_first(out)


def _plain(v):
    return isinstance(v, (float, int, np.floating)) or (isinstance(v, np.ndarray) and v.dtype != object)


def dual_eval(f, x, directions, *contexts, chunk_size=8):
    """Evaluate ``f`` at ``x`` together with its derivative along each direction.

    Returns
    -------
    y : ndarray
        The primal output.
    tangents : list of ndarray
        ``J(x) v`` for every ``v`` in ``directions``, in order.
    """
    f = as_function(f)
    x = np.asarray(x, dtype=float)
    directions = [np.asarray(v, dtype=float) for v in directions]
    if not directions:
        raise ShapeMismatch("dual_eval needs at least one direction")
    out_shape = np.shape(f.call(x.copy(), float_payloads(contexts)))
    ex = ForwardPushforward(f, x, contexts, len(directions), chunk_size, Workspace(), Counter(), out_shape)
    y, t = ex.run(x, contexts, directions)
    return y.copy(), [np.array(ti) for ti in t]
