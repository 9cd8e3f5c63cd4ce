"""Differentiable functions, context arguments and preparation workspaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adkit.errors import ShapeMismatch


class DifferentiableFunction:
    """A function of one differentiated input plus context arguments.

    Parameters
    ----------
    eval : callable
        ``eval(x, *contexts) -> y`` for out-of-place functions, or
        ``eval(y, x, *contexts)`` writing into ``y`` when ``inplace`` is set.
    inplace : bool
        Whether ``eval`` writes its result into a caller-provided buffer.
    input_shape, output_shape : tuple, optional
        Declared shapes.  ``output_shape`` is required for in-place functions
        since the buffer has to be allocated before the first call.
    """

    def __init__(self, eval, *, inplace=False, input_shape=None, output_shape=None, name=None):
        if inplace and output_shape is None:
            raise ShapeMismatch("in-place functions must declare output_shape")
        self.eval = eval
        self.inplace = bool(inplace)
        self.input_shape = None if input_shape is None else tuple(input_shape)
        self.output_shape = None if output_shape is None else tuple(output_shape)
        self.name = name or getattr(eval, "__name__", "f")

    @property
    def arity(self):
        return "in-place" if self.inplace else "out-of-place"

    def __call__(self, *args):
        return self.eval(*args)

    def call(self, x, payloads, ybuf=None):
        """Evaluate on ``x``; in-place functions write into (and return) ``ybuf``."""
        if self.inplace:
            self.eval(ybuf, x, *payloads)
            return ybuf
        return self.eval(x, *payloads)

    def __repr__(self):
        return f"DifferentiableFunction({self.name}, {self.arity})"


def as_function(f):
    return f if isinstance(f, DifferentiableFunction) else DifferentiableFunction(f)


@dataclass(frozen=True, eq=False)
class Constant:
    """A fixed parameter passed through to the function, never differentiated."""

    value: object
    kind = "Constant"


@dataclass(frozen=True, eq=False)
class Cache:
    """Scratch storage the function may overwrite.

    Only the shape matters: backends hand the function their own buffer of the
    right element type (for instance a dual-valued copy in forward mode), so
    the contents of ``value`` are never read.
    """

    value: object
    kind = "Cache"

    @property
    def shape(self):
        return np.shape(self.value)


def readonly(value):
    """A read-only view of a Constant payload; scalars pass through."""
    if isinstance(value, np.ndarray):
        v = value.view()
        v.flags.writeable = False
        return v
    return value


def context_signature(contexts):
    return tuple(
        (c.kind, np.shape(c.value)) if isinstance(c, (Constant, Cache)) else ("?", None)
        for c in contexts
    )


def float_payloads(contexts, ws=None):
    """Payloads for a plain float evaluation: Constant views and fresh Cache buffers."""
    out = []
    for c in contexts:
        if isinstance(c, Cache):
            out.append(ws.zeros(c.shape) if ws is not None else np.zeros(c.shape))
        else:
            out.append(readonly(c.value))
    return out


class Workspace:
    """Allocator for preparation buffers.

    Every buffer a preparation or an operator call obtains through here is
    counted, which is what the harness reports as the allocation count of a
    call: steady-state calls on a prepared path are expected to add nothing.
    """

    def __init__(self):
        self.allocations = 0

    def empty(self, shape, dtype=float):
        self.allocations += 1
        return np.empty(shape, dtype=dtype)

    def zeros(self, shape, dtype=float):
        self.allocations += 1
        return np.zeros(shape, dtype=dtype)

    def full(self, shape, value, dtype=object):
        self.allocations += 1
        return np.full(shape, value, dtype=dtype)

    def copy(self, a):
        self.allocations += 1
        return np.array(a, copy=True)
