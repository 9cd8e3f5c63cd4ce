"""Base classes for values that carry derivative information through a function.

``Active`` values are dispatch keys for :func:`adkit.numpy.apply`.  Array-level
actives (the dual backend) outrank scalar-level actives (tape scalars and
sparsity tracers), which live inside numpy object arrays.
"""

from __future__ import annotations

import numpy as np

from adkit.errors import TraceEscape, UnsupportedPrimitive
from adkit.primitives import PRIMITIVES

# installed by adkit.numpy on import (it depends on this module)
anp = None


class Active:
    __slots__ = ()

    # higher rank wins dispatch; dual arrays also compare by tag
    _rank = 0

    def _outranks(self, other):
        return self._rank > other._rank

    def _apply(self, prim, args):
        raise NotImplementedError

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if kwargs.get("out") is not None:
            raise UnsupportedPrimitive(f"{ufunc.__name__}(out=...)")
        if method == "__call__":
            fn = anp.UFUNC_MAP.get(ufunc)
            if fn is None:
                raise UnsupportedPrimitive(ufunc.__name__)
            return fn(*inputs)
        if method == "reduce" and ufunc is np.add:
            return anp.sum(inputs[0], axis=kwargs.get("axis", 0))
        raise UnsupportedPrimitive(f"{ufunc.__name__}.{method}")

    def __float__(self):
        raise TraceEscape(f"cannot convert a traced {type(self).__name__} to float")

    # arithmetic, routed through the primitive table
    def __add__(self, other):
        return _apply("add", self, other)

    def __radd__(self, other):
        return _apply("add", other, self)

    def __sub__(self, other):
        return _apply("sub", self, other)

    def __rsub__(self, other):
        return _apply("sub", other, self)

    def __mul__(self, other):
        return _apply("mul", self, other)

    def __rmul__(self, other):
        return _apply("mul", other, self)

    def __truediv__(self, other):
        return _apply("div", self, other)

    def __rtruediv__(self, other):
        return _apply("div", other, self)

    def __pow__(self, other):
        return anp.power(self, other)

    def __rpow__(self, other):
        return anp.power(other, self)

    def __neg__(self):
        return _apply("neg", self)

    def __pos__(self):
        return self

    def __abs__(self):
        return _apply("abs", self)

    def __lt__(self, other):
        return _apply("lt", self, other)

    def __le__(self, other):
        return _apply("le", self, other)

    def __gt__(self, other):
        return _apply("gt", self, other)

    def __ge__(self, other):
        return _apply("ge", self, other)

    def __eq__(self, other):
        return _apply("eq", self, other)

    def __ne__(self, other):
        return _apply("ne", self, other)

    __hash__ = None

    # numpy calls these methods when it meets actives inside object arrays
    def exp(self):
        return _apply("exp", self)

    def log(self):
        return _apply("log", self)

    def sin(self):
        return _apply("sin", self)

    def cos(self):
        return _apply("cos", self)

    def tanh(self):
        return _apply("tanh", self)

    def sqrt(self):
        return _apply("sqrt", self)


class ScalarActive(Active):
    """A scalar active stored element-wise in numpy object arrays."""

    __slots__ = ()
    _rank = 1
    _mode = None
    shape = ()
    ndim = 0
    size = 1

    def _apply(self, prim, args):
        for a in args:
            if isinstance(a, np.ndarray) and a.ndim > 0:
                return anp.elementwise(prim, args)
        return self._apply_scalar(prim, args)

    def _apply_scalar(self, prim, args):
        raise NotImplementedError

    def __getattr__(self, name):
        # numpy's object loops look up ufunc names as methods
        if name.startswith("_"):
            raise AttributeError(name)
        raise UnsupportedPrimitive(name, mode=self._mode)

    def __bool__(self):
        raise TraceEscape(
            f"truth value of a traced {type(self).__name__} is not observable; "
            "branch with a comparison instead"
        )


def _apply(name, *args):
    return anp.apply(PRIMITIVES[name], *args)
