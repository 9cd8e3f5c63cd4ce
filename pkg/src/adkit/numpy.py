"""numpy-flavoured functions that accept plain arrays and every active type.

Write differentiable functions against this namespace::

    import adkit.numpy as anp

    def f(x):
        return anp.sum(anp.sin(x) * x)

On float arrays each function is the corresponding numpy operation, except
that reductions (``sum``, ``dot``) accumulate sequentially in index order.
That fixed order is what lets a recorded tape replay a function bit-for-bit
and keeps dual-number results independent of the chunk size.

Plain numpy ufuncs (``np.sin(x)``) also work on dual arrays and tape scalars
through ``__array_ufunc__``, but numpy's own ``np.sum`` and ``@`` on float
arrays use pairwise/BLAS summation and lose the bitwise guarantees.
"""

from __future__ import annotations

import functools
import operator
import sys

import numpy as np
import scipy.special

from adkit import _active
from adkit._active import Active, ScalarActive
from adkit.errors import ShapeMismatch
from adkit.primitives import PRIMITIVES, TWO_OVER_SQRTPI, bind_partials


def apply(prim, *args):
    """Apply ``prim`` to ``args``, dispatching on the highest-ranked active value."""
    top = None
    has_objects = False
    for a in args:
        if isinstance(a, Active):
            if top is None or a._outranks(top):
                top = a
        elif type(a) is np.ndarray and a.dtype == object:
            has_objects = True
    if top is not None:
        return top._apply(prim, args)
    if has_objects:
        return elementwise(prim, args)
    return prim.fvalue(*args)


_KERNELS = {}


def elementwise(prim, args):
    """Apply a primitive element by element over object arrays of scalar actives."""
    kernel = _KERNELS.get(prim.name)
    if kernel is None:

        def scalar(*xs):
            for x in xs:
                if isinstance(x, Active):
                    return x._apply_scalar(prim, xs)
            return prim.fvalue(*xs)

        kernel = _KERNELS[prim.name] = np.frompyfunc(scalar, prim.arity, 1)
    # bare scalar actives would route back through __array_ufunc__
    args = [_box(a) if isinstance(a, Active) else a for a in args]
    return kernel(*args)


def _box(a):
    b = np.empty((), dtype=object)
    b[()] = a
    return b


def _unary(name):
    prim = PRIMITIVES[name]

    def fn(x):
        return apply(prim, x)

    fn.__name__ = fn.__qualname__ = name
    return fn


def _binary(name, pyname=None):
    prim = PRIMITIVES[name]

    def fn(a, b):
        return apply(prim, a, b)

    fn.__name__ = fn.__qualname__ = pyname or name
    return fn


add = _binary("add")
subtract = _binary("sub", "subtract")
multiply = _binary("mul", "multiply")
divide = _binary("div", "divide")
maximum = _binary("maximum")
minimum = _binary("minimum")
less = _binary("lt", "less")
less_equal = _binary("le", "less_equal")
greater = _binary("gt", "greater")
greater_equal = _binary("ge", "greater_equal")
equal = _binary("eq", "equal")
not_equal = _binary("ne", "not_equal")

negative = _unary("neg")
negative.__name__ = "negative"
exp = _unary("exp")
log = _unary("log")
sin = _unary("sin")
cos = _unary("cos")
tanh = _unary("tanh")
sqrt = _unary("sqrt")
abs = _unary("abs")
absolute = abs
sign = _unary("sign")
erf = _unary("erf")

_POW = PRIMITIVES["pow"]


def power(a, b):
    # x**2 is recorded as x*x, which is also what numpy computes for a square
    if not isinstance(b, Active) and np.ndim(b) == 0:
        if b == 2:
            return multiply(a, a)
        if b == 0:
            # the generic rule would give 0 * a**-1, which is nan at a = 0
            return add(multiply(a, 0.0), 1.0)
    return apply(_POW, a, b)


def square(x):
    return multiply(x, x)


def _ndim(a):
    nd = getattr(a, "ndim", None)
    return np.ndim(a) if nd is None else nd


def _shape(a):
    sh = getattr(a, "shape", None)
    return np.shape(a) if sh is None else sh


def sum(a, axis=None, dtype=None, out=None, keepdims=False):
    """Sequential (left-to-right) sum over all elements or along ``axis``."""
    if isinstance(a, ScalarActive):
        return a
    if isinstance(a, Active):
        return a.sum(axis=axis)
    if not isinstance(a, np.ndarray):
        a = np.asarray(a) if not isinstance(a, (list, tuple)) else stack(a)
        if isinstance(a, Active):
            return a.sum(axis=axis)
    if axis is None:
        flat = a.ravel()
        if flat.size == 0:
            return np.float64(0.0)
        if a.dtype == object:
            return functools.reduce(operator.add, flat)
        return np.add.accumulate(flat)[-1]
    if a.shape[axis] == 0:
        return np.zeros(np.delete(a.shape, axis))
    return np.take(np.add.accumulate(a, axis=axis), -1, axis=axis)


def mean(a, axis=None):
    n = np.prod(_shape(a)) if axis is None else _shape(a)[axis]
    return divide(sum(a, axis=axis), float(n))


def dot(a, b):
    """Matrix/vector product with sequential accumulation over the inner index."""
    na, nb = _ndim(a), _ndim(b)
    if na == 0 or nb == 0:
        return multiply(a, b)
    sa, sb = _shape(a), _shape(b)
    inner_a = sa[-1]
    inner_b = sb[0]
    if inner_a != inner_b:
        raise ShapeMismatch("dot: inner dimensions differ", shapes={"a": sa, "b": sb})
    if na == 1 and nb == 1:
        return sum(multiply(a, b))
    if na == 2 and nb == 1:
        acc = multiply(a[:, 0], b[0])
        for j in range(1, inner_b):
            acc = add(acc, multiply(a[:, j], b[j]))
        return acc
    if na == 1 and nb == 2:
        acc = multiply(a[0], b[0])
        for j in range(1, inner_b):
            acc = add(acc, multiply(a[j], b[j]))
        return acc
    if na == 2 and nb == 2:
        acc = multiply(a[:, 0:1], b[0:1, :])
        for j in range(1, inner_b):
            acc = add(acc, multiply(a[:, j:j + 1], b[j:j + 1, :]))
        return acc
    raise ShapeMismatch("dot supports arrays of rank at most 2", shapes={"a": sa, "b": sb})


matmul = dot


def _top(items):
    top = None
    for a in items:
        if isinstance(a, Active) and (top is None or a._outranks(top)):
            top = a
    return top


def _as_object(a):
    if isinstance(a, np.ndarray):
        return a if a.dtype == object else a.astype(object)
    out = np.empty((), dtype=object)
    out[()] = a
    return out


def _join(items, axis, how):
    top = _top(items)
    if top is not None and top._rank >= 2:
        return type(top)._join(items, axis, top, how)
    join = np.stack if how == "stack" else np.concatenate
    if top is not None or any(isinstance(a, np.ndarray) and a.dtype == object for a in items):
        return join([_as_object(a) for a in items], axis)
    return join([np.asarray(a, dtype=float) for a in items], axis)


def stack(arrays, axis=0):
    """Stack scalars or arrays (plain or active) along a new axis."""
    return _join(list(arrays), axis, "stack")


def concatenate(arrays, axis=0):
    return _join(list(arrays), axis, "concatenate")


def array(obj):
    """Build an array from a (possibly nested) list of plain or active scalars."""
    if isinstance(obj, (list, tuple)):
        return stack([array(o) if isinstance(o, (list, tuple)) else o for o in obj])
    if isinstance(obj, Active) or isinstance(obj, np.ndarray):
        return obj
    return np.asarray(obj, dtype=float)


def zeros_like(x, shape=None):
    """A zero buffer that can hold values of the same active type as ``x``."""
    if shape is None:
        shape = _shape(x)
    if isinstance(x, Active) and x._rank >= 2:
        return type(x).zeros(shape, like=x)
    if isinstance(x, ScalarActive) or (isinstance(x, np.ndarray) and x.dtype == object):
        return np.full(shape, 0.0, dtype=object)
    return np.zeros(shape)


def primal(x):
    """Strip all derivative information, returning plain floats."""
    if isinstance(x, Active):
        return x._primal()
    if isinstance(x, np.ndarray) and x.dtype == object:
        return np.array([primal(v) for v in x.ravel()], dtype=float).reshape(x.shape)
    return x


UFUNC_MAP = {
    np.add: add,
    np.subtract: subtract,
    np.multiply: multiply,
    np.true_divide: divide,
    np.power: power,
    np.negative: negative,
    np.positive: lambda x: x,
    np.exp: exp,
    np.log: log,
    np.sin: sin,
    np.cos: cos,
    np.tanh: tanh,
    np.sqrt: sqrt,
    np.absolute: abs,
    np.sign: sign,
    np.square: square,
    np.maximum: maximum,
    np.minimum: minimum,
    np.less: less,
    np.less_equal: less_equal,
    np.greater: greater,
    np.greater_equal: greater_equal,
    np.equal: equal,
    np.not_equal: not_equal,
    np.matmul: dot,
    scipy.special.erf: erf,
}

# names visible to primitive partial expressions and generated tape code
NAMESPACE = {
    "_exp": exp,
    "_log": log,
    "_sin": sin,
    "_cos": cos,
    "_tanh": tanh,
    "_sqrt": sqrt,
    "_abs": abs,
    "_sign": sign,
    "_power": power,
    "_maximum": maximum,
    "_minimum": minimum,
    "_ge": greater_equal,
    "_gt": greater,
    "_le": less_equal,
    "_lt": less,
    "_erf": erf,
    "_TWO_OVER_SQRTPI": TWO_OVER_SQRTPI,
    "_inf": float("inf"),
    "_nan": float("nan"),
}

bind_partials(NAMESPACE)
_active.anp = sys.modules[__name__]
