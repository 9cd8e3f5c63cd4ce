"""The eight operators, each in four variants, plus preparation.

Every operator takes ``(f, prep, backend, x, *contexts)``; the seeded ones
(``pushforward``, ``pullback``, ``hvp``) take a batch of seeds after ``x``.

=========================================  ===================================
``op(f, prep, backend, x, ...)``            the derivative, freshly allocated
``value_and_op(f, prep, backend, x, ...)``  ``(f(x), derivative)``
``op(..., out=buf)``                        derivative written into ``buf``
``value_and_op(..., out=buf)``              ``(f(x), buf)``
=========================================  ===================================

``prep`` may be ``None``, in which case a throwaway preparation is built for
the call.  Reusing a preparation skips all setup (tape recording, seed
allocation, sparsity detection and coloring) and gives bitwise the same
result as a fresh one.
"""

from __future__ import annotations

import threading
from collections import Counter

import numpy as np
import scipy.sparse

from adkit._active import Active
from adkit.errors import PreparationInUse, PreparationMismatch, ShapeMismatch
from adkit.fallbacks import OPERATORS, build, check_operator, resolve
from adkit.function import (Cache, Constant, Workspace, as_function, context_signature,
                            float_payloads)

__all__ = ["Preparation", "prepare", "OPERATORS", "SEEDED"] + [
    name for op in OPERATORS for name in (op, f"value_and_{op}")
]

SEEDED = ("pushforward", "pullback", "hvp")
SCALAR_OUTPUT = ("gradient", "hvp", "hessian")
SCALAR_INPUT = ("derivative", "second_derivative")


class Preparation:
    """Everything an operator needs to run again at inputs of the same signature.

    Attributes
    ----------
    operator, backend : str, Backend
        What the preparation was built for.
    input_signature : (tuple, int)
        Shape and element count of the typical input.
    plan : OperatorPlan
        The resolved fallback chain; ``plan.describe()`` renders it.
    stats : Counter
        Instrumented call counts (``pushforward``, ``pullback``, ``hvp``,
        forward ``passes``, tape ``records``), accumulated over all calls.
    workspace : Workspace
        Allocator of every preallocated buffer; its ``allocations`` count
        does not grow on steady-state calls.
    """

    def __init__(self, operator, backend, f, x_shape, out_shape, contexts, nseeds, plan,
                 executor, workspace, stats):
        self.operator = operator
        self.backend = backend
        self.function = f
        self.input_shape = x_shape
        self.output_shape = out_shape
        self.context_signature = context_signature(contexts)
        self.nseeds = nseeds
        self.plan = plan
        self.executor = executor
        self.workspace = workspace
        self.stats = stats
        self._lock = threading.Lock()
        self._busy = False

    @property
    def backend_id(self):
        return self.backend.id

    @property
    def input_signature(self):
        return self.input_shape, int(np.prod(self.input_shape))

    @property
    def payload(self):
        return self.executor

    @property
    def allocations(self):
        return self.workspace.allocations

    def _enter(self):
        with self._lock:
            if self._busy:
                raise PreparationInUse("preparation is already in use by another call",
                                       operator=self.operator, backend=self.backend_id)
            self._busy = True

    def _exit(self):
        self._busy = False

    def __repr__(self):
        return (f"Preparation({self.operator}, backend={self.backend_id}, "
                f"input={self.input_shape}, plan='{self.plan.describe()}')")


def _as_input(x):
    if isinstance(x, Active) or (isinstance(x, np.ndarray) and x.dtype == object):
        return x
    return np.asarray(x, dtype=float)


def _check_contexts(contexts):
    for c in contexts:
        if not isinstance(c, (Constant, Cache)):
            raise TypeError(f"extra arguments must be wrapped in Constant or Cache, got {type(c).__name__}")


def prepare(operator, f, backend, x, *contexts, seeds=None):
    """Build a :class:`Preparation` for ``operator`` at a typical input ``x``.

    Parameters
    ----------
    operator : str
        One of :data:`OPERATORS`.
    f : callable or DifferentiableFunction
    backend : Backend
    x : array_like
        Typical input; only its shape is baked in.
    contexts : Constant or Cache
    seeds : sequence of arrays, optional
        For seeded operators, fixes the batch size (default 1).
    """
    op = check_operator(operator)
    f = as_function(f)
    x = _as_input(x)
    x_shape = tuple(np.shape(x))
    if f.input_shape is not None and x_shape != f.input_shape:
        raise ShapeMismatch("typical input does not match the declared input shape",
                            operator=op, backend=backend.id,
                            shapes={"input": x_shape, "declared": f.input_shape})
    _check_contexts(contexts)
    if f.inplace:
        out_shape = f.output_shape
    else:
        out_shape = tuple(np.shape(f.call(np.array(x, dtype=float, copy=True), float_payloads(contexts))))
    if op in SCALAR_OUTPUT and out_shape != ():
        raise ShapeMismatch(f"{op} needs a scalar-valued function", operator=op, backend=backend.id,
                            shapes={"output": out_shape})
    if op in SCALAR_INPUT and int(np.prod(x_shape)) != 1:
        raise ShapeMismatch(f"{op} needs a scalar input", operator=op, backend=backend.id,
                            shapes={"input": x_shape})
    nseeds = None
    if op in SEEDED:
        nseeds = 1 if seeds is None else len(_batch(seeds)[0])
    plan = resolve(op, backend, sizes=(int(np.prod(x_shape)), int(np.prod(out_shape))))
    ws, stats = Workspace(), Counter()
    executor = build(plan, f, x, contexts, ws, stats, out_shape, nseeds)
    return Preparation(op, backend, f, x_shape, out_shape, contexts, nseeds, plan, executor, ws, stats)


def _batch(seeds):
    if isinstance(seeds, (list, tuple)):
        return [np.asarray(s, dtype=float) for s in seeds], True
    return [np.asarray(seeds, dtype=float)], False


def _check(prep, op, f, backend, x, contexts, nseeds):
    if prep.operator != op:
        raise PreparationMismatch(f"preparation was built for {prep.operator}", operator=op,
                                  backend=backend.id)
    if prep.backend != backend:
        raise PreparationMismatch(f"preparation was built for backend '{prep.backend_id}'",
                                  operator=op, backend=backend.id)
    if f is not prep.function and getattr(f, "eval", f) is not prep.function.eval:
        raise PreparationMismatch("preparation was built for a different function",
                                  operator=op, backend=backend.id)
    if tuple(np.shape(x)) != prep.input_shape:
        raise PreparationMismatch("input signature differs from the prepared one", operator=op,
                                  backend=backend.id,
                                  shapes={"input": np.shape(x), "prepared": prep.input_shape})
    if context_signature(contexts) != prep.context_signature:
        raise PreparationMismatch("contexts differ from the prepared ones", operator=op,
                                  backend=backend.id)
    if nseeds is not None and nseeds != prep.nseeds:
        raise PreparationMismatch(f"preparation was built for {prep.nseeds} seeds, got {nseeds}",
                                  operator=op, backend=backend.id)


def _run(op, f, prep, backend, x, contexts, seeds=None):
    x = _as_input(x)
    _check_contexts(contexts)
    batch = None
    if op in SEEDED:
        batch, _ = _batch(seeds)
    if prep is None:
        prep = prepare(op, f, backend, x, *contexts, seeds=batch)
    else:
        _check(prep, op, f, backend, x, contexts, None if batch is None else len(batch))
    prep._enter()
    try:
        return prep.executor.run(x, list(contexts), batch)
    finally:
        prep._exit()


def _value(y):
    if isinstance(y, np.ndarray):
        return float(y) if y.ndim == 0 else y.copy()
    return y


def _emit(r, out):
    if scipy.sparse.issparse(r):
        if out is None:
            return r.copy()
        out.data[:] = r.data
        return out
    if out is None:
        if isinstance(r, np.ndarray):
            return float(r) if r.ndim == 0 else r.copy()
        return r
    np.copyto(out, r)
    return out


def _emit_batch(r, out, single):
    if out is None:
        res = [_emit(r[i], None) for i in range(len(r))]
    else:
        outs = [out] if single else out
        res = [_emit(r[i], o) for i, o in enumerate(outs)]
    return res[0] if single else res


_DOCS = {
    "pushforward": "Jacobian-vector products ``J(x) v`` for each seed ``v`` (input-shaped).",
    "pullback": "Vector-Jacobian products ``J(x)^T w`` for each seed ``w`` (output-shaped).",
    "derivative": "Derivative of ``f`` at a scalar ``x``; output-shaped.",
    "gradient": "Gradient of a scalar-valued ``f``; input-shaped.",
    "jacobian": "Jacobian as an (output count, input count) matrix; sparse backends return CSC.",
    "second_derivative": "Second derivative of ``f`` at a scalar ``x``.",
    "hvp": "Hessian-vector products ``H(x) v`` of a scalar-valued ``f``.",
    "hessian": "Symmetric Hessian of a scalar-valued ``f``; sparse backends return CSC.",
}


def _make(op):
    seeded = op in SEEDED

    if seeded:
        def plain(f, prep, backend, x, seeds, *contexts, out=None):
            y, r = _run(op, f, prep, backend, x, contexts, seeds)
            return _emit_batch(r, out, not isinstance(seeds, (list, tuple)))

        def with_value(f, prep, backend, x, seeds, *contexts, out=None):
            y, r = _run(op, f, prep, backend, x, contexts, seeds)
            return _value(y), _emit_batch(r, out, not isinstance(seeds, (list, tuple)))
    else:
        def plain(f, prep, backend, x, *contexts, out=None):
            y, r = _run(op, f, prep, backend, x, contexts)
            return _emit(r, out)

        def with_value(f, prep, backend, x, *contexts, out=None):
            y, r = _run(op, f, prep, backend, x, contexts)
            return _value(y), _emit(r, out)

    plain.__name__ = plain.__qualname__ = op
    with_value.__name__ = with_value.__qualname__ = f"value_and_{op}"
    plain.__doc__ = _DOCS[op] + (
        "\n\nA single seed array gives a single result; a list of seeds gives a list."
        if seeded else "")
    with_value.__doc__ = f"Primal value and {op}, as a pair."
    return plain, with_value


pushforward, value_and_pushforward = _make("pushforward")
pullback, value_and_pullback = _make("pullback")
derivative, value_and_derivative = _make("derivative")
gradient, value_and_gradient = _make("gradient")
jacobian, value_and_jacobian = _make("jacobian")
second_derivative, value_and_second_derivative = _make("second_derivative")
hvp, value_and_hvp = _make("hvp")
hessian, value_and_hessian = _make("hessian")
