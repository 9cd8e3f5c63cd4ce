"""Reverse mode on a recorded scalar tape (a Wengert list).

Recording runs the function once on an object array of :class:`TapeScalar`
values; every primitive applied to them appends a node
``(primitive, argument slots, output slot)``.  Plain numbers met on the way
(Constant contexts included) are embedded as literals.

The finished tape is compiled into two generated Python functions:

``replay(s)``
    recomputes every slot from the inputs ``s[:n]``, in node order;
``sweep(s, g)``
    accumulates adjoints in reverse node order, reading saved slot values.

The generated code only calls the generic functions of :mod:`adkit.numpy`, so
the same tape also replays on active values (a dual number pushing a tangent
through the gradient gives forward-over-reverse Hessian-vector products).
A second copy is compiled against numpy's scalar ufuncs for the float path.

Comparisons on tape scalars return the recorded outcome and are logged as
guards.  By default the branch taken at recording time is frozen; with
``strict=True`` replay re-evaluates each guard and raises ``TraceEscape``
when a branch flips.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter, namedtuple

import numpy as np
import scipy.special

from adkit import numpy as anp
from adkit._active import Active, ScalarActive
from adkit.errors import (PreparationMismatch, ShapeMismatch, TraceEscape,
                          UnsupportedOperator, UnsupportedPrimitive)
from adkit.function import Cache, Constant, readonly
from adkit.primitives import COMPARE, PRIMITIVES, ZERO, TWO_OVER_SQRTPI

__all__ = ["Tape", "TapeScalar", "record", "replay", "reverse_sweep", "TapePullback"]

Node = namedtuple("Node", "op args out")
Guard = namedtuple("Guard", "op args outcome position")

_tape_ids = itertools.count(1)

# the float-path namespace: numpy scalar ufuncs, bitwise equal to the
# vectorized calls a plain evaluation makes
_FLOAT_NS = {
    "_exp": np.exp,
    "_log": np.log,
    "_sin": np.sin,
    "_cos": np.cos,
    "_tanh": np.tanh,
    "_sqrt": np.sqrt,
    "_abs": np.abs,
    "_sign": np.sign,
    "_power": np.power,
    "_maximum": np.maximum,
    "_minimum": np.minimum,
    "_ge": np.greater_equal,
    "_gt": np.greater,
    "_le": np.less_equal,
    "_lt": np.less,
    "_erf": scipy.special.erf,
    "_TWO_OVER_SQRTPI": TWO_OVER_SQRTPI,
    "_inf": float("inf"),
    "_nan": float("nan"),
}

_ARG = re.compile(r"\b([aby])\b")


class TapeScalar(ScalarActive):
    """A scalar being recorded onto ``tape`` at ``slot``."""

    __slots__ = ("value", "slot", "tape")
    _mode = "reverse"

    def __init__(self, value, slot, tape):
        self.value = value
        self.slot = slot
        self.tape = tape

    def _primal(self):
        return float(self.value)

    def _apply_scalar(self, prim, args):
        tape = self.tape
        if "reverse" not in prim.modes:
            raise UnsupportedPrimitive(prim.name, mode="reverse", backend="tape")
        vals, refs = [], []
        for a in args:
            if isinstance(a, TapeScalar):
                if a.tape is not tape:
                    raise TraceEscape("values from two different tapes met in one operation")
                vals.append(a.value)
                refs.append(a.slot)
            elif isinstance(a, Active):
                raise UnsupportedOperator(
                    f"tape scalars cannot be combined with {type(a).__name__}", backend="tape")
            else:
                c = float(a)
                vals.append(c)
                refs.append(c)
        y = prim.fvalue(*vals)
        if prim.kind == COMPARE:
            outcome = bool(y)
            tape.guards.append(Guard(prim.name, tuple(refs), outcome, len(tape.nodes)))
            return outcome
        return tape.push(prim.name, tuple(refs), float(y))

    def __repr__(self):
        return f"TapeScalar({self.value!r}, slot={self.slot})"


def _lit(c):
    if c != c:
        return "_nan"
    if c in (float("inf"), float("-inf")):
        return "_inf" if c > 0 else "(-_inf)"
    return repr(float(c))


class Tape:
    """A recorded primitive trace with compiled replay and reverse sweep.

    Attributes
    ----------
    nodes : list of Node
        Topologically ordered; argument entries are slot indices (int) or
        embedded literals (float).
    input_slots, output_slots : range, list
        Slots of the flattened input and output.
    """

    def __init__(self, x_shape):
        self.id = next(_tape_ids)
        self.x_shape = tuple(x_shape)
        self.n_inputs = int(np.prod(self.x_shape))
        self.input_slots = range(self.n_inputs)
        self.output_slots = []
        self.out_shape = ()
        self.nodes = []
        self.guards = []
        self.externals = []
        self.values = []
        self.strict = False
        self._float = self._generic = None

    # recording

    def push(self, op, refs, y):
        slot = len(self.values)
        self.values.append(y)
        self.nodes.append(Node(op, refs, slot))
        return TapeScalar(y, slot, self)

    def push_const(self, c):
        slot = len(self.values)
        self.values.append(c)
        self.nodes.append(Node("const", (c,), slot))
        return slot

    def push_external(self, ext, refs, ys):
        """Append a call to an externally differentiated block.

        ``ext.forward(xs)`` must return ``(ys, jacobian)`` and is called again at
        replay; the reverse sweep applies the saved Jacobian transpose.
        """
        k = len(self.externals)
        first = len(self.values)
        outs = tuple(range(first, first + len(ys)))
        self.externals.append((ext, tuple(refs), outs))
        self.values.extend(float(v) for v in ys)
        self.nodes.append(Node("ext", (k,), outs))
        return [TapeScalar(float(v), s, self) for v, s in zip(ys, outs)]

    def counts(self):
        """Number of nodes per primitive."""
        return Counter(n.op for n in self.nodes)

    def __len__(self):
        return len(self.nodes)

    @property
    def n_slots(self):
        return len(self.values)

    # compilation

    def _ref(self, a):
        return f"s[{a}]" if type(a) is int else _lit(a)

    def _expr(self, src, node):
        sub = {"a": self._ref(node.args[0]), "y": f"s[{node.out}]"}
        if len(node.args) > 1:
            sub["b"] = self._ref(node.args[1])
        return _ARG.sub(lambda m: sub[m.group(1)], src)

    def source(self):
        fwd = ["def replay(s):"]
        guards = iter(self.guards) if self.strict else iter(())
        pending = next(guards, None)
        for i, node in enumerate(self.nodes):
            while pending is not None and pending.position == i:
                fwd.append(self._guard_line(pending))
                pending = next(guards, None)
            fwd.extend(self._forward_lines(node))
        while pending is not None:
            fwd.append(self._guard_line(pending))
            pending = next(guards, None)
        fwd.append("    return s")
        rev = ["def sweep(s, g):"]
        for node in reversed(self.nodes):
            rev.extend(self._reverse_lines(node))
        rev.append("    return g")
        return "\n".join(fwd) + "\n\n" + "\n".join(rev) + "\n"

    def _guard_line(self, guard):
        expr = self._expr(PRIMITIVES[guard.op].value_src, Node(guard.op, guard.args, 0))
        return f"    if bool({expr}) is not {guard.outcome}: _diverged({expr!r})"

    def _forward_lines(self, node):
        if node.op == "const":
            return [f"    s[{node.out}] = {_lit(node.args[0])}"]
        if node.op == "ext":
            return [f"    _ext[{node.args[0]}].replay(s)"]
        return [f"    s[{node.out}] = {self._expr(PRIMITIVES[node.op].value_src, node)}"]

    def _reverse_lines(self, node):
        if node.op == "const":
            return []
        if node.op == "ext":
            return [f"    _ext[{node.args[0]}].sweep(s, g)"]
        prim = PRIMITIVES[node.op]
        if prim.kind == ZERO:
            return []
        go = f"g[{node.out}]"
        lines = []
        for k, a in enumerate(node.args):
            if type(a) is not int:
                continue
            if prim.coeffs is not None:
                lines.append(f"    g[{a}] {'+=' if prim.coeffs[k] > 0 else '-='} {go}")
            else:
                lines.append(f"    g[{a}] += {go} * ({self._expr(prim.partials_src[k], node)})")
        return lines

    def compile(self, strict=None):
        if strict is not None:
            self.strict = strict
        src = self.source()
        code = compile(src, f"<tape {self.id}>", "exec")
        exts = [_ExternalStep(ext, refs, outs) for ext, refs, outs in self.externals]
        compiled = []
        for base in (_FLOAT_NS, anp.NAMESPACE):
            ns = dict(base, _ext=exts, _diverged=_diverged)
            exec(code, ns)
            compiled.append((ns["replay"], ns["sweep"]))
        self._float, self._generic = compiled
        self._s = list(self.values)
        self._g = [0.0] * self.n_slots
        self._zeros = [0.0] * self.n_slots
        return self

    # execution

    def _check(self, x):
        if np.shape(x) != self.x_shape:
            raise PreparationMismatch("input shape differs from the recorded one",
                                      shapes={"input": np.shape(x), "recorded": self.x_shape})

    def replay(self, x, out=None):
        """Recompute all slots at ``x`` and return the output."""
        self._check(x)
        if self._float is None:
            self.compile()
        if _is_active(x):
            return self._replay_active(x)[0]
        s = self._s
        s[: self.n_inputs] = np.ravel(x).tolist()
        self._float[0](s)
        y = np.empty(self.out_shape) if out is None else out
        y.ravel()[:] = [s[i] for i in self.output_slots]
        return y

    def reverse_sweep(self, seed, out=None):
        """Input cotangent ``J^T seed`` at the point of the last replay."""
        if np.shape(seed) != self.out_shape:
            raise ShapeMismatch("seed shape differs from the output shape",
                                shapes={"seed": np.shape(seed), "output": self.out_shape})
        g = self._g
        g[:] = self._zeros
        for slot, w in zip(self.output_slots, np.ravel(seed).tolist()):
            g[slot] += w
        self._float[1](self._s, g)
        r = np.empty(self.x_shape) if out is None else out
        r.ravel()[:] = g[: self.n_inputs]
        return r

    def _replay_active(self, x):
        s = [None] * self.n_slots
        if isinstance(x, ScalarActive):
            s[0] = x
        else:
            xr = x.ravel()
            s[: self.n_inputs] = [xr[i] for i in range(self.n_inputs)]
        self._generic[0](s)
        outs = [s[i] for i in self.output_slots]
        return anp.stack(outs).reshape(self.out_shape), s

    def pullback_active(self, x, seeds):
        """Replay and sweep on active inputs; seeds are plain arrays."""
        y, s = self._replay_active(x)
        grads = []
        for w in seeds:
            g = [0.0] * self.n_slots
            for slot, wi in zip(self.output_slots, np.ravel(w).tolist()):
                g[slot] += wi
            self._generic[1](s, g)
            grads.append(anp.stack(g[: self.n_inputs]).reshape(self.x_shape))
        return y, grads

    def __repr__(self):
        return f"<Tape {self.id}: {len(self.nodes)} nodes, {self.n_inputs} inputs, {len(self.output_slots)} outputs>"


def _diverged(expr):
    raise TraceEscape(f"branch on '{expr}' differs from the recorded one; re-record the tape")


class _ExternalStep:
    # float-path only: external blocks see plain numbers
    def __init__(self, ext, refs, outs):
        self.ext, self.refs, self.outs = ext, refs, outs
        self.jac = getattr(ext, "jac", None)

    def _inputs(self, s):
        return [s[r] if type(r) is int else r for r in self.refs]

    def replay(self, s):
        xs = self._inputs(s)
        if any(isinstance(v, Active) for v in xs):
            raise UnsupportedOperator("an externally differentiated block cannot be nested",
                                      backend="tape")
        ys, self.jac = self.ext.forward(np.array(xs, dtype=float))
        for o, v in zip(self.outs, np.ravel(ys).tolist()):
            s[o] = v
        return s

    def sweep(self, s, g):
        gout = np.array([g[o] for o in self.outs], dtype=float)
        gin = self.ext.transpose(self.jac, gout)
        for r, v in zip(self.refs, gin.tolist()):
            if type(r) is int:
                g[r] += v
        return g


def _is_active(x):
    return isinstance(x, Active) or (isinstance(x, np.ndarray) and x.dtype == object)


def _payloads(contexts):
    out = []
    for c in contexts:
        if isinstance(c, Cache):
            out.append(np.full(c.shape, 0.0, dtype=object))
        else:
            out.append(readonly(c.value))
    return out


def record(f, x, *contexts, strict=False, out_shape=None):
    """Record ``f`` at ``x`` and compile the tape.

    Parameters
    ----------
    f : callable or DifferentiableFunction
        In-place functions need their declared ``output_shape``.
    x : array_like
        Recording point.  Control flow taken here is frozen into the tape.
    contexts : Constant or Cache
        Constants are embedded as literals; Caches get object buffers so
        writes through them are traced.
    strict : bool
        Re-check every recorded comparison on replay.
    """
    from adkit.function import as_function

    f = as_function(f)
    x = np.asarray(x, dtype=float)
    tape = Tape(x.shape)
    xs = np.empty(x.shape, dtype=object)
    flat = xs.reshape(-1)
    for i, v in enumerate(x.ravel().tolist()):
        tape.values.append(v)
        flat[i] = TapeScalar(v, i, tape)
    xin = xs if x.ndim else xs[()]
    payloads = _payloads(contexts)
    if f.inplace:
        ybuf = np.full(f.output_shape, 0.0, dtype=object)
        y = f.call(xin, payloads, ybuf)
    else:
        y = f.call(xin, payloads)
    tape.out_shape = tuple(np.shape(y))
    if out_shape is not None and tape.out_shape != tuple(out_shape):
        raise ShapeMismatch("output shape differs from the declared one",
                            shapes={"output": tape.out_shape, "declared": tuple(out_shape)})
    items = y.ravel().tolist() if isinstance(y, np.ndarray) else [y]
    slots = []
    for e in items:
        if isinstance(e, TapeScalar) and e.tape is tape:
            slots.append(e.slot)
        elif isinstance(e, Active):
            raise TraceEscape(f"output holds a foreign active value {type(e).__name__}")
        else:
            slots.append(tape.push_const(float(e)))
    tape.output_slots = slots
    return tape.compile(strict)


def replay(tape, x):
    return tape.replay(np.asarray(x, dtype=float))


def reverse_sweep(tape, seed):
    return tape.reverse_sweep(np.asarray(seed, dtype=float))


class TapePullback:
    """Prepared batched pullback: the tape is recorded once, at preparation."""

    def __init__(self, f, x, contexts, nseeds, ws, stats, out_shape, strict=False, fixed=None):
        self.tape = record(f, x, *contexts, strict=strict, out_shape=out_shape)
        stats["records"] += 1
        self.stats = stats
        self.nseeds = nseeds
        self.fixed = fixed
        self.snapshots = [
            (i, np.array(c.value, copy=True)) for i, c in enumerate(contexts) if isinstance(c, Constant)
        ]
        self.y = ws.empty(self.tape.out_shape)
        self.grads = ws.empty((nseeds,) + self.tape.x_shape)

    def _check_constants(self, contexts):
        for i, snap in self.snapshots:
            v = contexts[i].value
            if np.shape(v) != snap.shape or not np.array_equal(v, snap):
                raise PreparationMismatch(
                    "a Constant changed since the tape was recorded; constants are embedded by value",
                    backend="tape")

    def run(self, x, contexts, seeds=None):
        seeds = self.fixed if seeds is None else seeds
        if seeds is None or len(seeds) != self.nseeds:
            raise ShapeMismatch(f"pullback needs {self.nseeds} seeds")
        self.stats["pullback"] += self.nseeds
        self._check_constants(contexts)
        if _is_active(x):
            y, grads = self.tape.pullback_active(x, seeds)
            return y, anp.stack(grads)
        self.tape.replay(x, self.y)
        for i, w in enumerate(seeds):
            self.tape.reverse_sweep(w, self.grads[i, ...])
        return self.y, self.grads
