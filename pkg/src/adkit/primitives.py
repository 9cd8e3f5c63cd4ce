"""Scalar primitive table shared by every backend.

Each primitive carries a value rule and one partial-derivative expression per
argument.  The expressions are plain Python source over the names ``a``, ``b``
(arguments) and ``y`` (the primal output), written with the generic functions
of :mod:`adkit.numpy`.  The same source is

* compiled into lambdas for the dual-number backend (tangent = sum of partial
  times argument tangent),
* pasted into generated replay/sweep code by the tape backend, and
* classified by ``kind`` for the sparsity tracers.

Because the expressions only use generic functions they work unchanged on
floats, arrays, and nested active values, which is what makes second-order
composition (one backend differentiating another) possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.special

ALL_MODES = frozenset({"forward", "reverse", "trace"})

# kinds used by the sparsity tracers
LINEAR = "linear"          # output depends linearly on every argument
BILINEAR = "bilinear"      # linear in each argument separately (product)
NONLINEAR = "nonlinear"    # anything else with a nonzero derivative
ZERO = "zero"              # piecewise constant: derivative is zero
COMPARE = "compare"        # boolean result, no tangent


@dataclass(eq=False)
class Primitive:
    name: str
    arity: int
    fvalue: object                      # numpy-level value function on plain floats/arrays
    value_src: str                      # generic value expression (codegen)
    kind: str
    partials_src: tuple = ()
    coeffs: tuple | None = None         # constant partials of linear primitives
    modes: frozenset = ALL_MODES
    partial_fns: tuple = field(default=(), repr=False)

    def __repr__(self):
        return f"<Primitive {self.name}>"


def _p(name, arity, fvalue, value_src, kind, partials=(), coeffs=None, modes=ALL_MODES):
    return Primitive(name, arity, fvalue, value_src, kind, tuple(partials), coeffs, modes)


TWO_OVER_SQRTPI = 2.0 / np.sqrt(np.pi)

PRIMITIVES = {
    p.name: p
    for p in [
        _p("add", 2, np.add, "a + b", LINEAR, ("1.0", "1.0"), coeffs=(1, 1)),
        _p("sub", 2, np.subtract, "a - b", LINEAR, ("1.0", "-1.0"), coeffs=(1, -1)),
        _p("neg", 1, np.negative, "-a", LINEAR, ("-1.0",), coeffs=(-1,)),
        _p("mul", 2, np.multiply, "a * b", BILINEAR, ("b", "a")),
        _p("div", 2, np.true_divide, "a / b", NONLINEAR, ("1.0 / b", "-y / b")),
        _p("pow", 2, np.power, "_power(a, b)", NONLINEAR,
           ("b * _power(a, b - 1.0)", "y * _log(a)")),
        _p("exp", 1, np.exp, "_exp(a)", NONLINEAR, ("y",)),
        _p("log", 1, np.log, "_log(a)", NONLINEAR, ("1.0 / a",)),
        _p("sin", 1, np.sin, "_sin(a)", NONLINEAR, ("_cos(a)",)),
        _p("cos", 1, np.cos, "_cos(a)", NONLINEAR, ("-_sin(a)",)),
        _p("tanh", 1, np.tanh, "_tanh(a)", NONLINEAR, ("1.0 - y * y",)),
        _p("sqrt", 1, np.sqrt, "_sqrt(a)", NONLINEAR, ("0.5 / y",)),
        # abs'(0) = 0 through sign(0) = 0
        _p("abs", 1, np.abs, "_abs(a)", NONLINEAR, ("_sign(a)",)),
        _p("sign", 1, np.sign, "_sign(a)", ZERO),
        # ties take the first argument's tangent
        _p("maximum", 2, np.maximum, "_maximum(a, b)", NONLINEAR, ("_ge(a, b)", "_lt(a, b)")),
        _p("minimum", 2, np.minimum, "_minimum(a, b)", NONLINEAR, ("_le(a, b)", "_gt(a, b)")),
        _p("lt", 2, np.less, "a < b", COMPARE),
        _p("le", 2, np.less_equal, "a <= b", COMPARE),
        _p("gt", 2, np.greater, "a > b", COMPARE),
        _p("ge", 2, np.greater_equal, "a >= b", COMPARE),
        _p("eq", 2, np.equal, "a == b", COMPARE),
        _p("ne", 2, np.not_equal, "a != b", COMPARE),
        # only the tape and the tracers know erf: the dual table has no rule for it
        _p("erf", 1, scipy.special.erf, "_erf(a)", NONLINEAR,
           ("_TWO_OVER_SQRTPI * _exp(-(a * a))",), modes=frozenset({"reverse", "trace"})),
    ]
}


def bind_partials(namespace):
    """Compile the partial expressions against the generic function namespace."""
    for prim in PRIMITIVES.values():
        args = "a, b, y" if prim.arity == 2 else "a, y"
        prim.partial_fns = tuple(
            eval(f"lambda {args}: {src}", namespace) for src in prim.partials_src
        )


@dataclass(frozen=True)
class PrimitiveRule:
    """Forward-mode rule: ``value(*args)`` and ``tangent(args, tangents)``."""

    primitive: str
    value: object
    tangent: object


def _tangent_rule(prim):
    def rule(args, tangents):
        y = prim.fvalue(*args)
        if prim.kind == COMPARE:
            return None
        if prim.kind == ZERO:
            return 0.0 * tangents[0]
        out = None
        for k, t in enumerate(tangents):
            if t is None:
                continue
            term = prim.partial_fns[k](*args, y) * t
            out = term if out is None else out + term
        return out

    return rule


def _sum_tangent(args, tangents):
    return np.sum(tangents[0])


def primitive_rules(mode="forward"):
    """The rule table for ``mode``; absent primitives raise ``UnsupportedPrimitive`` upstream."""
    if not PRIMITIVES["add"].partial_fns:
        import adkit.numpy  # noqa: F401  (binds partials on import)
    table = {
        name: PrimitiveRule(name, prim.fvalue, _tangent_rule(prim))
        for name, prim in PRIMITIVES.items()
        if mode in prim.modes
    }
    table["sum"] = PrimitiveRule("sum", np.sum, _sum_tangent)
    return table
