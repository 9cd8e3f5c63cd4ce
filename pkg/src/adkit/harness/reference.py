"""Backend-independent reference values.

A scenario either supplies a closed form or falls back to central finite
differences computed here with plain float evaluations of the function,
without going through any backend.
"""

from __future__ import annotations

import numpy as np

from adkit.function import Cache, Constant

ORACLE_STEP = 6.06e-6


def _payloads(contexts):
    return [np.zeros(np.shape(c.value)) if isinstance(c, Cache) else c.value
            if isinstance(c, Constant) else c for c in contexts]


def evaluate(f, x, contexts, output_shape=None):
    """Plain float evaluation of ``f`` (in-place functions get a fresh buffer)."""
    p = _payloads(contexts)
    if getattr(f, "inplace", False):
        y = np.zeros(f.output_shape)
        f.eval(y, np.array(x, dtype=float), *p)
        return y
    return np.asarray(getattr(f, "eval", f)(np.array(x, dtype=float), *p), dtype=float)


def central_jacobian(f, x, contexts=(), h=ORACLE_STEP):
    """Dense ``(m, n)`` Jacobian by central differences with a relative step."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    cols = []
    for j in range(flat.size):
        step = h * max(1.0, abs(flat[j]))
        xp, xm = flat.copy(), flat.copy()
        xp[j] += step
        xm[j] -= step
        yp = evaluate(f, xp.reshape(x.shape), contexts)
        ym = evaluate(f, xm.reshape(x.shape), contexts)
        cols.append(np.ravel(yp - ym) / (2 * step))
    return np.array(cols).T if cols else np.zeros((0, 0))


def oracle(operator, f, x, contexts=(), seed=None):
    """Finite-difference reference for a first-order operator."""
    J = central_jacobian(f, x, contexts)
    y = evaluate(f, x, contexts)
    if operator == "gradient":
        return J.reshape(np.shape(x))
    if operator == "jacobian":
        return J
    if operator == "derivative":
        return J.reshape(y.shape)
    if operator == "pushforward":
        return (J @ np.ravel(seed)).reshape(y.shape)
    if operator == "pullback":
        return (np.ravel(seed) @ J).reshape(np.shape(x))
    raise ValueError(f"no finite-difference oracle for '{operator}'; supply a closed form")
