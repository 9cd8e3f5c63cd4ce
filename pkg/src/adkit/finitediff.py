"""Finite-difference derivatives, used as a backend and as the test oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adkit import numpy as anp
from adkit._active import Active
from adkit.errors import ConfigError, NonFiniteResult, ShapeMismatch
from adkit.forward import basis
from adkit.function import Cache, as_function, float_payloads, readonly

__all__ = ["StepRule", "fd_pushforward", "fd_jacobian", "FDPushforward", "FDPullback"]

DEFAULT_STEP = float(np.finfo(float).eps ** (1 / 3))


@dataclass(frozen=True)
class StepRule:
    """How to choose the step ``h`` along a direction ``v``.

    With ``relative`` set the step is ``base_step * max(1, |x_i|)`` over the
    coordinates ``v`` touches.  The step is divided by ``max|v|`` so the
    perturbation ``h v`` has the same size whatever the seed's scale.
    """

    scheme: str = "central"
    base_step: float = DEFAULT_STEP
    relative: bool = True

    def __post_init__(self):
        if self.scheme not in ("central", "forward"):
            raise ConfigError(f"unknown finite-difference scheme {self.scheme!r}")
        if not self.base_step > 0:
            raise ConfigError("base_step must be positive")

    def step(self, x, v):
        av = np.abs(v)
        vmax = av.max() if av.size else 0.0
        if vmax == 0:
            return None
        h = self.base_step
        if self.relative:
            ax = np.abs(x)
            h *= max(1.0, float(np.max(np.where(av > 0, ax, 0.0))))
        return h / vmax


def _is_active(x):
    return isinstance(x, Active) or (isinstance(x, np.ndarray) and x.dtype == object)


def _check_finite(y, where):
    if not np.all(np.isfinite(anp.primal(y))):
        raise NonFiniteResult(f"non-finite value at {where}", backend="fd")


def _call(f, x, payloads, out_shape):
    if f.inplace:
        buf = anp.zeros_like(x, out_shape) if _is_active(x) else np.empty(out_shape)
        return f.call(x, payloads, buf)
    return f.call(x, payloads)


def _taken(xs, x, v):
    # the step actually taken along the dominant seed coordinate; dividing by
    # it rather than by h removes the rounding of x +- h*v from the quotient
    vf = np.ravel(v)
    j = int(np.argmax(np.abs(vf)))
    return (float(np.ravel(anp.primal(xs))[j]) - float(np.ravel(anp.primal(x))[j])) / vf[j]


def _difference(f, x, v, rule, payloads, out_shape, fx=None):
    h = rule.step(anp.primal(x), v)
    if h is None:
        return np.zeros(out_shape)
    hv = anp.multiply(h, v)
    xp = anp.add(x, hv)
    yp = _call(f, xp, payloads, out_shape)
    _check_finite(yp, "x + h*v")
    if rule.scheme == "central":
        xm = anp.subtract(x, hv)
        ym = _call(f, xm, payloads, out_shape)
        _check_finite(ym, "x - h*v")
        return anp.divide(anp.subtract(yp, ym), _taken(xp, x, v) - _taken(xm, x, v))
    return anp.divide(anp.subtract(yp, fx), _taken(xp, x, v))


def fd_pushforward(f, x, v, rule=None, contexts=()):
    """Finite-difference directional derivative of ``f`` at ``x`` along ``v``.

    Examples
    --------
    >>> rule = StepRule(base_step=1e-6, relative=False)
    >>> round(float(fd_pushforward(lambda x: x * x, 3.0, 1.0, rule)), 8)
    6.0
    """
    f = as_function(f)
    rule = rule or StepRule()
    x = x if _is_active(x) else np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.shape(v) != np.shape(x):
        raise ShapeMismatch("direction shape differs from input shape",
                            shapes={"v": np.shape(v), "x": np.shape(x)})
    payloads = float_payloads(contexts)
    out_shape = f.output_shape if f.inplace else np.shape(f.call(anp.primal(x), payloads))
    fx = _call(f, x, payloads, out_shape) if rule.scheme == "forward" else None
    return _difference(f, x, v, rule, payloads, out_shape, fx)


def fd_jacobian(f, x, rule=None, contexts=()):
    """Dense Jacobian by finite differences, one column per input coordinate."""
    f = as_function(f)
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = 1.0
        cols.append(np.ravel(fd_pushforward(f, x, e.reshape(x.shape), rule, contexts)))
    m = cols[0].size if cols else 0
    return np.stack(cols, axis=1) if cols else np.zeros((m, 0))


class FDPushforward:
    """Batched finite-difference pushforward with preallocated perturbation buffers."""

    def __init__(self, f, x, contexts, ndirs, rule, ws, stats, out_shape, fixed=None):
        self.f = f
        self.rule = rule
        self.ndirs = ndirs
        self.stats = stats
        self.fixed = fixed
        self.out_shape = tuple(out_shape)
        self.x_shape = tuple(np.shape(x))
        self.hv = ws.empty(self.x_shape)
        self.xp = ws.empty(self.x_shape)
        self.xm = ws.empty(self.x_shape)
        self.y = ws.empty(self.out_shape)
        self.out = ws.empty((ndirs,) + self.out_shape)
        if f.inplace:
            self.yp = ws.empty(self.out_shape)
            self.ym = ws.empty(self.out_shape)
        self.caches = [ws.zeros(c.shape) if isinstance(c, Cache) else None for c in contexts]

    def _payloads(self, contexts):
        return [readonly(c.value) if b is None else b for c, b in zip(contexts, self.caches)]

    def run(self, x, contexts, seeds=None):
        seeds = self.fixed if seeds is None else seeds
        if seeds is None or len(seeds) != self.ndirs:
            raise ShapeMismatch(f"pushforward needs {self.ndirs} seeds")
        self.stats["pushforward"] += self.ndirs
        if _is_active(x):
            return self._run_active(x, contexts, seeds)
        payloads = self._payloads(contexts)
        f = self.f
        central = self.rule.scheme == "central"
        fx = f.call(x, payloads, self.y)
        _check_finite(fx, "x")
        if not f.inplace:
            np.copyto(self.y, fx)
        for i, v in enumerate(seeds):
            if np.shape(v) != self.x_shape:
                raise ShapeMismatch("seed shape differs from input shape",
                                    shapes={"seed": np.shape(v), "input": self.x_shape})
            h = self.rule.step(x, v)
            out = self.out[i, ...]
            if h is None:
                out[...] = 0.0
                continue
            np.multiply(h, v, out=self.hv)
            np.add(x, self.hv, out=self.xp)
            yp = f.call(self.xp, payloads, self.yp if f.inplace else None)
            _check_finite(yp, "x + h*v")
            if central:
                np.subtract(x, self.hv, out=self.xm)
                ym = f.call(self.xm, payloads, self.ym if f.inplace else None)
                _check_finite(ym, "x - h*v")
                np.subtract(yp, ym, out=out)
                np.divide(out, _taken(self.xp, x, v) - _taken(self.xm, x, v), out=out)
            else:
                np.subtract(yp, self.y, out=out)
                np.divide(out, _taken(self.xp, x, v), out=out)
        return self.y, self.out

    def _run_active(self, x, contexts, seeds):
        payloads = [readonly(c.value) if not isinstance(c, Cache) else anp.zeros_like(x, c.shape)
                    for c in contexts]
        fx = _call(self.f, x, payloads, self.out_shape)
        outs = [_difference(self.f, x, np.asarray(v, dtype=float), self.rule, payloads,
                            self.out_shape, fx) for v in seeds]
        return fx, anp.stack(outs)


class FDPullback:
    """Finite-difference pullback: assemble the Jacobian column by column, then apply its transpose."""

    def __init__(self, f, x, contexts, nseeds, rule, ws, stats, out_shape, fixed=None):
        self.x_shape = tuple(np.shape(x))
        self.out_shape = tuple(out_shape)
        e = basis(self.x_shape)
        self.columns = FDPushforward(f, x, contexts, len(e), rule, ws, stats, out_shape, fixed=e)
        self.nseeds = nseeds
        self.stats = stats
        self.fixed = fixed
        self.out = ws.empty((nseeds,) + self.x_shape)

    def run(self, x, contexts, seeds=None):
        seeds = self.fixed if seeds is None else seeds
        if seeds is None or len(seeds) != self.nseeds:
            raise ShapeMismatch(f"pullback needs {self.nseeds} seeds")
        self.stats["pullback"] += self.nseeds
        y, cols = self.columns.run(x, contexts)
        n = cols.shape[0]
        jt = cols.reshape(n, -1)          # row i: column i of the Jacobian
        for w in seeds:
            if np.shape(w) != self.out_shape:
                raise ShapeMismatch("seed shape differs from output shape",
                                    shapes={"seed": np.shape(w), "output": self.out_shape})
        if _is_active(x):
            return y, anp.stack([anp.dot(jt, np.ravel(w)).reshape(self.x_shape) for w in seeds])
        for i, w in enumerate(seeds):
            np.dot(jt, np.ravel(w), out=self.out[i, ...].reshape(-1))
        return y, self.out
