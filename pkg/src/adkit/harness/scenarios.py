"""Test and benchmark scenarios.

A scenario bundles a function, an operator, a typical input, its contexts and
a reference for the derivative.  Sized scenarios build their input from a size
``n``; scalar ones (``derivative``, ``second_derivative``) ignore it.

Custom scenarios can be registered from a Python file, which is how the CLI's
``--scenario-module`` works::

    from adkit.harness.scenarios import Scenario, register
    register(Scenario("cube", "gradient", lambda x: anp.sum(x ** 3),
                      reference=lambda x, seed: 3 * x ** 2))
"""

from __future__ import annotations

import importlib.util
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

import adkit.numpy as anp
from adkit.errors import ConfigError
from adkit.function import Cache, Constant, DifferentiableFunction
from adkit.harness.reference import evaluate, oracle

SCALAR_INPUT = ("derivative", "second_derivative")
SEEDED = ("pushforward", "pullback", "hvp")


@dataclass
class Case:
    """One concrete instance of a scenario at a given size."""

    scenario: "Scenario"
    f: object
    x: np.ndarray
    contexts: tuple
    seed: object
    expected: object

    @property
    def size(self):
        return int(np.size(self.x))


@dataclass
class Scenario:
    """A function, an operator and a way to get the right answer.

    Parameters
    ----------
    name : str
    operator : str
        One of the eight operator names.
    f : callable or DifferentiableFunction
        The function; with ``factory=True``, a callable ``n -> function``
        (in-place functions need their output shape up front).
    reference : callable or "finite_difference"
        ``reference(x, seed, *payloads)`` giving the exact derivative, or the
        string ``"finite_difference"`` to use the central-difference oracle.
        Payloads are the raw context values.
    input : callable
        ``n -> x``.  Defaults to a fixed pseudo-random vector in ``[0.5, 1.5]``.
    contexts : callable
        ``n -> tuple`` of :class:`Constant`/:class:`Cache` values.
    seed : callable
        ``(n, m) -> seed`` for seeded operators (input count, output count).
    tolerance : dict
        Optional ``{"ad": ..., "fd": ...}`` overrides of the default tolerances.
    """

    name: str
    operator: str
    f: object
    reference: object = "finite_difference"
    input: Callable = None
    contexts: Callable = None
    seed: Callable = None
    default_size: int = 8
    factory: bool = False
    tolerance: dict = field(default_factory=dict)
    note: str = ""

    @property
    def sized(self):
        return self.operator not in SCALAR_INPUT

    def function(self, n):
        return self.f(n) if self.factory else self.f

    def instance(self, size=None):
        n = self.default_size if size is None else int(size)
        if not self.sized:
            n = 1
        x = self.input(n) if self.input is not None else _default_input(n, self.sized)
        x = np.asarray(x, dtype=float)
        contexts = tuple(self.contexts(n)) if self.contexts is not None else ()
        f = self.function(n)
        seed = None
        if self.operator in SEEDED:
            y = evaluate(f, x, contexts)
            shape = np.shape(y) if self.operator == "pullback" else np.shape(x)
            seed = self.seed(n, int(np.size(y))) if self.seed is not None else _default_seed(shape)
        if self.reference == "finite_difference":
            expected = oracle(self.operator, f, x, contexts, seed)
        else:
            payloads = [c.value for c in contexts]
            expected = np.asarray(self.reference(x, seed, *payloads), dtype=float)
        return Case(self, f, x, contexts, seed, expected)


def _default_input(n, sized):
    rng = np.random.default_rng(1234 + n)
    x = rng.uniform(0.5, 1.5, n)
    return x if sized else np.float64(x[0])


def _default_seed(shape):
    rng = np.random.default_rng(99)
    return rng.uniform(-1.0, 1.0, shape)


SCENARIOS: dict = {}


def register(scenario):
    SCENARIOS[scenario.name] = scenario
    return scenario


def get(name):
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario '{name}'; known: {', '.join(sorted(SCENARIOS))}") from None


def select(names):
    """Scenarios for a list of names (``["all"]`` for every registered one)."""
    names = list(names)
    if not names:
        raise ConfigError("no scenarios selected")
    if names == ["all"]:
        return list(SCENARIOS.values())
    return [get(n) for n in names]


def load_module(path):
    """Import a Python file so the scenarios it registers become available.

    A module may also define a ``SCENARIOS`` list instead of calling
    :func:`register`.
    """
    spec = importlib.util.spec_from_file_location(f"adkit_scenarios_{abs(hash(path))}", path)
    if spec is None or spec.loader is None:
        raise ConfigError(f"cannot load scenario module '{path}'")
    mod = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(mod)
    except FileNotFoundError:
        raise ConfigError(f"scenario module '{path}' not found") from None
    for s in getattr(mod, "SCENARIOS", []) or []:
        register(s)
    return mod


# built-in functions


def sqnorm(x):
    """Squared Euclidean norm."""
    return anp.sum(x * x)


def stencil(x):
    """Second difference with zero boundary values: x[i-1] - 2 x[i] + x[i+1]."""
    y = -2.0 * x
    if len(x) > 1:
        y = y + anp.concatenate([x[1:], anp.zeros_like(x[:1])])
        y = y + anp.concatenate([anp.zeros_like(x[:1]), x[:-1]])
    return y


def stencil_matrix(n):
    return -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)


def quadform(x, A):
    return anp.dot(x, anp.dot(A, x))


def inplace_stencil(n):
    def f(y, x, c):
        # c is scratch: the squares feed the stencil
        c[...] = x * x
        y[...] = stencil(c)

    return DifferentiableFunction(f, inplace=True, output_shape=(n,), name="inplace_stencil")


def branchy(x):
    # python control flow on values: a tape records one branch per element
    s = 0.0
    for xi in x:
        if xi > 1.0:
            s = s + xi * xi
        else:
            s = s + 2.0 * xi - 1.0
    return s


def polymap(x):
    """f_i = x_i^2 + x_i x_{i+1} (cyclic)."""
    return x * x + x * anp.concatenate([x[1:], x[:1]])


def polymap_jacobian(x):
    n = len(x)
    J = np.diag(2 * x + np.roll(x, -1))
    for i in range(n):
        J[i, (i + 1) % n] += x[i]
    return J


def quartic(x):
    return anp.sum(x ** 4) + anp.sum(x[1:] * x[:-1])


def quartic_hessian(x):
    n = len(x)
    return np.diag(12 * x ** 2) + np.eye(n, k=1) + np.eye(n, k=-1)


def curve(t):
    return anp.stack([t ** 3, anp.sin(t)])


def wave(t):
    return t ** 3 + anp.sin(t)


def softplus_chain(x):
    return anp.sum(anp.log(1.0 + anp.exp(x[1:] * x[:-1])))


def _builtin():
    def matrix(n):
        rng = np.random.default_rng(7 + n)
        return (Constant(rng.standard_normal((n, n))),)

    items = [
        Scenario("sqnorm_gradient", "gradient", sqnorm,
                 reference=lambda x, seed: 2 * x, default_size=100,
                 note="squared norm, the basic gradient benchmark"),
        Scenario("stencil_jacobian", "jacobian", stencil,
                 reference=lambda x, seed: stencil_matrix(len(x)), default_size=32,
                 note="tridiagonal stencil; sparse backends use 3 colors"),
        Scenario("quadform_gradient", "gradient", quadform,
                 reference=lambda x, seed, A: (A + A.T) @ x, contexts=matrix, default_size=12,
                 note="quadratic form with the matrix passed as a Constant"),
        Scenario("inplace_stencil_jacobian", "jacobian", inplace_stencil, factory=True,
                 reference=lambda x, seed, c: stencil_matrix(len(x)) * (2 * x),
                 contexts=lambda n: (Cache(np.zeros(n)),), default_size=16,
                 note="in-place stencil of squares, scratch passed as a Cache"),
        Scenario("branchy_gradient", "gradient", branchy,
                 reference=lambda x, seed: np.where(x > 1.0, 2 * x, 2.0), default_size=10,
                 note="value-dependent branches: a prepared tape is only valid while "
                      "every element stays on the recorded side of 1.0"),
        Scenario("polymap_pushforward", "pushforward", polymap,
                 reference=lambda x, v: polymap_jacobian(x) @ v),
        Scenario("polymap_pullback", "pullback", polymap,
                 reference=lambda x, w: w @ polymap_jacobian(x)),
        Scenario("polymap_jacobian", "jacobian", polymap,
                 reference=lambda x, seed: polymap_jacobian(x)),
        Scenario("curve_derivative", "derivative", curve,
                 reference=lambda t, seed: np.array([3 * t ** 2, np.cos(t)])),
        Scenario("wave_second_derivative", "second_derivative", wave,
                 reference=lambda t, seed: 6 * t - np.sin(t)),
        Scenario("quartic_hvp", "hvp", quartic,
                 reference=lambda x, v: quartic_hessian(x) @ v),
        Scenario("quartic_hessian", "hessian", quartic,
                 reference=lambda x, seed: quartic_hessian(x)),
        Scenario("softplus_gradient", "gradient", softplus_chain, default_size=10,
                 tolerance={"ad": 1e-8},
                 note="no closed form supplied: checked against the finite-difference oracle"),
    ]
    for s in items:
        register(s)


_builtin()
