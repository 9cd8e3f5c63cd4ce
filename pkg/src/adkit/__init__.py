"""Backend-agnostic automatic differentiation.

Write a function against :mod:`adkit.numpy`, pick a backend, and call one of
the eight operators::

    import numpy as np
    import adkit
    import adkit.numpy as anp

    f = lambda x: anp.sum(x * x)
    backend = adkit.AutoTape()
    prep = adkit.prepare("gradient", f, backend, np.zeros(3))
    adkit.gradient(f, prep, backend, np.array([1.0, 2.0, 3.0]))   # [2, 4, 6]
"""

from adkit import numpy  # noqa: F401  (installs the dispatch namespace)
from adkit.api import (OPERATORS, Preparation, derivative, gradient, hessian, hvp, jacobian,
                       prepare, pullback, pushforward, second_derivative, value_and_derivative,
                       value_and_gradient, value_and_hessian, value_and_hvp, value_and_jacobian,
                       value_and_pullback, value_and_pushforward, value_and_second_derivative)
from adkit.backends import (BACKENDS, AutoFiniteDiff, AutoForward, AutoSparse, AutoTape, Backend,
                            MixedMode, SecondOrder, backend_from_id)
from adkit.errors import (ADError, ConfigError, NonFiniteResult, PreparationInUse,
                          PreparationMismatch, ShapeMismatch, TraceEscape, UnsupportedOperator,
                          UnsupportedPrimitive)
from adkit.fallbacks import DifferentiateWith, OperatorPlan, resolve
from adkit.function import Cache, Constant, DifferentiableFunction

__version__ = "0.1.0"

__all__ = [
    "OPERATORS", "Preparation", "prepare",
    "pushforward", "pullback", "derivative", "gradient", "jacobian", "second_derivative", "hvp",
    "hessian", "value_and_pushforward", "value_and_pullback", "value_and_derivative",
    "value_and_gradient", "value_and_jacobian", "value_and_second_derivative", "value_and_hvp",
    "value_and_hessian",
    "Backend", "AutoForward", "AutoTape", "AutoFiniteDiff", "SecondOrder", "MixedMode",
    "AutoSparse", "BACKENDS", "backend_from_id",
    "DifferentiableFunction", "Constant", "Cache", "DifferentiateWith", "OperatorPlan", "resolve",
    "ADError", "UnsupportedOperator", "UnsupportedPrimitive", "ShapeMismatch",
    "PreparationMismatch", "PreparationInUse", "NonFiniteResult", "TraceEscape", "ConfigError",
]
