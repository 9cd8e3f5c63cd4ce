"""Gradient of the squared norm with every built-in backend.

Run: python demos/01_quickstart.py
"""

import numpy as np

import adkit
import adkit.numpy as anp
from adkit import AutoFiniteDiff, AutoForward, AutoTape


def f(x):
    # functions are written against adkit.numpy so every backend can trace them
    return anp.sum(x * x)


x = np.array([1.0, 2.0, 3.0])

for backend in [AutoForward(), AutoTape(), AutoFiniteDiff()]:
    g = adkit.gradient(f, None, backend, x)
    print(f"{backend.id:5s} gradient = {g}")

# preparation is the one-time setup: here the tape is recorded once
backend = AutoTape()
prep = adkit.prepare("gradient", f, backend, x)
print("plan:", prep.plan.describe())

# the four call variants share the preparation
out = np.empty(3)
adkit.gradient(f, prep, backend, 2 * x, out=out)
y, g = adkit.value_and_gradient(f, prep, backend, 2 * x)
print("at 2x: value", y, "gradient", g, "in-place copy", out)

# other operators use the same calling convention
J = adkit.jacobian(lambda x: x * anp.sin(x), None, AutoForward(), x)
print("jacobian of x sin x:\n", J)
d = adkit.derivative(lambda t: anp.stack([t ** 3, anp.sin(t)]), None, AutoForward(), 0.5)
print("derivative of a curve at 0.5:", d)
