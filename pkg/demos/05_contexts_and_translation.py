"""Extra arguments that are not differentiated, and borrowing another backend.

Run: python demos/05_contexts_and_translation.py
"""

import numpy as np

import adkit
import adkit.numpy as anp
from adkit import AutoForward, AutoTape, Cache, Constant, DifferentiateWith

A = np.array([[2.0, 1.0], [1.0, 3.0]])
x = np.array([0.5, -1.0])


def quad(x, A):
    return anp.dot(x, anp.dot(A, x))


# a Constant is a fixed parameter; the gradient is (A + A^T) x
print("gradient with Constant A:", adkit.gradient(quad, None, AutoTape(), x, Constant(A)))


def scaled(y, x, c):
    # c is scratch space; what it held before the call does not matter
    c[...] = anp.exp(x)
    y[...] = c * x


fn = adkit.DifferentiableFunction(scaled, inplace=True, output_shape=(2,))
J1 = adkit.jacobian(fn, None, AutoTape(), x, Cache(np.zeros(2)))
J2 = adkit.jacobian(fn, None, AutoTape(), x, Cache(np.full(2, 1e9)))
print("cache contents irrelevant:", np.array_equal(J1, J2))


def smooth_step(x):
    # erf only has a reverse-mode rule
    return anp.sum(anp.erf(x))


try:
    adkit.gradient(smooth_step, None, AutoForward(), x)
except adkit.UnsupportedPrimitive as e:
    print("dual backend:", e)

wrapped = DifferentiateWith(smooth_step, AutoTape())
print("wrapped, differentiated by dual:", adkit.gradient(wrapped, None, AutoForward(), x))
