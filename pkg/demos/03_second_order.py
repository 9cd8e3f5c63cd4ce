"""Hessians three ways, from dense forward to sparse forward-over-reverse.

Run: python demos/03_second_order.py
"""

import time

import numpy as np

import adkit
import adkit.numpy as anp
from adkit import AutoForward, AutoSparse, AutoTape, SecondOrder, resolve


def f(x):
    # banded: each x_i only meets its neighbours
    return anp.sum(x ** 4) + anp.sum(x[1:] * x[:-1])


n = 200
x = np.random.default_rng(0).normal(size=n)

ladder = [
    ("dense forward-over-forward", SecondOrder(AutoForward(), AutoForward())),
    ("dense forward-over-reverse", SecondOrder(AutoForward(), AutoTape())),
    ("sparse forward-over-reverse", AutoSparse(SecondOrder(AutoForward(), AutoTape()))),
]

ref = None
for name, backend in ladder:
    prep = adkit.prepare("hessian", f, backend, x)
    t = time.perf_counter()
    H = adkit.hessian(f, prep, backend, x)
    dt = time.perf_counter() - t
    H = H.toarray() if hasattr(H, "toarray") else H
    ref = H if ref is None else ref
    print(f"{name:28s} {dt * 1e3:8.1f} ms  hvps={prep.stats['hvp']:4d}  max diff={np.abs(H - ref).max():.1g}")
    print("   ", resolve("hessian", backend).describe())

# a single Hessian-vector product never forms H
v = np.ones(n)
hv = adkit.hvp(f, None, SecondOrder(AutoForward(), AutoTape()), x, v)
print("hvp matches H @ v:", np.allclose(hv, ref @ v))
