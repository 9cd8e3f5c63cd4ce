"""Sparse Jacobians: detect the pattern, color it, evaluate compressed.

Run: python demos/04_sparsity.py
"""

import numpy as np

import adkit
from adkit import AutoForward, AutoSparse
from adkit.harness.scenarios import stencil
from adkit.sparse import detect_jacobian_pattern, greedy_color

n = 10
x = np.random.default_rng(1).normal(size=n)

# index sets flow through the function; no values are looked at
pattern = detect_jacobian_pattern(stencil, x)
print(pattern)
print(pattern.to_dense().astype(int))

coloring = greedy_color(pattern, "column")
print("column colors:", coloring.colors, "->", coloring.ncolors, "seeds instead of", n)
print("seed matrix:\n", coloring.seed_matrix.astype(int))

# AutoSparse does all of the above inside prepare
backend = AutoSparse(AutoForward())
prep = adkit.prepare("jacobian", stencil, backend, x)
J = adkit.jacobian(stencil, prep, backend, x)
print(type(J).__name__, "nnz", J.nnz, "pushforwards", prep.stats["pushforward"])
print("matches dense:", np.array_equal(J.toarray(), adkit.jacobian(stencil, None, AutoForward(), x)))

# plain text export, the same format `adkit pattern` writes
print(pattern.to_text().splitlines()[:4], "...")
