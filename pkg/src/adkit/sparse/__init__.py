"""Sparse Jacobians and Hessians: pattern detection, coloring, compressed evaluation."""

from adkit.backends import AutoSparse
from adkit.sparse.coloring import Coloring, greedy_color
from adkit.sparse.pattern import SparsityPattern
from adkit.sparse.tracers import (GradientTracer, HessianTracer, detect_hessian_pattern,
                                  detect_jacobian_pattern)

__all__ = [
    "AutoSparse", "Coloring", "SparsityPattern", "GradientTracer", "HessianTracer",
    "detect_jacobian_pattern", "detect_hessian_pattern", "greedy_color",
    "sparse_jacobian", "sparse_hessian",
]


def sparse_jacobian(f, prep, backend, x, *contexts, out=None):
    """Jacobian through a sparse plan; ``backend`` is wrapped in AutoSparse if needed."""
    from adkit.api import jacobian

    if not isinstance(backend, AutoSparse):
        backend = AutoSparse(backend)
    return jacobian(f, prep, backend, x, *contexts, out=out)


def sparse_hessian(f, prep, backend, x, *contexts, out=None):
    """Hessian through a sparse plan (one hvp per star-coloring color)."""
    from adkit.api import hessian

    if not isinstance(backend, AutoSparse):
        backend = AutoSparse(backend)
    return hessian(f, prep, backend, x, *contexts, out=out)
