"""Typed diagnostics raised by adkit.

Every error carries the operator id, the backend id and, where relevant, the
shapes involved, so a failure in a nested plan (e.g. the inner gradient of a
``SecondOrder`` backend) can be traced back to the step that raised it.
"""

from __future__ import annotations


class ADError(Exception):
    """Base class for all adkit errors."""

    def __init__(self, message, *, operator=None, backend=None, shapes=None):
        self.message = message
        self.operator = operator
        self.backend = backend
        self.shapes = shapes
        super().__init__(self._render())

    def _render(self):
        tags = []
        if self.operator is not None:
            tags.append(f"operator={self.operator}")
        if self.backend is not None:
            tags.append(f"backend={self.backend}")
        if self.shapes:
            tags.append(", ".join(f"{k}={v}" for k, v in self.shapes.items()))
        if not tags:
            return self.message
        return f"{self.message} [{'; '.join(tags)}]"


class UnsupportedOperator(ADError):
    """The backend and its fallback chain cannot realize the operator."""


class UnsupportedPrimitive(ADError):
    """A function applied an operation with no registered rule for the active type."""

    def __init__(self, primitive, *, mode=None, **kwargs):
        self.primitive = primitive
        self.mode = mode
        where = f" in {mode} mode" if mode else ""
        super().__init__(f"no rule registered for primitive '{primitive}'{where}", **kwargs)


class ShapeMismatch(ADError):
    """An input, seed or output has the wrong shape for the requested operator."""


class PreparationMismatch(ADError):
    """A preparation was used with an operator, backend or input it was not built for."""


class PreparationInUse(ADError):
    """A preparation was entered while another call was still using it."""


class NonFiniteResult(ADError):
    """A function evaluation produced NaN or Inf where a finite value is required."""


class TraceEscape(ADError):
    """A traced value left the tracer (Python ``bool``/``float`` conversion, or a
    branch that diverged from the recorded one)."""


class ConfigError(ADError):
    """Invalid harness configuration (unknown scenario or backend, empty lists)."""
