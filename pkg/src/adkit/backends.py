"""Backend descriptors: which AD implementation to use and with what settings.

Backends are immutable values.  They compare by value, so a preparation can
check it is being used with the backend it was built for.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import ClassVar

from adkit.errors import ConfigError
from adkit.finitediff import DEFAULT_STEP, FDPullback, FDPushforward, StepRule
from adkit.forward import ForwardPushforward
from adkit.tape import TapePullback

NATIVE_PUSHFORWARD = "native_pushforward"
NATIVE_PULLBACK = "native_pullback"
BATCHED = "supports_batched_seeds"
INPLACE = "supports_in_place_functions"

FORWARD = "forward"
REVERSE = "reverse"
FINITE_DIFFERENCE = "finite-difference"
COMPOSITE = "composite"


class Backend:
    id: ClassVar[str] = "?"
    mode: ClassVar[str] = "?"
    capabilities: ClassVar[frozenset] = frozenset()
    transpose_fallback = False

    @property
    def parameters(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def has(self, capability):
        return capability in self.capabilities

    def make_pushforward(self, f, x, contexts, ndirs, ws, stats, out_shape, fixed=None):
        raise NotImplementedError

    def make_pullback(self, f, x, contexts, nseeds, ws, stats, out_shape, fixed=None):
        raise NotImplementedError


@dataclass(frozen=True)
class AutoForward(Backend):
    """Dual-number forward mode.

    Parameters
    ----------
    chunk_size : int
        Tangent lanes per forward pass.
    transpose_fallback : bool
        Allow pullbacks by assembling the full Jacobian and transposing it.
        Off by default since it costs one pass per input.
    """

    chunk_size: int = 8
    transpose_fallback: bool = False
    id: ClassVar[str] = "dual"
    mode: ClassVar[str] = FORWARD
    capabilities: ClassVar[frozenset] = frozenset({NATIVE_PUSHFORWARD, BATCHED})

    def __post_init__(self):
        if int(self.chunk_size) < 1:
            raise ConfigError("chunk_size must be at least 1")

    def make_pushforward(self, f, x, contexts, ndirs, ws, stats, out_shape, fixed=None):
        return ForwardPushforward(f, x, contexts, ndirs, self.chunk_size, ws, stats, out_shape, fixed)


@dataclass(frozen=True)
class AutoTape(Backend):
    """Tape-recording reverse mode.

    Parameters
    ----------
    strict_branches : bool
        Re-check recorded comparisons on every replay and raise
        ``TraceEscape`` when a branch flips, instead of silently following the
        recorded branch.
    transpose_fallback : bool
        Allow pushforwards through the transposed Jacobian.
    """

    strict_branches: bool = False
    transpose_fallback: bool = True
    id: ClassVar[str] = "tape"
    mode: ClassVar[str] = REVERSE
    capabilities: ClassVar[frozenset] = frozenset({NATIVE_PULLBACK, BATCHED, INPLACE})

    def make_pullback(self, f, x, contexts, nseeds, ws, stats, out_shape, fixed=None):
        return TapePullback(f, x, contexts, nseeds, ws, stats, out_shape, self.strict_branches, fixed)


@dataclass(frozen=True)
class AutoFiniteDiff(Backend):
    """Finite differences with a :class:`~adkit.finitediff.StepRule`."""

    scheme: str = "central"
    base_step: float = DEFAULT_STEP
    relative: bool = True
    id: ClassVar[str] = "fd"
    mode: ClassVar[str] = FINITE_DIFFERENCE
    capabilities: ClassVar[frozenset] = frozenset({NATIVE_PUSHFORWARD, NATIVE_PULLBACK, BATCHED, INPLACE})

    def __post_init__(self):
        StepRule(self.scheme, self.base_step, self.relative)

    @property
    def rule(self):
        return StepRule(self.scheme, self.base_step, self.relative)

    def make_pushforward(self, f, x, contexts, ndirs, ws, stats, out_shape, fixed=None):
        return FDPushforward(f, x, contexts, ndirs, self.rule, ws, stats, out_shape, fixed)

    def make_pullback(self, f, x, contexts, nseeds, ws, stats, out_shape, fixed=None):
        return FDPullback(f, x, contexts, nseeds, self.rule, ws, stats, out_shape, fixed)


@dataclass(frozen=True)
class SecondOrder(Backend):
    """Second-order operators from two backends: ``outer`` differentiates what ``inner`` computes.

    The Hessian-vector product is the pushforward (``outer``) of the gradient
    map (``inner``).  First-order operators use ``inner``.
    """

    outer: Backend
    inner: Backend
    mode: ClassVar[str] = COMPOSITE

    @property
    def id(self):
        return f"{self.outer.id}-over-{self.inner.id}"

    @property
    def capabilities(self):
        return self.inner.capabilities


@dataclass(frozen=True)
class MixedMode(Backend):
    """Forward and reverse backends combined for bidirectional sparse Jacobians."""

    forward: Backend
    reverse: Backend
    mode: ClassVar[str] = COMPOSITE

    def __post_init__(self):
        if not self.forward.has(NATIVE_PUSHFORWARD):
            raise ConfigError(f"MixedMode forward half '{self.forward.id}' has no native pushforward")
        if not self.reverse.has(NATIVE_PULLBACK):
            raise ConfigError(f"MixedMode reverse half '{self.reverse.id}' has no native pullback")

    @property
    def id(self):
        return f"mixed-{self.forward.id}-{self.reverse.id}"

    @property
    def capabilities(self):
        return frozenset({NATIVE_PUSHFORWARD, NATIVE_PULLBACK, BATCHED})

    def make_pushforward(self, *args, **kwargs):
        return self.forward.make_pushforward(*args, **kwargs)

    def make_pullback(self, *args, **kwargs):
        return self.reverse.make_pullback(*args, **kwargs)


@dataclass(frozen=True)
class AutoSparse(Backend):
    """Sparse Jacobians and Hessians on top of a dense backend.

    Pattern detection and coloring happen at preparation.  Operators other
    than ``jacobian`` and ``hessian`` go straight to ``dense``.
    """

    dense: Backend
    mode: ClassVar[str] = COMPOSITE

    @property
    def id(self):
        return f"sparse-{self.dense.id}"

    @property
    def capabilities(self):
        return self.dense.capabilities


BACKENDS = {
    "dual": AutoForward(),
    "tape": AutoTape(),
    "fd": AutoFiniteDiff(),
    "dual-over-tape": SecondOrder(AutoForward(), AutoTape()),
    "dual-over-dual": SecondOrder(AutoForward(), AutoForward()),
    "fd-over-tape": SecondOrder(AutoFiniteDiff(), AutoTape()),
    "sparse-dual": AutoSparse(AutoForward()),
    "sparse-tape": AutoSparse(AutoTape()),
    "sparse-dual-over-tape": AutoSparse(SecondOrder(AutoForward(), AutoTape())),
    "mixed": MixedMode(AutoForward(), AutoTape()),
    "sparse-mixed": AutoSparse(MixedMode(AutoForward(), AutoTape())),
}


def backend_from_id(name):
    """Look up a built-in backend by id (``dual``, ``tape``, ``fd``, ``dual-over-tape``, ...)."""
    b = BACKENDS.get(name)
    if b is None:
        # the full id of a built-in works too, e.g. "sparse-mixed-dual-tape"
        b = next((v for v in BACKENDS.values() if v.id == name), None)
    if b is None:
        raise ConfigError(f"unknown backend '{name}'; known: {', '.join(BACKENDS)}")
    return b
