import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

import adkit
import adkit.numpy as anp
from adkit import AutoFiniteDiff, AutoForward, AutoTape, Cache, Constant, MixedMode
from oracles import random_polymap

SEEDS = st.integers(0, 2 ** 31 - 1)
AD = [AutoForward(), AutoTape(), MixedMode(AutoForward(), AutoTape())]


def problem(seed):
    rng = np.random.default_rng(seed)
    n, m = (int(k) for k in rng.integers(1, 8, 2))
    f, jac = random_polymap(rng, n, m)
    return rng, f, jac, rng.uniform(-1, 1, n), n, m


@settings(max_examples=30, deadline=None)
@given(SEEDS, st.floats(-3, 3), st.floats(-3, 3))
def test_pushforward_is_linear(seed, a, b):
    rng, f, _, x, n, _ = problem(seed)
    u, v = rng.normal(size=n), rng.normal(size=n)
    for back in [AutoForward(), AutoTape()]:
        lhs = adkit.pushforward(f, None, back, x, a * u + b * v)
        rhs = a * adkit.pushforward(f, None, back, x, u) + b * adkit.pushforward(f, None, back, x, v)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(SEEDS)
def test_pushforward_pullback_duality(seed):
    rng, f, _, x, n, m = problem(seed)
    v, w = rng.normal(size=n), rng.normal(size=m)
    jv = adkit.pushforward(f, None, AutoForward(), x, v)
    jw = adkit.pullback(f, None, AutoTape(), x, w)
    assert abs(w @ jv - v @ jw) <= 1e-10 * (1 + abs(w @ jv))


@settings(max_examples=20, deadline=None)
@given(SEEDS)
def test_variants_agree_bitwise(seed):
    _, f, jac, x, n, m = problem(seed)
    for back in AD:
        prep = adkit.prepare("jacobian", f, back, x)
        J = adkit.jacobian(f, prep, back, x)
        out = np.empty((m, n))
        adkit.jacobian(f, prep, back, x, out=out)
        y, J2 = adkit.value_and_jacobian(f, prep, back, x)
        out2 = np.empty((m, n))
        y3, _ = adkit.value_and_jacobian(f, prep, back, x, out=out2)
        assert np.array_equal(J, out) and np.array_equal(J, J2) and np.array_equal(J, out2)
        assert np.array_equal(y, y3)
        np.testing.assert_allclose(J, jac(x), rtol=1e-10, atol=1e-10)


def scratchy(y, x, c):
    c[...] = anp.sin(x)
    y[...] = c * x


@settings(max_examples=20, deadline=None)
@given(SEEDS)
def test_cache_contents_are_irrelevant(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=4)
    fn = adkit.DifferentiableFunction(scratchy, inplace=True, output_shape=(4,))
    for back in [AutoTape(), AutoFiniteDiff()]:
        ref = adkit.jacobian(fn, None, back, x, Cache(np.zeros(4)))
        got = adkit.jacobian(fn, None, back, x, Cache(rng.normal(size=4) * 1e6))
        assert np.array_equal(ref, got)


@settings(max_examples=20, deadline=None)
@given(SEEDS)
def test_constant_equals_inlined(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    x = rng.normal(size=3)
    for back in [AutoForward(), AutoTape(), AutoFiniteDiff()]:
        inlined = adkit.gradient(lambda x: anp.dot(x, anp.dot(A, x)), None, back, x)
        passed = adkit.gradient(lambda x, A: anp.dot(x, anp.dot(A, x)), None, back, x, Constant(A))
        assert np.array_equal(inlined, passed)
