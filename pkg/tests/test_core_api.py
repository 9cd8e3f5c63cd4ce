import threading

import numpy as np
import pytest

import adkit
import adkit.numpy as anp
from adkit import (AutoFiniteDiff, AutoForward, AutoTape, Cache, Constant, DifferentiableFunction,
                   SecondOrder)
from oracles import pair, pair_jacobian, random_polymap, random_quartic, sqnorm, x1sq_x2

AD = [AutoForward(), AutoTape()]
ALL = AD + [AutoFiniteDiff()]
SO = [SecondOrder(AutoForward(), AutoTape()), SecondOrder(AutoForward(), AutoForward()), AutoTape()]


def ids(bs):
    return [b.id for b in bs]


# prepare


def test_prepare_forward_gradient_seed_bank():
    prep = adkit.prepare("gradient", sqnorm, AutoForward(), np.zeros(10))
    ex = prep.executor.pf
    assert ex.ndirs == 10
    assert [stop - start for start, stop in ex.bank.chunks] == [8, 2]


def test_prepare_tape_gradient_node_counts():
    prep = adkit.prepare("gradient", sqnorm, AutoTape(), np.zeros(10))
    counts = prep.executor.pb.tape.counts()
    assert counts["mul"] == 10 and counts["add"] == 9
    assert sum(counts.values()) == 19


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_prepare_jacobian_bad_input_raises(backend):
    f = DifferentiableFunction(pair, input_shape=(3,))
    with pytest.raises(adkit.ShapeMismatch):
        adkit.prepare("jacobian", f, backend, np.zeros(4))


def test_prepare_unknown_operator():
    with pytest.raises(adkit.UnsupportedOperator):
        adkit.prepare("laplacian", sqnorm, AutoTape(), np.zeros(3))


def test_pullback_on_forward_only_backend():
    with pytest.raises(adkit.UnsupportedOperator, match="transpose"):
        adkit.prepare("pullback", pair, AutoForward(), np.zeros(3))
    # opting in builds it from the Jacobian
    b = AutoForward(transpose_fallback=True)
    w = adkit.pullback(pair, None, b, np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.0]))
    assert np.array_equal(w, [2.0, 1.0, 0.0])


# operator examples


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_pushforward_examples(backend):
    sq = lambda x: x * x
    assert adkit.pushforward(sq, None, backend, np.array([3.0]), np.array([1.0])) == pytest.approx([6.0], abs=1e-9)
    t = adkit.pushforward(pair, None, backend, np.array([1.0, 2.0, 3.0]), np.array([1.0, 0, 0]))
    np.testing.assert_allclose(t, [2.0, 0.0], atol=1e-9)
    A = np.random.default_rng(0).normal(size=(4, 4))
    lin = lambda x: anp.dot(A, x)
    t = adkit.pushforward(lin, None, backend, np.ones(4), np.eye(4)[1])
    np.testing.assert_allclose(t, A[:, 1], atol=1e-8)


@pytest.mark.parametrize("backend", [AutoTape(), AutoFiniteDiff()], ids=["tape", "fd"])
def test_pullback_examples(backend):
    sq = lambda x: x * x
    np.testing.assert_allclose(adkit.pullback(sq, None, backend, np.array([3.0]), np.array([1.0])), [6.0], atol=1e-9)
    w = adkit.pullback(pair, None, backend, np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(w, [2.0, 1.0, 0.0], atol=1e-9)
    f, jac = random_polymap(np.random.default_rng(3), 5, 3)
    x = np.linspace(0.2, 1.0, 5)
    np.testing.assert_allclose(adkit.pullback(f, None, backend, x, np.eye(3)[0]), jac(x)[0], atol=1e-6)


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_derivative_examples(backend):
    assert adkit.derivative(anp.sin, None, backend, 0.0) == pytest.approx(1.0, abs=1e-9)
    d = adkit.derivative(lambda x: anp.stack([x, x * x]), None, backend, 2.0)
    np.testing.assert_allclose(d, [1.0, 4.0], atol=1e-8)
    d = adkit.derivative(lambda x: anp.exp(3 * x), None, backend, 0.5)
    assert d == pytest.approx(3 * np.exp(1.5), rel=1e-8)


def test_derivative_needs_scalar_input():
    with pytest.raises(adkit.ShapeMismatch):
        adkit.derivative(anp.sin, None, AutoForward(), np.zeros(2))


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_gradient_examples(backend):
    g = adkit.gradient(sqnorm, None, backend, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(g, [2, 4, 6], atol=1e-8)
    g = adkit.gradient(anp.sum, None, backend, np.random.default_rng(1).normal(size=4))
    np.testing.assert_allclose(g, np.ones(4), atol=1e-8)
    rng = np.random.default_rng(2)
    A = rng.normal(size=(6, 6))
    A = A + A.T
    x = rng.normal(size=6)
    g = adkit.gradient(lambda x: anp.dot(x, anp.dot(A, x)), None, backend, x)
    np.testing.assert_allclose(g, (A + A.T) @ x, atol=1e-7)


def test_gradient_needs_scalar_output():
    with pytest.raises(adkit.ShapeMismatch):
        adkit.gradient(pair, None, AutoTape(), np.ones(3))


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_jacobian_examples(backend):
    np.testing.assert_allclose(adkit.jacobian(lambda x: x, None, backend, np.ones(3)), np.eye(3), atol=1e-9)
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(adkit.jacobian(pair, None, backend, x), pair_jacobian(x), atol=1e-8)
    f, jac = random_polymap(np.random.default_rng(4), 6, 4)
    x = np.linspace(-0.5, 0.7, 6)
    np.testing.assert_allclose(adkit.jacobian(f, None, backend, x), jac(x), atol=1e-6)


@pytest.mark.parametrize("backend", SO, ids=ids(SO))
def test_second_derivative_examples(backend):
    assert adkit.second_derivative(lambda x: x ** 3, None, backend, 2.0) == pytest.approx(12.0, abs=1e-12)
    assert adkit.second_derivative(anp.sin, None, backend, 0.0) == pytest.approx(0.0, abs=1e-12)
    v = adkit.second_derivative(lambda x: anp.exp(2 * x), None, backend, 0.3)
    assert v == pytest.approx(4 * np.exp(0.6), rel=1e-12)


@pytest.mark.parametrize("backend", SO, ids=ids(SO))
def test_hvp_examples(backend):
    v = np.eye(5)[2]
    np.testing.assert_array_equal(adkit.hvp(sqnorm, None, backend, np.arange(5.0), v), 2 * v)
    np.testing.assert_array_equal(adkit.hvp(x1sq_x2, None, backend, np.ones(2), np.array([1.0, 0.0])), [2.0, 2.0])
    rng = np.random.default_rng(5)
    f, grad, _ = random_quartic(rng, 6)
    x, v = rng.normal(size=6), rng.normal(size=6)
    eps = 1e-5
    ref = (grad(x + eps * v) - grad(x - eps * v)) / (2 * eps)
    np.testing.assert_allclose(adkit.hvp(f, None, backend, x, v), ref, atol=1e-5)


@pytest.mark.parametrize("backend", SO, ids=ids(SO))
def test_hessian_examples(backend):
    np.testing.assert_array_equal(adkit.hessian(sqnorm, None, backend, np.ones(4)), 2 * np.eye(4))
    np.testing.assert_array_equal(adkit.hessian(x1sq_x2, None, backend, np.ones(2)), [[2, 2], [2, 0]])
    rng = np.random.default_rng(6)
    f, _, hess = random_quartic(rng, 5)
    x = rng.normal(size=5)
    H = adkit.hessian(f, None, backend, x)
    np.testing.assert_allclose(H, hess(x), atol=1e-4)
    assert np.array_equal(H, H.T)


def test_hessian_needs_scalar_output():
    with pytest.raises(adkit.ShapeMismatch):
        adkit.hessian(pair, None, SO[0], np.ones(3))


# variants and preparation


OPS = [
    ("pushforward", pair, np.array([1.0, 2.0, 3.0]), np.array([0.5, -1.0, 2.0])),
    ("pullback", pair, np.array([1.0, 2.0, 3.0]), np.array([0.5, -1.0])),
    ("derivative", lambda t: anp.stack([anp.sin(t), t ** 2]), np.float64(0.7), None),
    ("gradient", sqnorm, np.array([1.0, -2.0, 0.5]), None),
    ("jacobian", pair, np.array([1.0, 2.0, 3.0]), None),
    ("second_derivative", lambda t: t ** 4, np.float64(1.5), None),
    ("hvp", x1sq_x2, np.array([1.5, -0.5]), np.array([1.0, 2.0])),
    ("hessian", x1sq_x2, np.array([1.5, -0.5]), None),
]
VARIANT_BACKENDS = [AutoTape(), SecondOrder(AutoForward(), AutoTape()), AutoForward(transpose_fallback=True)]


@pytest.mark.parametrize("backend", VARIANT_BACKENDS, ids=ids(VARIANT_BACKENDS))
@pytest.mark.parametrize("op,f,x,seed", OPS, ids=[o[0] for o in OPS])
def test_four_variants_agree_bitwise(op, f, x, seed, backend):
    args = (x,) if seed is None else (x, seed)
    prep = adkit.prepare(op, f, backend, x, seeds=seed)
    plain = getattr(adkit, op)(f, prep, backend, *args)
    y, r2 = getattr(adkit, f"value_and_{op}")(f, prep, backend, *args)
    if isinstance(plain, float):
        assert plain == r2
        return
    buf = np.full_like(plain, np.nan)
    r3 = getattr(adkit, op)(f, prep, backend, *args, out=buf)
    buf2 = np.full_like(plain, np.nan)
    y4, r4 = getattr(adkit, f"value_and_{op}")(f, prep, backend, *args, out=buf2)
    assert r3 is buf and r4 is buf2
    for r in (r2, r3, r4):
        assert np.array_equal(r, plain)
    np.testing.assert_array_equal(y, y4)
    np.testing.assert_allclose(y, np.asarray(f(x)), rtol=0, atol=0)


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_reused_preparation_matches_fresh_bitwise(backend):
    f, _ = random_polymap(np.random.default_rng(8), 5, 4)
    rng = np.random.default_rng(9)
    prep = adkit.prepare("jacobian", f, backend, np.zeros(5))
    for _ in range(5):
        x = rng.normal(size=5)
        reused = adkit.jacobian(f, prep, backend, x)
        fresh = adkit.jacobian(f, None, backend, x)
        assert np.array_equal(reused, fresh)


def test_seed_batches_list_and_single():
    x = np.array([1.0, 2.0, 3.0])
    seeds = [np.eye(3)[0], np.eye(3)[1], np.eye(3)[2]]
    out = adkit.pushforward(pair, None, AutoForward(), x, seeds)
    assert isinstance(out, list) and len(out) == 3
    np.testing.assert_array_equal(np.array(out).T, pair_jacobian(x))
    single = adkit.pushforward(pair, None, AutoForward(), x, seeds[1])
    assert isinstance(single, np.ndarray)


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_preparation_mismatch(backend):
    prep = adkit.prepare("gradient", sqnorm, backend, np.zeros(3))
    with pytest.raises(adkit.PreparationMismatch):
        adkit.gradient(sqnorm, prep, backend, np.zeros(4))
    with pytest.raises(adkit.PreparationMismatch):
        adkit.jacobian(sqnorm, prep, backend, np.zeros(3))
    with pytest.raises(adkit.PreparationMismatch):
        adkit.gradient(lambda x: anp.sum(x), prep, backend, np.zeros(3))
    other = AutoTape(strict_branches=True) if backend.id != "tape" else AutoForward()
    with pytest.raises(adkit.PreparationMismatch):
        adkit.gradient(sqnorm, prep, other, np.zeros(3))


def test_seed_count_mismatch():
    prep = adkit.prepare("pushforward", pair, AutoForward(), np.zeros(3), seeds=[np.ones(3)] * 2)
    with pytest.raises(adkit.PreparationMismatch):
        adkit.pushforward(pair, prep, AutoForward(), np.zeros(3), [np.ones(3)])


def test_preparation_is_exclusive():
    # a call that re-enters its own preparation sees it busy
    state = {"prep": None, "seen": []}

    def f(x):
        if state["prep"] is not None and not state["seen"]:
            try:
                adkit.gradient(f, state["prep"], AutoForward(), np.ones(3))
            except adkit.PreparationInUse as e:
                state["seen"].append(e)
        return anp.sum(x * x)

    state["prep"] = adkit.prepare("gradient", f, AutoForward(), np.zeros(3))
    g = adkit.gradient(f, state["prep"], AutoForward(), np.ones(3))
    assert state["seen"] and np.array_equal(g, [2.0, 2.0, 2.0])
    # released afterwards, also from another thread
    out = []
    t = threading.Thread(target=lambda: out.append(adkit.gradient(f, state["prep"], AutoForward(), np.ones(3))))
    t.start()
    t.join()
    assert np.array_equal(out[0], g)


def test_error_carries_ids_and_shapes():
    prep = adkit.prepare("gradient", sqnorm, AutoTape(), np.zeros(3))
    with pytest.raises(adkit.PreparationMismatch) as info:
        adkit.gradient(sqnorm, prep, AutoTape(), np.zeros(4))
    e = info.value
    assert e.operator == "gradient" and e.backend == "tape"
    assert e.shapes["input"] == (4,)


# contexts


@pytest.mark.parametrize("backend", ALL, ids=ids(ALL))
def test_constant_is_never_written(backend):
    A = np.random.default_rng(10).normal(size=(4, 4))
    before = A.copy()
    g = adkit.gradient(lambda x, A: anp.dot(x, anp.dot(A, x)), None, backend, np.ones(4), Constant(A))
    np.testing.assert_allclose(g, (A + A.T) @ np.ones(4), atol=1e-7)
    assert np.array_equal(A, before)


def test_constant_writes_are_refused():
    def bad(x, c):
        c[0] = 1.0
        return anp.sum(x)

    with pytest.raises(ValueError):
        adkit.gradient(bad, None, AutoTape(), np.ones(2), Constant(np.zeros(2)))


@pytest.mark.parametrize("backend", [AutoTape(), AutoFiniteDiff()], ids=["tape", "fd"])
def test_cache_contents_do_not_matter(backend):
    def f(y, x, c):
        c[...] = anp.sin(x)
        y[...] = c * x

    fn = DifferentiableFunction(f, inplace=True, output_shape=(4,))
    x = np.linspace(0.1, 0.9, 4)
    cache = Cache(np.zeros(4))
    prep = adkit.prepare("jacobian", fn, backend, x, cache)
    a = adkit.jacobian(fn, prep, backend, x, cache)
    cache.value[...] = np.random.default_rng(0).normal(size=4)
    b = adkit.jacobian(fn, prep, backend, x, cache)
    assert np.array_equal(a, b)
    np.testing.assert_allclose(a, np.diag(np.cos(x) * x + np.sin(x)), atol=1e-6)


def test_out_of_place_cache_forward():
    def f(x, c):
        c[...] = x * x
        return anp.sum(c)

    x = np.array([1.0, 2.0])
    g = adkit.gradient(f, None, AutoForward(), x, Cache(np.full(2, 7.0)))
    np.testing.assert_array_equal(g, 2 * x)


def test_inplace_on_dual_is_unsupported():
    fn = DifferentiableFunction(lambda y, x: None, inplace=True, output_shape=(2,))
    with pytest.raises(adkit.UnsupportedOperator):
        adkit.prepare("jacobian", fn, AutoForward(), np.ones(2))


def test_backend_parameters_and_capabilities():
    assert AutoForward(chunk_size=4).parameters == {"chunk_size": 4, "transpose_fallback": False}
    assert AutoTape().has("native_pullback") and not AutoTape().has("native_pushforward")
    fd = AutoFiniteDiff()
    assert fd.has("native_pushforward") and fd.has("native_pullback")
    assert AutoForward().mode == "forward" and AutoTape().mode == "reverse"
    assert AutoForward() == AutoForward() and AutoForward(chunk_size=4) != AutoForward()
    with pytest.raises(adkit.ConfigError):
        adkit.backend_from_id("nope")
