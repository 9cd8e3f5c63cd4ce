import numpy as np
import pytest

import adkit
import adkit.numpy as anp
from adkit import AutoFiniteDiff, AutoForward
from adkit.finitediff import DEFAULT_STEP, StepRule, fd_jacobian, fd_pushforward
from oracles import pair, pair_jacobian, random_polymap


def fixed(h, scheme="central"):
    return StepRule(scheme=scheme, base_step=h, relative=False)


def test_default_rule():
    r = AutoFiniteDiff().rule
    assert r.scheme == "central" and r.relative
    assert DEFAULT_STEP == pytest.approx(6.0555e-6, rel=1e-4)


def test_square_central():
    assert abs(fd_pushforward(lambda x: x * x, 3.0, 1.0, fixed(1e-6)) - 6.0) <= 1e-9


def test_exp_central():
    assert abs(fd_pushforward(anp.exp, 0.0, 1.0, fixed(1e-5)) - 1.0) <= 1e-8


@pytest.mark.parametrize("h", [1e-1, 1e-3, 0.5])
def test_linear_forward_scheme_exact(h):
    # h a power of two keeps every step exactly representable
    h = 2.0 ** round(np.log2(h))
    A = np.array([[1.0, 2.0], [-3.0, 0.5]])
    x = np.array([0.25, -1.0])
    v = np.array([1.0, 0.0])
    t = fd_pushforward(lambda x: anp.dot(A, x), x, v, fixed(h, "forward"))
    np.testing.assert_array_equal(t, A[:, 0])


def test_identity_jacobian_exact():
    np.testing.assert_array_equal(fd_jacobian(lambda x: x, np.array([0.5, 1.0, 2.0])), np.eye(3))


def test_pair_jacobian():
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(fd_jacobian(pair, x), pair_jacobian(x), atol=1e-8)


def test_matches_forward_on_random_polymaps():
    rng = np.random.default_rng(0)
    for _ in range(5):
        f, _ = random_polymap(rng, 5, 4)
        x = rng.uniform(-1, 1, 5)
        ref = adkit.jacobian(f, None, AutoForward(), x)
        got = fd_jacobian(f, x)
        np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-6)


def test_second_order_accuracy():
    e1 = abs(fd_pushforward(anp.exp, 0.0, 1.0, fixed(1e-3)) - 1.0)
    e2 = abs(fd_pushforward(anp.exp, 0.0, 1.0, fixed(5e-4)) - 1.0)
    assert 4 * 0.8 <= e1 / e2 <= 4 * 1.2


def test_self_consistency_rows_and_columns():
    f, _ = random_polymap(np.random.default_rng(1), 4, 3)
    x = np.linspace(0.1, 0.4, 4)
    J = fd_jacobian(f, x)
    for j in range(4):
        assert np.array_equal(J[:, j], fd_pushforward(f, x, np.eye(4)[j]))
    b = AutoFiniteDiff()
    for i in range(3):
        row = adkit.pullback(f, None, b, x, np.eye(3)[i])
        assert np.array_equal(row, J[i])


def test_non_finite():
    with pytest.raises(adkit.NonFiniteResult):
        fd_pushforward(anp.log, 0.0, 1.0)
    with pytest.raises(adkit.NonFiniteResult):
        adkit.gradient(lambda x: anp.sum(anp.log(x)), None, AutoFiniteDiff(), np.array([1.0, 0.0]))


def test_bad_rules():
    with pytest.raises(adkit.ConfigError):
        StepRule(scheme="backward")
    with pytest.raises(adkit.ConfigError):
        StepRule(base_step=0.0)
    with pytest.raises(adkit.ConfigError):
        AutoFiniteDiff(base_step=-1.0)


def test_relative_step():
    r = StepRule()
    assert r.step(np.array([100.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(100 * DEFAULT_STEP)
    assert r.step(np.array([100.0, 1.0]), np.array([0.0, 1.0])) == pytest.approx(DEFAULT_STEP)
    # a scaled seed gets a proportionally smaller step
    assert r.step(np.zeros(2), np.array([0.0, 4.0])) == pytest.approx(DEFAULT_STEP / 4)


def test_inplace_functions():
    def f(y, x):
        y[...] = x * x

    fn = adkit.DifferentiableFunction(f, inplace=True, output_shape=(3,))
    J = adkit.jacobian(fn, None, AutoFiniteDiff(), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(J, np.diag([2.0, 4.0, 6.0]), atol=1e-8)


def test_second_order_needs_explicit_nesting():
    with pytest.raises(adkit.UnsupportedOperator, match="SecondOrder"):
        adkit.hessian(anp.sum, None, AutoFiniteDiff(), np.ones(2))
    so = adkit.SecondOrder(AutoFiniteDiff(), adkit.AutoTape())
    H = adkit.hessian(lambda x: anp.sum(x ** 3), None, so, np.array([1.0, 2.0]))
    np.testing.assert_allclose(H, np.diag([6.0, 12.0]), atol=1e-7)
