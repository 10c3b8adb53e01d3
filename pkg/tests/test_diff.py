import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonholonomic import diff
from nonholonomic.diff import DUAL, FINITE_DIFFERENCE, Dual, sqrt
from nonholonomic.errors import SingularityError

from conftest import state

finite = st.floats(-3, 3, allow_nan=False)


def perp_alpha(q, v, t):
    return -v[0] * v[2] / v[1]


def pendulum_alpha(q, v, t):
    return v[2] / q[3] * (q[1] - q[2] + q[0] * v[0] / v[1])


def test_grad_v_hand_values():
    s = state([0, 0, 0, 0], [1, 1, 1])
    np.testing.assert_allclose(diff.grad_v(perp_alpha, s), [-1, 1, -1], atol=1e-15)


def test_grad_v_radical_branch():
    s = state([0, 0, 0], [1, 0])
    f = lambda q, v, t: sqrt(2.0 - v[0] ** 2 - v[1] ** 2)  # noqa: E731
    np.testing.assert_allclose(diff.grad_v(f, s), [-1, 0], atol=1e-15)


def test_mixed_second_hand_value():
    s = state([0.7], [1.3])
    f = lambda q, v, t: q[0] * v[0] ** 2  # noqa: E731
    assert diff.second_mixed(f, s).vq[0, 0] == pytest.approx(2 * 1.3, abs=1e-15)


def test_time_independent_vt_block_is_zero():
    s = state([1, 2, 1, 1], [1, 1, 1], 0.3)
    assert np.all(diff.second_mixed(pendulum_alpha, s).vt == 0.0)


def test_pendulum_velocity_hessian_matches_fd():
    s = state([1, 2, 1, 1], [1, 1, 1])
    exact = diff.second_mixed(pendulum_alpha, s, DUAL).vv
    approx = diff.second_mixed(pendulum_alpha, s, FINITE_DIFFERENCE).vv
    assert np.max(np.abs(exact - approx)) <= 1e-6
    assert np.array_equal(exact, exact.T)


def test_grad_q_and_partial_t():
    s = state([1.0, 2.0], [0.5], 0.25)
    f = lambda q, v, t: q[0] * q[1] * math.e + diff.sin(3 * t) * v[0]  # noqa: E731
    np.testing.assert_allclose(diff.grad_q(f, s), [2 * math.e, math.e])
    assert diff.partial_t(f, s) == pytest.approx(3 * math.cos(0.75) * 0.5)


def test_total_derivative_coordinate_and_dependent():
    alpha = lambda q, v, t: [v[0] * v[1]]  # noqa: E731
    s = state([0.0, 0.0, 0.0], [3.0, 2.0])
    a = np.array([0.4, -1.0])
    assert diff.total_derivative(lambda q, v, t: q[0], s, a, alpha) == pytest.approx(3.0)
    assert diff.total_derivative(lambda q, v, t: q[2], s, a, alpha) == pytest.approx(6.0)
    # d/dt (v0 v1) = a0 v1 + v0 a1
    assert diff.total_derivative(lambda q, v, t: v[0] * v[1], s, a, alpha) == pytest.approx(0.4 * 2 - 3.0)


def test_non_finite_raises_with_index():
    s = state([0, 0, 0, 0], [1, 0, 1])
    with pytest.raises(SingularityError) as info, np.errstate(all="ignore"):
        diff.grad_v(perp_alpha, s)
    assert info.value.index is not None


def test_negative_base_fractional_power_is_nan_not_complex():
    with pytest.raises(SingularityError):
        diff.jet_partials(lambda x: x[0] ** 0.5, [np.array([-1.0])], ["x"], 1)


def test_nested_tags_do_not_mix():
    # d/dx [x * d/dy (x y)] = d/dx [x * x] = 2x
    def inner(x):
        _, der = diff.directional(lambda y: x * y, [1.0], [1.0])
        return x * der

    _, der = diff.directional(inner, [1.5], [1.0])
    assert der == pytest.approx(3.0)


def test_jet_second_derivatives_elementary():
    p = diff.jet_partials(lambda x: diff.exp(x[0]) * diff.cos(x[1]) + diff.atan(x[0] * x[1]) + diff.log(x[0]),
                          [np.array([0.7, 0.4])], ["x"], 2)
    fd = diff.fd_partials(lambda x: diff.exp(x[0]) * diff.cos(x[1]) + diff.atan(x[0] * x[1]) + diff.log(x[0]),
                          [np.array([0.7, 0.4])], ["x"], 2)
    np.testing.assert_allclose(p.grad, fd.grad, atol=1e-8)
    np.testing.assert_allclose(p.hess, fd.hess, atol=1e-5)
    assert np.array_equal(p.hess[0], p.hess[0].T)


@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
def test_backend_agreement_random_polynomial(coef, x):
    f = lambda z: coef[0] * z[0] ** 3 + coef[1] * z[0] * z[1] * z[2] + coef[2] * z[2] ** 2 * z[1]  # noqa: E731
    exact = diff.jet_partials(f, [np.array(x)], ["z"], 1).grad
    approx = diff.fd_partials(f, [np.array(x)], ["z"], 1).grad
    assert np.max(np.abs(exact - approx)) <= 1e-6


@given(st.lists(finite, min_size=2, max_size=2))
def test_linearity_of_differentiation(x):
    f = lambda z: diff.sin(z[0]) * z[1]  # noqa: E731
    g = lambda z: z[0] ** 2 + diff.cos(z[1])  # noqa: E731
    args = [np.array(x)]
    fg = diff.jet_partials(lambda z: f(z) + g(z), args, ["z"], 2)
    pf, pg = diff.jet_partials(f, args, ["z"], 2), diff.jet_partials(g, args, ["z"], 2)
    np.testing.assert_allclose(fg.grad, pf.grad + pg.grad, atol=1e-14)
    np.testing.assert_allclose(fg.hess, pf.hess + pg.hess, atol=1e-14)


@given(st.floats(0.1, 3), st.floats(-2, 2))
def test_dual_arithmetic_rules(x, y):
    d = Dual(x, 1.0, 10**6)
    assert (d * y + d / x).eps == pytest.approx(y + 1.0 / x)
    assert (y / d).eps == pytest.approx(-y / x**2)
    assert (d**3).eps == pytest.approx(3 * x**2)
    assert diff.primal(abs(-d)) == pytest.approx(x)
