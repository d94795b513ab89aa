import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import beta as beta_fn

from mre.daitche import (DIVERGENCE_LIMIT, HistoryWeights, compute_weights, integrate_direct,
                         kernel_moments)
from mre.errors import ConfigError, InstabilityError
from mre.fields import BickleyField, FlowSample, QuiescentField

from conftest import params_for


def kernel_integral(k, n):
    """int_0^n s^k (n - s)^(-1/2) ds (h = 1)."""
    return n ** (k + 0.5) * beta_fn(k + 1, 0.5)


def test_order1_first_row():
    np.testing.assert_allclose(compute_weights(1, 1).row(1), [2 / 3, 4 / 3], rtol=1e-15)


def test_moments_against_beta():
    m = kernel_moments(1.0, 3)[0]
    np.testing.assert_allclose(m, [beta_fn(k + 1, 0.5) for k in range(4)], rtol=1e-14)
    D = 3
    s = sympy.symbols("s")
    exact = [float(sympy.N(sympy.integrate(s ** k / sympy.sqrt(D - s), (s, 0, 1)), 30))
             for k in range(4)]
    np.testing.assert_allclose(kernel_moments(D, 3)[0], exact, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([1, 2, 3]), st.integers(min_value=1, max_value=3000))
def test_weights_sum(order, n):
    w = HistoryWeights(order, n).row(n)
    assert w.sum() == pytest.approx(2 * np.sqrt(n), rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([1, 2, 3]), st.integers(min_value=3, max_value=3000))
def test_polynomial_exactness(order, n):
    w = HistoryWeights(order, n).row(n)
    s = np.arange(n + 1, dtype=float)
    for k in range(order + 1):
        exact = kernel_integral(k, n)
        assert w @ s ** k == pytest.approx(exact, rel=1e-11)


def test_low_rows_drop_degree():
    w = HistoryWeights(3, 5)
    s = np.arange(2, dtype=float)
    assert w.row(1) @ s == pytest.approx(kernel_integral(1, 1), rel=1e-14)
    assert w.row(0).size == 1 and w.row(0)[0] == 0.0


def test_cubic_symbolic_n20():
    n, h = 20, 0.01
    w = HistoryWeights(3, n).row(n)
    t = sympy.symbols("t")
    tn = sympy.Rational(n) * sympy.Rational(1, 100)
    exact = float(sympy.N(sympy.integrate(t ** 3 / sympy.sqrt(tn - t), (t, 0, tn)), 30))
    approx = np.sqrt(h) * w @ (h * np.arange(n + 1)) ** 3
    assert abs(approx - exact) <= 1e-11 * np.sqrt(h) * float(tn) ** 3


def test_rows_are_cached_and_read_only():
    w = HistoryWeights(2, 10)
    r = w.row(7)
    assert w[7] is r
    with pytest.raises(ValueError):
        r[0] = 1.0
    assert len(w.table) == 11
    with pytest.raises(IndexError):
        w.row(11)
    with pytest.raises(ConfigError):
        HistoryWeights(4, 10)


class UniformField:
    def velocity(self, y, t):
        return np.array([0.3, -0.1])

    def eval(self, y, t):
        return FlowSample(u=self.velocity(y, t), grad_u=np.zeros((2, 2)), mat_deriv=np.zeros(2))


@pytest.mark.parametrize("order", [1, 2, 3])
def test_neutral_tracer_in_uniform_flow(order):
    fld = UniformField()
    traj = integrate_direct(fld, params_for(1.0), [0.0, 0.0], fld.velocity(None, 0), 0.05, 40,
                            order)
    np.testing.assert_allclose(traj.velocity, np.tile([0.3, -0.1], (41, 1)), atol=1e-14)
    np.testing.assert_allclose(traj.positions[-1], [0.6, -0.2], atol=1e-13)


def test_history_grows_linearly():
    for n in (5, 17):
        traj = integrate_direct(QuiescentField(), params_for(7 / 9), [0, 0], [0.1, 0], 0.01, n)
        assert len(traj.history) == n + 1
        assert len(traj.history.v) == len(traj.history.y) == n + 1


def test_quiescent_relaxation_decays():
    traj = integrate_direct(QuiescentField(), params_for(4 / 3), [0, 0], [0.1, 0], 1 / 64, 64)
    speed = np.abs(traj.velocity[:, 0])
    assert speed[-1] < 0.2 * speed[0]
    assert np.all(np.diff(traj.positions[:, 0]) > 0)


def test_instability_small_R_and_S():
    fld = BickleyField.default()
    with pytest.raises(InstabilityError) as info:
        integrate_direct(fld, params_for(1 / 3, 0.01), [0, 0], fld.velocity(np.zeros(2), 0),
                         1 / 32, 32)
    assert info.value.step is not None
    assert DIVERGENCE_LIMIT == 1e8


def test_argument_checks():
    with pytest.raises(ConfigError):
        integrate_direct(QuiescentField(), params_for(1.0), [0, 0], [0, 0], 0.1, 10, order=4)
    with pytest.raises(ConfigError):
        integrate_direct(QuiescentField(), params_for(1.0), [0, 0], [0, 0], -0.1, 10)
