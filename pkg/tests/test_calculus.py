import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from killedmc import oracles
from killedmc.calculus import (BiJet, Jet, MergedOperators, StepOperators, cos, exp, gauss, integral_of_one,
                               mills_ratio, mills_ratio_jet, mills_ratio_stack, sin)
from killedmc.model import sine_martingale


def _ops(sigma, x_prev, increment, dt, rho=1.0, L=0.0, order=3):
    """Operators of a constant-sigma step whose Brownian increment is ``increment``."""
    stack = np.zeros((6, 1))
    stack[0] = sigma
    mean = rho * x_prev + (1 - rho) * (2 * L - x_prev)
    return StepOperators(stack, np.array([x_prev]), np.array([mean + sigma * increment]), rho,
                         np.array([dt]), L, order)


# jets ---------------------------------------------------------------------------

@given(st.floats(-2.0, 2.0))
def test_jet_product_and_composition_match_closed_form(x):
    t = Jet.variable(np.array(x), 3)
    d = (sin(t) * t * t).derivatives()
    s, c = math.sin(x), math.cos(x)
    expected = [s * x * x,
                c * x * x + 2 * x * s,
                -s * x * x + 4 * x * c + 2 * s,
                -c * x * x - 6 * x * s + 6 * c]
    np.testing.assert_allclose(d, expected, atol=1e-12)


@given(st.floats(-1.5, 1.5))
def test_reciprocal_and_exp_against_finite_differences(x):
    f = lambda v: math.exp(v) / (2.0 + math.cos(v))
    jet = exp(Jet.variable(np.array(x), 2)) / (cos(Jet.variable(np.array(x), 2)) + 2.0)
    h = 1e-4
    fd1 = (f(x + h) - f(x - h)) / (2 * h)
    fd2 = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2
    d = jet.derivatives()
    assert d[0] == pytest.approx(f(x), rel=1e-13)
    assert d[1] == pytest.approx(fd1, rel=1e-7, abs=1e-9)
    assert d[2] == pytest.approx(fd2, rel=1e-5, abs=1e-6)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_bijet_mixed_partials_commute(u, v):
    U, V = BiJet.variables(u, v, 3)
    h = sin(U * V) + U * U * V
    np.testing.assert_allclose(h.deriv(0).deriv(1).value, h.deriv(1).deriv(0).value, atol=1e-14)
    assert h.partial(1, 1) == pytest.approx(math.cos(u * v) - u * v * math.sin(u * v) + 2 * u, abs=1e-12)


def test_jet_order_limits():
    with pytest.raises(ValueError):
        Jet.constant(1.0, 5)
    with pytest.raises(ValueError):
        Jet.constant(1.0, 0).deriv()
    with pytest.raises(ValueError):
        Jet.variable(1.0, 2).partial(3)


def test_numpy_scalars_defer_to_jets():
    out = np.float64(2.0) * Jet.variable(1.0, 2)
    assert isinstance(out, Jet)
    np.testing.assert_allclose(out.derivatives(), [2.0, 2.0, 0.0])


# the step operator ----------------------------------------------------------------

def test_integral_of_one_at_zero_increment():
    ops = _ops(1.0, 1.0, 0.0, 1.0)
    assert float(ops.I(1.0).value[0]) == 0.0
    assert float(ops.I(1.0, 2).value[0]) == pytest.approx(-1.0, abs=1e-15)


def test_integral_of_one_plug_in():
    # sigma = 2, dt = 0.5, increment 1: I(1) = 1 / (2 * 0.5) and I^2(1) = 1 - 1 / (4 * 0.5)
    ops = _ops(2.0, 1.0, 1.0, 0.5)
    assert float(ops.I(1.0).value[0]) == pytest.approx(1.0, abs=1e-15)
    assert float(ops.I(1.0, 2).value[0]) == pytest.approx(0.5, abs=1e-15)


def test_integral_of_identity():
    ops = _ops(1.0, 1.0, 0.5, 1.0)
    x_next = float(ops.V.value[0])
    assert float(ops.I(ops.V).value[0]) == pytest.approx(x_next * 0.5 - 1.0, abs=1e-15)


@given(st.floats(0.2, 2.0), st.floats(0.01, 1.0), st.floats(-2.0, 2.0), st.sampled_from([0.0, 1.0]))
def test_hermite_closed_form(sigma, dt, increment, rho):
    ops = _ops(sigma, 0.7, increment, dt, rho)
    for ell in (1, 2):
        closed = integral_of_one(ell, sigma ** 2 * dt, sigma * increment)
        assert float(ops.I(1.0, ell).value[0]) == pytest.approx(closed, rel=1e-12, abs=1e-12)


def test_integral_of_one_rejects_bad_input():
    with pytest.raises(ValueError):
        integral_of_one(1, 0.0, 1.0)
    with pytest.raises(ValueError):
        integral_of_one(3, 1.0, 1.0)
    with pytest.raises(ValueError):
        _ops(1.0, 1.0, 0.0, 0.0)


def test_constant_extracts():
    ops = _ops(0.8, 0.4, 0.3, 0.2)
    np.testing.assert_allclose(ops.I(3.5).value, 3.5 * ops.I(1.0).value, rtol=1e-15)


def test_duality_second_order():
    # E[f''(X') 1] = E[f(X') I^2(1)] for f(x) = x^2
    for rho in (0.0, 1.0):
        r = oracles.check_duality(0.9, 0.3, 0.6, rho, 0.0, (0.0, 0.0, 1.0), lambda u, v: 1.0, 2)
        assert abs(r) <= 1e-10


def test_duality_cubic_against_quadratic():
    # E[D h g] = E[h I(g)] with h of degree 3 and g of degree 2
    g = lambda u, v: 0.5 * v * v - u * v + 2.0
    for rho in (0.0, 1.0):
        r = oracles.check_duality(0.6, 0.4, 0.8, rho, 0.0, (0.3, -1.0, 0.2, 0.7), g, 1)
        assert abs(r) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.integers(1, 2))
def test_extraction_on_polynomial_pairs(p, q, ell):
    ops = _ops(0.7, 0.5, 0.4, 0.3)
    h1 = p[0] + p[1] * ops.V + p[2] * ops.U * ops.V
    h2 = q[0] * ops.V * ops.V + q[1] * ops.U + q[2] * ops.V
    assert float(oracles.extraction_residual(ops, h1, h2, ell)[0]) <= 1e-12 * (1 + sum(map(abs, p + q))) ** 2


def test_chain_rule_constant_sigma_vanishes():
    stack = np.zeros((6, 1))
    stack[0] = 0.5
    ops = StepOperators(stack, np.array([0.4]), np.array([0.9]), 1.0, np.array([0.2]), 0.0, 3)
    h = ops.U * ops.V * ops.V
    np.testing.assert_allclose(ops.total(ops.I(h)).value, ops.I(ops.total(h)).value, atol=1e-13)


def test_chain_rule_on_sine_model():
    m = sine_martingale(0.3, 0.8)
    rng = np.random.default_rng(3)
    x_prev, x_next = rng.uniform(0.1, 2.0, 5), rng.uniform(0.1, 2.0, 5)
    for rho in (0.0, 1.0):
        r = oracles.chain_rule_residual(m, lambda u, v: u * v, x_prev, x_next, rho, 0.15)
        assert r.max() <= 1e-10


def test_chain_rule_of_one():
    m = sine_martingale(0.3, 0.8)
    ops = StepOperators(m.stack("sigma", np.array([0.7]), 4), np.array([0.7]), np.array([1.1]), 1.0,
                        np.array([0.2]), 0.0, 3)
    lhs = ops.total(ops.I(1.0)).value
    rhs = -(ops.dsigma / ops.sigma * ops.I(1.0)).value
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


# the merged operator -------------------------------------------------------------

def test_merged_integral_of_one():
    sig_L, dt, z_sum = 1.3, 0.4, 0.6
    mean = -0.2
    ops = MergedOperators(sig_L, np.array([mean + sig_L * z_sum]), mean, dt)
    assert float(ops.I(1.0).value[0]) == pytest.approx(z_sum / (sig_L * dt), rel=1e-14)


def test_merged_second_integral_plug_in():
    ops = MergedOperators(1.0, np.array([1.0]), 0.0, 2.0)
    assert float(ops.I(1.0, 2).value[0]) == pytest.approx(-0.25, abs=1e-15)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_merged_extraction(p, q):
    ops = MergedOperators(0.8, np.array([0.3]), -0.1, 0.5, order=2)
    h1 = p[0] + p[1] * ops.Y + p[2] * ops.Y * ops.Y
    h2 = q[0] + q[1] * ops.Y + q[2] * ops.Y * ops.Y
    assert float(oracles.extraction_residual(ops, h1, h2, 1)[0]) <= 1e-12 * (1 + sum(map(abs, p + q))) ** 2


# Mills ratio ----------------------------------------------------------------------

def test_mills_ratio_at_zero():
    for t in (0.1, 1.0, 3.0):
        assert float(mills_ratio(t, 0.0)) == pytest.approx(math.sqrt(math.pi * t / 2), rel=1e-15)


def test_mills_ratio_against_quadrature():
    tail, _ = integrate.quad(lambda u: gauss(1.0, u), 3.0, np.inf, epsabs=1e-15, epsrel=1e-13)
    assert float(mills_ratio(1.0, 3.0)) == pytest.approx(tail / gauss(1.0, 3.0), rel=1e-10)


def test_mills_ratio_far_tail_is_finite():
    r = mills_ratio(1.0, 60.0)
    assert np.isfinite(r) and float(r) == pytest.approx(1 / 60, rel=1e-3)


def test_mills_ratio_bound():
    w = np.linspace(-8, 8, 2001)
    for t in (0.05, 1.0, 4.0):
        assert np.all(mills_ratio(t, w) <= math.sqrt(math.pi * t / 2) * (1 + 1e-15))


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_mills_ratio_derivatives(t, w):
    stack = mills_ratio_stack(t, w, 3)
    h = 1e-5
    for k in range(3):
        fd = (mills_ratio_stack(t, w + h, 3)[k] - mills_ratio_stack(t, w - h, 3)[k]) / (2 * h)
        assert stack[k + 1] == pytest.approx(fd, rel=1e-5, abs=1e-6)
    np.testing.assert_allclose(mills_ratio_jet(t, w, 2).derivatives(), stack[:3])
