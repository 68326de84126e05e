import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from killedmc import oracles
from killedmc.chain import (Step, flow_derivatives, increment_of, merged_transition, propagate, transition)
from killedmc.model import Model, constant_family, sine_martingale
from killedmc.renewal import PathBatch


def test_reflected_step_dies():
    m = constant_family(1.0, 0.0, start=1.0)
    assert float(transition(m, 1.0, 0.0, 0.3)) == pytest.approx(-0.7)


def test_plain_step_survives():
    m = constant_family(1.0, 0.0, start=1.0)
    assert float(transition(m, 1.0, 1.0, 0.3)) == pytest.approx(1.3)


def test_propagate_tracks_alive():
    m = constant_family(1.0, 0.0, horizon=1.0, start=1.0)
    batch = PathBatch(np.array([[0.0, 0.25, 1.0], [0.0, 0.25, 1.0]]), np.array([[0.6, 0.0], [0.6, 0.0]]),
                      np.array([[0.0, 1.0], [1.0, 1.0]]))
    ch = propagate(m, batch)
    np.testing.assert_allclose(ch.states[:, 1], [-0.7, 1.3])
    np.testing.assert_array_equal(ch.alive[:, 0], [True, True])
    np.testing.assert_array_equal(ch.alive[:, 1], [False, True])


@given(st.floats(0.0, 3.0), st.floats(-2.0, 2.0), st.sampled_from([0.0, 1.0]))
def test_increment_is_recovered(x, z, rho):
    m = sine_martingale(0.3, 0.7)
    y = transition(m, x, rho, z)
    step = Step(x, y, rho, 0.0, 0.1)
    assert float(increment_of(m, step)) == pytest.approx(z, abs=1e-12)


def test_merged_transition_examples():
    ms = merged_transition(constant_family(1.0), 1.0, 0.2)
    assert float(ms.mu) == -1.0
    assert float(ms.x_merged) == pytest.approx(-0.8)
    ms = merged_transition(constant_family(2.0), 0.5, 0.0)
    assert float(ms.x_merged) == pytest.approx(-0.5)


def test_merged_transition_from_the_barrier():
    m = sine_martingale(0.2, 0.5, barrier=0.3, start=1.0)
    ms = merged_transition(m, 0.3, 0.7)
    assert float(ms.x_merged) == pytest.approx(0.3 + float(m.sigma_at(0.3)) * 0.7, abs=1e-15)


@given(st.floats(0.0, 5.0))
def test_merged_factor_is_negative(x):
    assert float(merged_transition(sine_martingale(0.3, 0.9), x, 0.0).mu) < 0


def test_flow_derivative_constant():
    d1, d2 = flow_derivatives(constant_family(0.7), Step(0.4, 0.9, 1.0, 0.0, 0.2))
    assert float(d1) == 1.0 and float(d2) == 0.0


def test_flow_derivative_linear_sigma():
    m = Model(drift=lambda x: 0.0 * x, sigma=lambda x: 1.0 + 0.01 * x, barrier=0.0, horizon=1.0, start=0.5)
    x = 0.5
    y = float(transition(m, x, 0.0, 0.5))
    d1, d2 = flow_derivatives(m, Step(x, y, 0.0, 0.0, 0.2))
    assert float(d1) == pytest.approx(-1 + 0.005, abs=1e-14)
    assert float(d2) == pytest.approx(0.0, abs=1e-14)


@given(st.floats(0.05, 2.0), st.floats(-1.5, 1.5), st.sampled_from([0.0, 1.0]))
def test_flow_derivative_against_finite_differences(x, z, rho):
    m = sine_martingale(0.3, 1.2)
    y = float(transition(m, x, rho, z))
    d1, d2 = flow_derivatives(m, Step(x, y, rho, 0.0, 0.2))
    h = 1e-4
    up, mid, down = (float(transition(m, x + s, rho, z)) for s in (h, 0.0, -h))
    assert float(d1) == pytest.approx((up - down) / (2 * h), abs=1e-7)
    assert float(d2) == pytest.approx((up - 2 * mid + down) / h ** 2, abs=1e-5)


def test_one_step_reflection_principle():
    # 2 (2 rho - 1) f(X') 1{X' >= L} averaged over rho equals the killed Brownian expectation
    sigma, L, x, T = 0.8, 0.0, 0.6, 0.7
    f = lambda y: (y - L) ** 2
    total = 0.0
    for rho in (0.0, 1.0):
        m = rho * x + (1 - rho) * (2 * L - x)
        sd = sigma * math.sqrt(T)
        v, _ = integrate.quad(lambda y: f(y) * math.exp(-(y - m) ** 2 / (2 * sd * sd)) / (sd * math.sqrt(2 * math.pi)),
                              L, np.inf, epsabs=1e-13)
        total += 0.5 * 2 * (2 * rho - 1) * v
    assert total == pytest.approx(oracles.killed_bm_value(f, sigma, L, x, T), abs=1e-10)
