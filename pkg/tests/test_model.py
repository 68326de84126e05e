import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from killedmc.model import (Model, coefficient_jet, constant_family, cubic, drifted_family, generator_residual,
                            polynomial, power, sine_martingale, validate_model)
from killedmc.calculus import sin


def _cubic_stack(c1=1.0, c3=1.0):
    return lambda x: np.stack([c3 * x ** 3 + c1 * x, 3 * c3 * x ** 2 + c1, 6 * c3 * x])


def test_constant_sigma_jet():
    np.testing.assert_array_equal(coefficient_jet(constant_family(1.0), "sigma", 0.7, 3).derivatives(),
                                  [1.0, 0.0, 0.0, 0.0])


def test_sine_sigma_jet_at_zero():
    d = coefficient_jet(sine_martingale(0.1, 0.1), "sigma", 0.0, 1).derivatives()
    np.testing.assert_allclose(d, [0.2, 0.01], rtol=1e-15)


def test_sine_diffusion_jet_at_zero():
    m = sine_martingale(0.1, 0.1)
    d = coefficient_jet(m, "a", 0.0, 1).derivatives()
    np.testing.assert_allclose(d, [0.04, 0.004], rtol=1e-14)
    h = 1e-6
    fd = (m.sigma_at(h) ** 2 - m.sigma_at(-h) ** 2) / (2 * h)
    assert d[1] == pytest.approx(float(fd), abs=1e-8)


def test_coefficient_jet_rejects_unknown():
    with pytest.raises(ValueError):
        coefficient_jet(constant_family(1.0), "c", 0.0, 1)
    with pytest.raises(ValueError):
        coefficient_jet(constant_family(1.0), "a", 0.0, 5)


@given(st.floats(0.05, 0.5), st.floats(0.05, 2.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_cubic_is_a_martingale(sigma_bar, omega, c1, c3):
    m = sine_martingale(sigma_bar, omega, c1, c3)
    grid = np.linspace(-3, 5, 161)
    assert np.max(np.abs(generator_residual(m, _cubic_stack(c1, c3), grid))) <= 1e-10 * (1 + c3 * 125)


def test_drift_with_sigma_to_first_power_breaks_martingale():
    m = sine_martingale(0.3, 0.3)
    sig = m.sigma
    first_power = Model(drift=lambda x: -x * sig(x) / (x * x + 1 / 3), sigma=sig, barrier=0.0, horizon=0.5, start=1.0)
    res = generator_residual(first_power, _cubic_stack(), np.linspace(0.1, 3, 30))
    assert np.max(np.abs(res)) > 1e-2


def test_validation_constant():
    rep = validate_model(constant_family(1.0), np.linspace(-2, 2, 11), bounds=(0.5, 2.0))
    assert rep.accepted and rep.min_a == rep.max_a == 1.0


def test_validation_sine_range():
    rep = validate_model(sine_martingale(0.3, 0.3), np.linspace(-50, 50, 5001), bounds=(0.09, 0.81))
    assert rep.accepted
    assert 0.09 <= rep.min_a <= rep.max_a <= 0.81
    assert rep.martingale_residual <= 1e-10


def test_validation_rejects_zero_sigma():
    rep = validate_model(constant_family(0.0), np.linspace(0, 1, 5))
    assert not rep.accepted
    assert "ellipticity" in rep.messages[0]


def test_validation_rejects_band_violation_and_empty_grid():
    assert not validate_model(constant_family(2.0), [0.0], bounds=(0.5, 1.0)).accepted
    with pytest.raises(ValueError):
        validate_model(constant_family(1.0), [])


def test_start_below_barrier_rejected():
    with pytest.raises(ValueError):
        constant_family(1.0, barrier=1.0, start=0.5)
    with pytest.raises(ValueError):
        constant_family(1.0, horizon=0.0)


def test_power_vanishes_at_barrier():
    for p in (1, 2, 3):
        f = power(p, 0.7)
        assert f.vanishes_at_L and abs(f.value(0.7)) <= 1e-12
        assert f.derivative(1.7) == pytest.approx(p * 1.0)


def test_shifted_cubic_vanishes_at_barrier():
    f = cubic(0.5, 1.0, 1.0)
    assert not f.vanishes_at_L
    g = f.shifted(0.3)
    assert g.vanishes_at_L and abs(g.value(0.3)) <= 1e-12
    assert g.value(2.0) == pytest.approx(f.value(2.0) - f.value(0.3))
    assert g.derivative(2.0) == f.derivative(2.0)


def test_polynomial_works_on_jets():
    f = polynomial((1.0, 2.0, 3.0))
    assert f.value(2.0) == 17.0
    assert f.derivative(2.0) == 14.0
    jet = coefficient_jet(Model(drift=f.value, sigma=lambda x: 1.0 + 0 * sin(x), barrier=0, horizon=1, start=0),
                          "b", 2.0, 2)
    np.testing.assert_allclose(jet.derivatives(), [17.0, 14.0, 6.0])


def test_drifted_family_coefficients():
    m = drifted_family(0.4, 0.8)
    assert float(m.drift_at(3.0)) == 0.4 and float(m.sigma_at(-1.0)) == 0.8
    assert m.with_start(2.0).start == 2.0
