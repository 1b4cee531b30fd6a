import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loglap.quadrature import (
    QuadratureScheme,
    gamma_negative,
    gauss_legendre,
    integrate_panels,
    phi_function,
)


def test_gauss_legendre_weights_positive_and_sum_to_two():
    x, w = gauss_legendre(16)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(2.0, abs=1e-14)
    assert np.all(np.abs(x) < 1)


def test_polynomial_integrated_exactly():
    r = integrate_panels(lambda t: t**7 - 3 * t**2, [0.0, 0.5, 2.0])
    assert r.value == pytest.approx(2.0**8 / 8 - 8.0, rel=1e-14)


def test_vector_valued_integrand():
    r = integrate_panels(lambda t: np.stack([np.exp(-t), np.cos(t)], axis=-1), [0.0, 1.0, 3.0])
    assert r.value == pytest.approx([1 - math.exp(-3), math.sin(3)], rel=1e-13)
    assert np.all(r.error >= 0)


def test_paired_noise_channel_stops_refinement():
    rng = np.random.default_rng(0)

    def noisy(t):
        v = np.sin(t) + 1e-15 * rng.standard_normal(t.shape)
        return np.stack([v, np.ones_like(t)], axis=-1)

    r = integrate_panels(noisy, [0.0, 1.0], paired=True, rtol=1e-16, max_depth=30)
    assert r.evaluations < 2000
    assert r.value[0] == pytest.approx(1 - math.cos(1.0), abs=1e-13)


def test_scheme_validation():
    with pytest.raises(ValueError):
        QuadratureScheme(T=10.0)
    with pytest.raises(ValueError):
        QuadratureScheme(t_floor=0.0)
    with pytest.raises(ValueError):
        QuadratureScheme(ratio=1.0)


def test_scheme_round_trip_and_breakpoints():
    s = QuadratureScheme(T=35.0, order=12)
    assert QuadratureScheme.from_dict(s.to_dict()) == s
    inner = s.inner_breakpoints()
    outer = s.outer_breakpoints()
    assert inner[0] == s.t_floor and inner[-1] == 1.0
    assert outer[0] == 1.0 and outer[-1] == 35.0
    assert np.all(np.diff(inner) > 0) and np.all(np.diff(outer) > 0)
    assert s.tail_bound() == pytest.approx(math.exp(-35.0) / 35.0)


@given(st.floats(min_value=-200.0, max_value=0.0), st.integers(min_value=1, max_value=9))
def test_phi_function_against_mpmath(z, order):
    # phi_l(z) = (e^z - sum_{i<l} z^i/i!) / z^l, with value 1/l! at 0
    mpmath.mp.dps = 50
    zz = mpmath.mpf(z)
    if abs(z) < 1:
        exact = sum(zz**i / mpmath.factorial(i + order) for i in range(60))
    else:
        exact = (mpmath.e**zz - sum(zz**i / mpmath.factorial(i) for i in range(order))) / zz**order
    got = phi_function(np.array([z]), order)[0]
    assert abs(got - float(exact)) <= 1e-13 * abs(float(exact)) + 1e-300


@given(st.floats(min_value=0.01, max_value=0.99))
def test_gamma_negative_matches_mpmath(s):
    assert gamma_negative(s) == pytest.approx(float(mpmath.gamma(-s)), rel=1e-12)


def test_gamma_negative_domain():
    with pytest.raises(ValueError):
        gamma_negative(1.0)
