"""Test decay exponents, envelopes and the envelope checks."""

import math
from fractions import Fraction

import numpy as np
import pytest

from fundsol.decay import (
    Envelope,
    compact_decay_audit,
    compact_envelope,
    derivative_kernel_check,
    derivative_mu,
    envelope,
    envelope_check,
    fit_power_law,
    mu_exponent,
    nu_exponent,
    sharpness_check,
)
from fundsol.errors import FitError, RegimeError
from fundsol.symbol import PolynomialSymbol


def test_exponents():
    assert mu_exponent(4, 2) == Fraction(2, 3)
    assert nu_exponent(4, 2) == Fraction(1, 3)
    assert mu_exponent(2, 3) == 0
    assert mu_exponent(6, 3) == Fraction(6, 5)

    # Check mu + nu = n / 2
    for m, n in ((4, 2), (6, 2), (4, 3), (8, 3)):
        assert mu_exponent(m, n) + nu_exponent(m, n) == Fraction(n, 2)


def test_derivative_mu_range():
    assert derivative_mu(4, 2, 0) == mu_exponent(4, 2)
    assert derivative_mu(4, 2, 1) == Fraction(1, 3)
    assert derivative_mu(4, 2, 2) == 0

    # Check orders beyond (mn - 2n) / 2
    with pytest.raises(ValueError):
        derivative_mu(4, 2, 3)
    with pytest.raises(ValueError):
        derivative_mu(4, 2, -1)


def test_envelope_unit_values():
    assert envelope("small_t", 4, 2, 1.0, 0.0) == pytest.approx(1.0)
    assert envelope("large_t", 4, 2, 1.0, [0.0, 0.0]) == pytest.approx(1.0)
    assert envelope("small_t", 4, 2, 0.5, 0.0) == pytest.approx(0.5**-0.5)
    assert envelope("large_t", 4, 2, 16.0, [3.0, 4.0]) == pytest.approx(16.0**-0.25 * (1.0 + 5.0 / 16.0) ** (-2.0 / 3.0))


def test_second_order_envelope_is_flat_in_x():
    """mu = 0 for m = 2, so the large-t envelope only depends on t."""
    env = Envelope("large_t", 2, 2)
    assert env.mu == 0.0
    assert env.nu == 1.0
    values = env(4.0, np.array([0.0, 10.0, 1000.0]))
    assert np.allclose(values, 0.5)


def test_envelope_regimes():
    with pytest.raises(RegimeError):
        envelope("small_t", 4, 2, 2.0, 0.0)
    with pytest.raises(RegimeError):
        envelope("large_t", 4, 2, 0.5, 0.0)
    with pytest.raises(RegimeError):
        envelope("small_t", 4, 2, 0.0, 0.0)
    with pytest.raises(RegimeError):
        envelope("medium_t", 4, 2, 1.0, 0.0)

    # Check negative times use |t|
    assert envelope("large_t", 4, 2, -16.0, 0.0) == envelope("large_t", 4, 2, 16.0, 0.0)


def test_compact_envelope():
    assert compact_envelope(4, 1.0, 0.0, 2) == pytest.approx(1.0)
    assert compact_envelope(4, 2.0, [2.0, 0.0], 1) == pytest.approx(2.0**-0.25 * 2.0**-1.25)
    with pytest.raises(RegimeError):
        compact_envelope(4, 0.0, 1.0, 0)


def test_fit_power_law_synthetic():
    a = np.geomspace(1.0, 100.0, 8)
    slope, intercept, residual = fit_power_law(zip(a, 3.0 * a**-1.5, strict=True))
    assert slope == pytest.approx(-1.5)
    assert intercept == pytest.approx(math.log(3.0))
    assert residual == pytest.approx(0.0, abs=1e-12)

    # Check degenerate inputs
    with pytest.raises(FitError):
        fit_power_law([(1.0, 1.0), (2.0, 0.5)])
    with pytest.raises(FitError):
        fit_power_law([(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0), (5.0, 1.0)])


def test_sharpness_second_order():
    """For m = 2 the modulus is constant in x and the fitted slope is -mu = 0."""
    report = sharpness_check(2, 2)
    assert report.slope == pytest.approx(0.0, abs=1e-10)
    assert report.band_ratio == pytest.approx(1.0)
    assert report.passed
    assert len(report.samples) == 12


def test_envelope_check_laplacian_small_t(laplacian: PolynomialSymbol):
    """|I(t, x)| t = 1 / (4 pi) on the whole lattice."""
    fit = envelope_check(laplacian, "small_t", strategy="fft", scales=[0.0, 2.0, 4.0, 8.0])
    assert fit.passed
    assert fit.max_ratio == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-2)
    assert fit.stability == pytest.approx(1.0, rel=1e-2)
    assert fit.fitted_exponent == pytest.approx(-1.0, abs=2e-2)
    assert not fit.notes


@pytest.mark.slow
def test_sharpness_fourth_order():
    report = sharpness_check(4, 2)
    assert report.q_min > 0.0
    assert report.slope == pytest.approx(-2.0 / 3.0, abs=0.1)


@pytest.mark.slow
def test_envelope_check_mixed_large_t(mixed: PolynomialSymbol):
    fit = envelope_check(mixed, "large_t", scales=[0.0, 1.0, 2.0, 4.0])
    assert fit.passed
    assert math.isfinite(fit.max_ratio)


@pytest.mark.slow
def test_derivative_kernel_check(biharmonic: PolynomialSymbol):
    fit = derivative_kernel_check(biharmonic, (1, 0), "small_t", scales=[0.0, 2.0, 4.0, 8.0])
    assert fit.mu == pytest.approx(1.0 / 3.0)
    assert fit.passed


@pytest.mark.slow
def test_compact_decay_audit(mixed: PolynomialSymbol):
    audit = compact_decay_audit(mixed, k=2)
    assert audit.window == (10.0, 100.0)
    assert audit.slope <= -(2.0 + 1.0 / 4.0)
    assert audit.slope_passed

    # Check the stationary radius 2 max |grad P| lies past 10 and gets its own fit
    assert audit.shifted_window is not None
    assert audit.shifted_window[0] > 10.0
    assert audit.shifted_slope is not None

    # Check the joint bound does not grow with 1 + t + |x|
    assert audit.joint_passed
    assert audit.joint_slope <= 0.1
    assert audit.passed
