"""Test the spherical phase, its critical points and the sphere integral."""

import math

import numpy as np
import pytest
from scipy.special import j0

from fundsol.errors import CapMisalignmentError
from fundsol.phase import (
    PartitionOfUnity,
    critical_path,
    decomposition_audit,
    find_audit_threshold,
    find_critical_points,
    phase_inequality_audit,
    phase_value,
    radial_phase,
    sphere_integral,
    tangential_gradient,
)
from fundsol.symbol import PolynomialSymbol


def test_phase_value_along_u(biharmonic: PolynomialSymbol, mixed: PolynomialSymbol):
    """phi(s, u) = 1 for |xi|^4; lower order terms pull it below 1."""
    assert phase_value(biharmonic, [1.0, 0.0], 7.0, [1.0, 0.0]) == pytest.approx(1.0, rel=1e-14)
    assert phase_value(biharmonic, [1.0, 0.0], 7.0, [0.0, 1.0]) == pytest.approx(0.0, abs=1e-14)

    rho = math.sqrt((math.sqrt(401.0) - 1.0) / 2.0)
    assert phase_value(mixed, [1.0, 0.0], 100.0, [1.0, 0.0]) == pytest.approx(rho / 100.0**0.25, rel=1e-12)


def test_radial_critical_points(mixed: PolynomialSymbol):
    """Radial symbols have omega_pm = +-u."""
    u = np.array([0.6, 0.8])
    plus, minus = find_critical_points(mixed, u, 10.0)
    assert np.allclose(plus.omega, u)
    assert np.allclose(minus.omega, -u)
    assert plus.phase_value == pytest.approx(-minus.phase_value)

    # Check the tangential gradient vanishes there
    assert np.linalg.norm(tangential_gradient(mixed, u, 10.0, u)) < 1e-12


def test_anisotropic_critical_points(anisotropic: PolynomialSymbol):
    """Newton lands on a strict maximum and minimum with opposite phase signs."""
    u = np.array([1.0, 1.0]) / math.sqrt(2.0)
    a1 = find_audit_threshold(anisotropic)
    plus, minus = find_critical_points(anisotropic, u, 4.0 * a1)
    assert plus.phase_value > 0.0 > minus.phase_value
    assert plus.second_derivative < 0.0 < minus.second_derivative
    assert plus.tangential_gradient_norm <= 1e-8

    # Check the maximizer is not u itself
    assert not np.allclose(plus.omega, u, atol=1e-3)


def test_critical_path_continuation(anisotropic: PolynomialSymbol):
    u = np.array([1.0, 1.0]) / math.sqrt(2.0)
    a1 = find_audit_threshold(anisotropic)
    path = critical_path(anisotropic, u, np.geomspace(4.0 * a1, 4000.0 * a1, 8))
    assert len(path.points_plus) == len(path.points_minus) == 8
    assert path.limit_plus == path.points_plus[-1].omega
    assert path.derivative_constant["+"] < math.inf


def test_radial_phase_mixed(mixed: PolynomialSymbol):
    """phi_+(1, 1, 100) = 100 + rho(100)."""
    value = radial_phase(mixed, [1.0, 0.0], 1.0, 1.0, 100.0, "+")
    assert value == pytest.approx(100.0 + math.sqrt((math.sqrt(401.0) - 1.0) / 2.0), rel=1e-12)
    assert value == pytest.approx(103.0842, abs=1e-4)

    # Check the minus branch subtracts the same radius
    assert radial_phase(mixed, [1.0, 0.0], 1.0, 1.0, 100.0, "-") == pytest.approx(100.0 - 3.0842, abs=1e-4)


def test_phase_inequality_audit_mixed(mixed: PolynomialSymbol):
    audit = phase_inequality_audit(mixed, [1.0, 0.0], 1.0, 1.0, np.geomspace(2.0, 1000.0, 8))
    assert audit.s0 == pytest.approx(1.0)
    fits = {fit.name: fit for fit in audit.inequalities}
    assert fits["phase_bounds"].c1 > 0.0
    assert fits["plus_slope"].c1 == pytest.approx(0.25, rel=0.2)
    assert fits["minus_slope"].passed
    assert audit.passed

    # Check the plotted curve covers the grid
    assert len(audit.minus_slope_curve) == 8


@pytest.mark.parametrize("lam", [3.7, 10.0, 25.0])
def test_sphere_integral_laplacian(laplacian: PolynomialSymbol, lam: float):
    """For |xi|^2 on R^2 the amplitude is 1/2 and Phi(lam, s) = pi J_0(lam)."""
    value = sphere_integral(laplacian, [1.0, 0.0], lam, 1.0)
    assert value.real == pytest.approx(math.pi * j0(lam), rel=5e-3, abs=1e-9)
    assert value.imag == pytest.approx(0.0, abs=1e-9)


def test_sphere_integral_at_zero_frequency(biharmonic: PolynomialSymbol):
    """Phi(0, s) = 2 pi / m for |xi|^m on R^2."""
    assert sphere_integral(biharmonic, [1.0, 0.0], 0.0, 1.0).real == pytest.approx(math.pi / 2.0, rel=1e-10)


def test_partition_caps_must_not_overlap():
    with pytest.raises(CapMisalignmentError):
        PartitionOfUnity(np.array([1.0, 0.0]), np.array([0.0, 1.0]), cap_radius=1.0)


def test_decomposition_audit_short_sweep(mixed: PolynomialSymbol):
    """The three pieces add back to Phi and the stationary amplitudes settle."""
    audit = decomposition_audit(mixed, [1.0, 0.0], 1.0, lams=[20.0, 50.0, 100.0])
    assert audit.max_reconstruction_error <= 1e-8
    assert audit.psi_variation["plus"] < 2.0
    assert audit.psi_variation["minus"] < 2.0
    assert len(audit.samples) == 3


@pytest.mark.slow
def test_decomposition_audit_full_sweep(anisotropic: PolynomialSymbol):
    u = np.array([1.0, 1.0]) / math.sqrt(2.0)
    audit = decomposition_audit(anisotropic, u, 4.0 * find_audit_threshold(anisotropic))
    assert audit.max_reconstruction_error <= 1e-8
    assert all(abs(x.psi_plus) > 0.0 and abs(x.psi_minus) > 0.0 for x in audit.samples)
