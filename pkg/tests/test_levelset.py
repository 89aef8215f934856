"""Test level-set radii, the validity threshold and the sigma audit."""

import math

import numpy as np
import pytest

from fundsol.errors import LevelSetError
from fundsol.levelset import drho_ds, find_threshold, sigma, sigma_audit, solve_rho
from fundsol.sphere import sphere_grid
from fundsol.symbol import PolynomialSymbol, radial_symbol


def test_solve_rho_homogeneous(biharmonic: PolynomialSymbol):
    """|xi|^4 = 16 on the unit direction gives rho = 2."""
    root = solve_rho(biharmonic, 16.0, [1.0, 0.0])
    assert root.rho == pytest.approx(2.0, rel=1e-14)
    assert root.radial_derivative == pytest.approx(32.0)

    # Check the homogeneous remainder vanishes
    assert sigma(biharmonic, 16.0, [0.6, 0.8]) == pytest.approx(0.0, abs=1e-14)


def test_solve_rho_mixed(mixed: PolynomialSymbol):
    """rho^4 + rho^2 = 100 has rho^2 = (sqrt(401) - 1) / 2."""
    expected = math.sqrt((math.sqrt(401.0) - 1.0) / 2.0)
    root = solve_rho(mixed, 100.0, [1.0, 0.0])
    assert root.rho == pytest.approx(expected, rel=1e-12)
    assert root.rho == pytest.approx(3.0842, abs=1e-4)
    assert root.residual <= 1e-12 * 100.0

    # Check sigma = rho - s^{1/4}
    assert sigma(mixed, 100.0, [1.0, 0.0]) == pytest.approx(expected - 100.0**0.25, rel=1e-10)
    assert sigma(mixed, 100.0, [1.0, 0.0]) == pytest.approx(-0.0780, abs=1e-4)


def test_solve_rho_below_constant_term(laplacian: PolynomialSymbol):
    with pytest.raises(LevelSetError):
        solve_rho(laplacian, 0.0, [1.0, 0.0])


def test_drho_ds_matches_implicit_derivative(mixed: PolynomialSymbol):
    """d rho / d s = 1 / (4 rho^3 + 2 rho) for rho^4 + rho^2."""
    omegas = sphere_grid(2, 16)
    rho = solve_rho(mixed, 50.0, [1.0, 0.0]).rho
    assert np.allclose(drho_ds(mixed, 50.0, omegas), 1.0 / (4.0 * rho**3 + 2.0 * rho), rtol=1e-10)


def test_find_threshold_no_barrier(mixed: PolynomialSymbol):
    threshold = find_threshold(mixed)
    assert threshold.a == 1.0
    assert threshold.valid[0]


def test_find_threshold_negative_dip():
    """|xi|^4 - 10 |xi|^2 dips below zero but every positive level crosses once."""
    p = radial_symbol(2, {4: 1, 2: -10})
    assert find_threshold(p).a == 1.0


def test_find_threshold_positive_barrier():
    """|xi|^2 (|xi|^2 - 3)^2 has a local maximum 4 at |xi| = 1, so a = 8."""
    p = radial_symbol(2, {6: 1, 4: -6, 2: 9})
    threshold = find_threshold(p)
    assert threshold.a == 8.0
    assert threshold.valid[:4] == [False, False, False, True]

    # Check the unique root above the threshold
    root = solve_rho(p, 16.0, [0.0, 1.0])
    assert root.rho > math.sqrt(3.0)
    assert root.radial_derivative > 0.0


def test_sigma_audit_homogeneous(biharmonic: PolynomialSymbol):
    """sigma vanishes identically, so every constant is zero."""
    audit = sigma_audit(biharmonic, k_max=2, s_grid=np.geomspace(2.0, 1e4, 7), omegas=sphere_grid(2, 16))
    assert all(c == 0.0 for c in audit.constants.values())
    assert audit.passed

    # Check one CSV row per (k, s)
    assert len(audit.rows) == 3 * 7


def test_sigma_audit_mixed(mixed: PolynomialSymbol):
    """C_0 is |sigma| at the smallest level, sigma(2) = 1 - 2^{1/4}."""
    audit = sigma_audit(mixed, k_max=1, s_grid=np.geomspace(2.0, 1e4, 9), omegas=sphere_grid(2, 16))
    assert audit.constants[0] == pytest.approx(2.0**0.25 - 1.0, rel=1e-6)
    assert 0.0 < audit.constants[1] < math.inf
    assert audit.stable[0]

    # Check radial symbols have no tangential variation
    assert audit.tangential_constants[0] == 0.0


def test_sigma_audit_order_range(mixed: PolynomialSymbol):
    with pytest.raises(LevelSetError):
        sigma_audit(mixed, k_max=4)
