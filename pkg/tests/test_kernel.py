"""Test kernel evaluation against closed forms and across routes."""

import math

import numpy as np
import pytest
import scipy.special

from fundsol.errors import UnresolvedOscillation
from fundsol.kernel import (
    MIN_RAMP_PHASE,
    CutoffSpec,
    PhiEvaluator,
    choose_strategy,
    closed_form_gaussian,
    grid_for,
    kernel_compact,
    kernel_eval,
    kernel_eval_many,
    kernel_fft,
    kernel_fft_points,
    kernel_radial,
    kernel_split,
)
from fundsol.model import KernelMethod
from fundsol.symbol import PolynomialSymbol

GAUSSIAN_POINTS = [[0.0, 0.0], [1.0, 2.0], [3.0, -2.0], [0.0, 4.0]]


def test_closed_form_modulus():
    """|I(t, x)| = (4 pi |t|)^{-n/2} for the Laplacian symbol."""
    assert closed_form_gaussian(1.0, [0.0, 0.0]).modulus == pytest.approx(1.0 / (4.0 * math.pi))
    assert closed_form_gaussian(4.0, [3.0, 1.0]).modulus == pytest.approx(1.0 / (16.0 * math.pi))
    assert closed_form_gaussian(1.0, [0.0, 0.0, 0.0]).modulus == pytest.approx((4.0 * math.pi) ** -1.5)

    # Check the singular time
    with pytest.raises(ValueError):
        closed_form_gaussian(0.0, [1.0, 0.0])


def test_fft_points_match_gaussian(laplacian: PolynomialSymbol):
    """Direct sums over the windowed spectrum reproduce the Gaussian kernel to 1%."""
    values = kernel_fft_points(laplacian, 1.0, GAUSSIAN_POINTS)
    for value in values:
        exact = closed_form_gaussian(1.0, value.x).value
        assert abs(value.value - exact) <= 1e-2 * abs(exact)
        assert value.method == KernelMethod.FFT


def test_fft_lattice_matches_gaussian(laplacian: PolynomialSymbol):
    grid = grid_for(laplacian, 1.0, 4.0)
    result = kernel_fft(laplacian, 1.0, grid)
    for x in ([0.0, 0.0], [2.0, 0.0]):
        index = result.index_of(x)
        lattice_x = [result.axis()[i] for i in index]
        exact = closed_form_gaussian(1.0, lattice_x).value
        assert abs(result.samples[index] - exact) <= 1e-2 * abs(exact)

    # Check the error estimate is filled on every lattice point
    assert result.error is not None
    assert result.error.shape == result.samples.shape


def test_grid_window_level(laplacian: PolynomialSymbol):
    """t times the window level stays above the ramp floor."""
    grid = grid_for(laplacian, 0.5, 4.0)
    assert 0.5 * grid.window_level >= MIN_RAMP_PHASE
    assert grid.spatial_extent / 2.0 >= 4.0

    # Check the points-per-axis cap
    with pytest.raises(UnresolvedOscillation):
        grid_for(laplacian, 1.0, 4.0, points_per_axis=16)


def test_negative_time_is_conjugate(laplacian: PolynomialSymbol, mixed: PolynomialSymbol):
    """I(-t, x) = conj(I(t, -x)) for real symbols."""
    x = [1.0, 0.5]
    backward = kernel_eval(mixed, -1.0, x)
    forward = kernel_eval(mixed, 1.0, [-1.0, -0.5])
    assert backward.value == forward.value.conjugate()
    assert backward.t == -1.0

    # Check against the Gaussian kernel at negative time
    exact = closed_form_gaussian(-1.0, x).value
    assert abs(kernel_eval(laplacian, -1.0, x).value - exact) <= 1e-2 * abs(exact)


def test_choose_strategy():
    assert choose_strategy(0.5, [1.0, 0.0]) == "fft"
    assert choose_strategy(16.0, [100.0, 0.0]) == "split"
    assert choose_strategy(1.0, [100.0, 0.0]) == "split"
    assert choose_strategy(-2.0, [3.0, 4.0]) == "fft"


def test_eval_many_rejects_unknown_strategy(laplacian: PolynomialSymbol):
    with pytest.raises(ValueError):
        kernel_eval_many(laplacian, 1.0, [[0.0, 0.0]], strategy="bogus")
    with pytest.raises(ValueError):
        kernel_eval_many(laplacian, 0.0, [[0.0, 0.0]], strategy="split")


def test_scaling_identity(mixed: PolynomialSymbol):
    """I_P(t, x) = t^{-n/m} I_{P_t}(1, t^{-1/m} x) with P_t(xi) = t P(t^{-1/m} xi)."""
    t, x = 2.0, np.array([1.0, 0.5])
    direct = kernel_eval(mixed, t, x, strategy="fft").value
    scaled = kernel_eval(mixed.scaled(t), 1.0, t ** (-1.0 / mixed.m) * x, strategy="fft").value
    assert abs(direct - t ** (-mixed.n / mixed.m) * scaled) <= 1e-3


def test_compact_piece_at_time_zero(laplacian: PolynomialSymbol):
    """(2 pi)^{-2} times the area integral of 1 - psi(|xi|^2) is 3 a1 / (8 pi)."""
    cutoff = CutoffSpec(a1=2.0)
    value = kernel_compact(laplacian, 0.0, [0.0, 0.0], cutoff, tol=1e-6)
    assert value.value.real > 0.0
    assert value.value.imag == pytest.approx(0.0, abs=1e-9)
    assert value.value.real == pytest.approx(3.0 * cutoff.a1 / (8.0 * math.pi), rel=1e-4)
    assert value.method == KernelMethod.COMPACT


def test_cutoff_spec():
    cutoff = CutoffSpec(a1=4.0)
    assert cutoff.psi(4.0) == 0.0
    assert cutoff.psi(8.0) == 1.0
    assert cutoff.psi(6.0) == pytest.approx(0.5)
    assert cutoff.complement(2.0) == 1.0


@pytest.mark.slow
def test_split_matches_gaussian(laplacian: PolynomialSymbol):
    x = [3.0, 4.0]
    value = kernel_split(laplacian, 1.0, x)
    exact = closed_form_gaussian(1.0, x).value
    assert abs(value.value - exact) <= 1e-2 * abs(exact)
    assert value.method == KernelMethod.SUM


@pytest.mark.slow
def test_split_matches_fft(mixed: PolynomialSymbol):
    x = [5.0, 0.0]
    fft = kernel_eval(mixed, 1.0, x, strategy="fft")
    split = kernel_eval(mixed, 1.0, x, strategy="split")
    assert abs(fft.value - split.value) <= 1e-2 * abs(fft.value)


@pytest.mark.slow
def test_scaling_identity_tight(biharmonic: PolynomialSymbol):
    """Homogeneous symbols satisfy I(t, x) = t^{-n/m} I(1, t^{-1/m} x)."""
    t, x = 8.0, np.array([6.0, 2.0])
    direct = kernel_eval(biharmonic, t, x, strategy="fft").value
    scaled = kernel_eval(biharmonic, 1.0, t ** (-1.0 / 4.0) * x, strategy="fft").value
    assert abs(direct - t ** (-0.5) * scaled) <= 1e-4


def test_derivative_kernel_matches_gaussian(laplacian: PolynomialSymbol):
    """d_1 I(t, x) = -i x_1 / (2t) I(t, x) for the Laplacian symbol."""
    points = [[1.0, 0.5], [2.0, -1.0]]
    for value in kernel_fft_points(laplacian, 1.0, points, alpha=(1, 0)):
        exact = -0.5j * value.x[0] * closed_form_gaussian(1.0, value.x).value
        assert abs(value.value - exact) <= 2e-2 * abs(exact)

    # Check malformed multi-indices
    with pytest.raises(ValueError):
        kernel_fft_points(laplacian, 1.0, points, alpha=(1,))
    with pytest.raises(ValueError):
        kernel_fft_points(laplacian, 1.0, points, alpha=(-1, 0))


def test_radial_piece_matches_gaussian(laplacian: PolynomialSymbol):
    """I_1 + I_2 at a point close to the origin, with a small cutoff."""
    cutoff = CutoffSpec(a1=2.0)
    x = [1.0, 0.0]
    high = kernel_radial(laplacian, 1.0, x, cutoff=cutoff)
    low = kernel_compact(laplacian, 1.0, x, cutoff, tol=1e-6)
    exact = closed_form_gaussian(1.0, x).value
    assert high.method == KernelMethod.RADIAL
    assert abs(high.value + low.value - exact) <= 1e-2 * abs(exact)
    assert high.error_estimate >= 0.0


def test_phi_direct_matches_bessel(laplacian: PolynomialSymbol):
    """For P = |xi|^2 in the plane, Phi(r s^{1/2}, s) = pi J_0(r s^{1/2})."""
    r = 3.0
    phi = PhiEvaluator(laplacian, np.array([1.0, 0.0]), r, spread=1.0)
    s = np.array([4.0, 25.0, 100.0])
    values, errors = phi.direct(s)
    exact = math.pi * scipy.special.j0(r * np.sqrt(s))
    assert np.max(np.abs(values - exact)) <= 1e-10
    assert np.all(errors <= 1e-8)

    # Check at least 10 nodes per oscillation
    for lam in (1.0, 30.0, 500.0):
        assert phi._level(lam) >= 10.0 * lam * phi.spread

    # Check the half-level comparison flags an under-resolved rule
    coarse = PhiEvaluator(laplacian, np.array([1.0, 0.0]), 100.0, spread=0.01)
    values, errors = coarse.direct(np.array([100.0]))
    assert errors[0] > 1e-6


def test_refined_grid_respects_cap(laplacian: PolynomialSymbol):
    grid = grid_for(laplacian, 1.0, 4.0)
    assert grid.refined(2).points_per_axis == 2 * grid.points_per_axis
    assert grid.refined(2).extent == grid.extent

    # Check the cap on the refined grid
    with pytest.raises(UnresolvedOscillation):
        grid.refined(2, max_points=grid.points_per_axis)
    with pytest.raises(UnresolvedOscillation):
        kernel_eval_many(laplacian, 1.0, [[1.0, 0.0]], strategy="fft", refine=4096)
