"""Pseudospectral evolution under e^{itP(D)}, L^p norms and L^p - L^q exponent fits."""

import math
from collections.abc import Callable, Sequence
from fractions import Fraction

import numpy as np
import scipy.fft
from loguru import logger

from fundsol.errors import EndpointPairError, FitError, ResolutionError
from fundsol.fitting import fit_power_law, slope_standard_error
from fundsol.grid import GridFunction
from fundsol.model import IndexPair, NormEstimate, PairClass
from fundsol.sphere import sphere_grid
from fundsol.symbol import PolynomialSymbol

__all__ = [
    "GridFunction",
    "admissible",
    "build_family",
    "default_t_grid",
    "evolve",
    "family_grid",
    "gaussian",
    "gaussian_evolution_exact",
    "highfreq_check",
    "large_t_check",
    "large_t_exponent",
    "lp_norm",
    "lpq_exponent_fit",
    "packet_widths",
    "random_bandlimited",
    "shifted_gaussian",
    "small_t_exponent",
    "translate",
    "wrap_fraction",
    "young_exponent",
]

LEAKAGE_TOL = 1e-8
WRAP_TOL = 1e-2
SHELL_FRACTION = 1.0 / 16.0
MIN_FAMILY = 3
MAX_POINTS = 4096
# Nyquist frequency in units of 1/width; keeps the Gaussian spectrum in the Nyquist shell below LEAKAGE_TOL
NYQUIST_WIDTHS = 4.6
# frequency radius, in units of 1/width, whose group velocities the grid must contain up to t_max
SPREAD = {"small_t": 1.3, "large_t": 3.5, "all_t": 3.5}
DEFAULT_WIDTHS = {"small_t": (0.26, 0.28, 0.3), "large_t": (2.0, 2.4, 2.8)}
PACKET_WIDTHS = (1.0, 1.25, 1.5)
DEFAULT_T_GRIDS = {"small_t": (0.05, 0.5, 6), "large_t": (1.0, 16.0, 5), "all_t": (0.1, 10.0, 9)}


def default_t_grid(regime: str) -> list[float]:
    """Geometric time grid of a regime: small_t, large_t or all_t (high-frequency data)."""
    if regime not in DEFAULT_T_GRIDS:
        raise ValueError(f"Unknown regime {regime!r}")
    start, stop, count = DEFAULT_T_GRIDS[regime]
    return [float(t) for t in np.geomspace(start, stop, count)]


def _angular_frequencies(f: GridFunction) -> list[np.ndarray]:
    axis = 2.0 * math.pi * scipy.fft.fftfreq(f.points_per_axis, d=f.spacing)
    return np.meshgrid(*([axis] * f.n), indexing="ij")


def _shell_energy(coeffs: np.ndarray, f: GridFunction) -> float:
    """Fraction of spectral energy with some |xi_i| in the outer SHELL_FRACTION of the band."""
    nyquist = math.pi / f.spacing
    freqs = _angular_frequencies(f)
    shell = np.zeros(coeffs.shape, dtype=bool)
    for axis in freqs:
        shell |= np.abs(axis) >= (1.0 - SHELL_FRACTION) * nyquist
    energy = np.abs(coeffs) ** 2
    total = float(energy.sum())
    return float(energy[shell].sum()) / total if total > 0.0 else 0.0


def wrap_fraction(f: GridFunction, q: float) -> float:
    """Share of ||f||_q carried by the boundary strip, the outer SHELL_FRACTION of the box.

    For q = inf this is the largest modulus in the strip over the largest modulus overall.
    """
    strip = np.max(np.abs(np.stack(f.coordinates())), axis=0) >= (1.0 - SHELL_FRACTION) * f.extent
    moduli = np.abs(f.samples)
    top = float(moduli.max())
    if top == 0.0:
        return 0.0
    if math.isinf(q):
        return float(moduli[strip].max()) / top
    powers = (moduli / top) ** q
    return (float(powers[strip].sum()) / float(powers.sum())) ** (1.0 / q)


def _frame_symbol(p: PolynomialSymbol, eta: np.ndarray, carrier: Sequence[float] | None) -> np.ndarray:
    """P(xi0 + eta) - P(xi0) - <grad P(xi0), eta>, or P(eta) without a carrier."""
    if carrier is None:
        return p.evaluate_many(eta)
    xi0 = np.asarray(carrier, dtype=float)
    slope = np.array([float(g.evaluate(xi0)) for g in p.gradient()])
    return p.evaluate_many(eta + xi0) - float(p.evaluate(xi0)) - eta @ slope


def evolve(
    p: PolynomialSymbol,
    u0: GridFunction,
    t: float,
    workers: int | None = None,
    leakage_tol: float = LEAKAGE_TOL,
    wrap_norm: float | None = None,
    wrap_tol: float = WRAP_TOL,
) -> GridFunction:
    """u(t) = e^{itP(D)} u0 on the periodic grid: forward FFT, multiply by e^{itP(xi_k)}, inverse FFT.

    Data with a carrier xi0 evolve in the frame of the packet: the result v(t) satisfies
    |u(t, x)| = |v(t, x + t grad P(xi0))|, so every L^q norm is that of the true solution.

    Args:
        wrap_norm: q of the norm in which the boundary strip share of u(t) is checked; None skips the check

    Raises:
        ResolutionError: if more than leakage_tol of the spectral energy sits in the Nyquist shell,
            or more than wrap_tol of ||u(t)||_{wrap_norm} sits in the boundary strip
    """
    if p.n != u0.n:
        raise ValueError(f"Symbol dimension {p.n} does not match grid dimension {u0.n}")
    coeffs = scipy.fft.fftn(u0.samples, workers=workers)
    leakage = _shell_energy(coeffs, u0)
    if leakage > leakage_tol:
        raise ResolutionError(f"Spectral energy fraction {leakage:.3e} in the Nyquist shell exceeds {leakage_tol:g}")
    if t == 0.0:
        return u0.with_samples(u0.samples.copy())
    values = _frame_symbol(p, np.stack(_angular_frequencies(u0), axis=-1), u0.carrier)
    evolved = u0.with_samples(scipy.fft.ifftn(coeffs * np.exp(1j * t * values), workers=workers))
    if wrap_norm is not None:
        wrapped = wrap_fraction(evolved, wrap_norm)
        if wrapped > wrap_tol:
            raise ResolutionError(f"Boundary strip carries {wrapped:.3e} of the L^{wrap_norm:g} norm at t = {t:g}")
    return evolved


def lp_norm(f: GridFunction, p: float) -> float:
    """Riemann-sum L^p norm; p = inf is the largest modulus."""
    if not 1.0 <= p <= math.inf:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    moduli = np.abs(f.samples)
    if math.isinf(p):
        return float(moduli.max())
    return float((np.sum(moduli**p) * f.cell_volume) ** (1.0 / p))


def _reciprocal(value: float) -> Fraction:
    if math.isinf(value):
        return Fraction(0)
    return 1 / Fraction(value).limit_denominator(10**9)


def _vertices(m: int) -> dict[str, tuple[Fraction, Fraction]]:
    """A, B, C, D in (1/p, 1/q) coordinates; m = 2 collapses B and D onto C."""
    inv_tau = Fraction(m - 2, 2 * (m - 1))
    return {
        "A": (Fraction(1, 2), Fraction(1, 2)),
        "B": (Fraction(1), inv_tau),
        "C": (Fraction(1), Fraction(0)),
        "D": (1 - inv_tau, Fraction(0)),
    }


def _cross(o, a, b) -> Fraction:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(a, b, point) -> bool:
    if _cross(a, b, point) != 0:
        return False
    return min(a[0], b[0]) <= point[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= point[1] <= max(a[1], b[1])


def admissible(p: float, q: float, m: int) -> IndexPair:
    """Classify (p, q) against the closed quadrilateral ABCD with the apex A removed.

    A = (1/2, 1/2), B = (1, 1/tau), C = (1, 0), D = (1/tau', 0) in (1/p, 1/q) with tau = 2(m-1)/(m-2).
    Membership is a half-plane intersection in exact rational arithmetic.
    """
    for name, value in (("p", p), ("q", q)):
        if not 1.0 <= value <= math.inf:
            raise ValueError(f"{name} must lie in [1, inf], got {value}")
    if m < 2 or m % 2:
        raise ValueError(f"m must be even and >= 2, got {m}")
    point = (_reciprocal(p), _reciprocal(q))
    v = _vertices(m)
    ring = [v["A"], v["B"], v["C"], v["D"]]
    crosses = [_cross(ring[i], ring[(i + 1) % 4], point) for i in range(4)]
    inside = all(c >= 0 for c in crosses) or all(c <= 0 for c in crosses)

    if not inside:
        classification = PairClass.OUTSIDE
    elif point == v["A"]:
        classification = PairClass.APEX_A_EXCLUDED
    elif point == v["C"]:
        classification = PairClass.EDGE
    elif point == v["B"]:
        classification = PairClass.ENDPOINT_B
    elif point == v["D"]:
        classification = PairClass.ENDPOINT_D
    elif any(_on_segment(ring[i], ring[(i + 1) % 4], point) for i in range(4)):
        classification = PairClass.EDGE
    else:
        classification = PairClass.INTERIOR
    return IndexPair(p=p, q=q, m=m, classification=classification)


def small_t_exponent(n: int, m: int, p: float, q: float) -> float:
    """(n/m)(1/q - 1/p)."""
    return float(Fraction(n, m) * (_reciprocal(q) - _reciprocal(p)))


def large_t_exponent(n: int, m: int, p: float, q: float) -> float:
    """n |1/q - 1/p'| - 1/m."""
    inv_p_dual = 1 - _reciprocal(p)
    return float(n * abs(_reciprocal(q) - inv_p_dual) - Fraction(1, m))


def young_exponent(n: int, m: int, q: float) -> float:
    """n/q - 1/m, the large-t exponent along the edge p = 1."""
    return float(n * _reciprocal(q) - Fraction(1, m))


def sample(
    n: int, points_per_axis: int, extent: float, fn: Callable[..., np.ndarray], carrier: Sequence[float] | None = None
) -> GridFunction:
    """GridFunction with samples fn(x_1, ..., x_n) on the centered lattice."""
    frame = None if carrier is None else tuple(float(c) for c in carrier)
    f = GridFunction(n, points_per_axis, extent, np.zeros((points_per_axis,) * n, dtype=complex), carrier=frame)
    return f.with_samples(fn(*f.coordinates()))


def gaussian(n: int, points_per_axis: int, extent: float, width: float, carrier: Sequence[float] | None = None) -> GridFunction:
    """e^{-|x|^2 / (2 width^2)}, optionally as the envelope of data modulated by e^{i <carrier, x>}."""

    def fn(*xs):
        return np.exp(-sum(x**2 for x in xs) / (2.0 * width**2))

    return sample(n, points_per_axis, extent, fn, carrier)


def shifted_gaussian(
    n: int,
    points_per_axis: int,
    extent: float,
    width: float,
    a_cut: float,
    center_factor: float = 8.0,
    truncation: float = 1e-12,
) -> GridFunction:
    """Gaussian envelope on the carrier center_factor * a_cut e_1, with spectrum zeroed on |xi| <= a_cut.

    Raises:
        ResolutionError: if the removed spectral tail exceeds truncation relative to the peak
    """
    carrier = np.zeros(n)
    carrier[0] = center_factor * a_cut
    f = gaussian(n, points_per_axis, extent, width, carrier)
    coeffs = scipy.fft.fftn(f.samples)
    radius = np.sqrt(sum((axis + k) ** 2 for axis, k in zip(_angular_frequencies(f), carrier, strict=True)))
    cut = radius <= a_cut
    removed = float(np.abs(coeffs[cut]).max()) / float(np.abs(coeffs).max()) if cut.any() else 0.0
    if removed > truncation:
        raise ResolutionError(f"Spectral tail {removed:.3e} below a_cut = {a_cut:g} exceeds {truncation:g}; widen the data")
    coeffs[cut] = 0.0
    logger.debug(f"Shifted Gaussian at |xi0| = {carrier[0]:g}: truncated tail {removed:.3e}")
    return f.with_samples(scipy.fft.ifftn(coeffs))


def random_bandlimited(
    n: int,
    points_per_axis: int,
    extent: float,
    band: float = 0.5,
    seed: int | None = None,
) -> GridFunction:
    """Random complex spectrum on |xi| <= band * Nyquist, seeded."""
    rng = np.random.default_rng(seed)
    f = GridFunction(n, points_per_axis, extent, np.zeros((points_per_axis,) * n, dtype=complex))
    radius = np.sqrt(sum(axis**2 for axis in _angular_frequencies(f)))
    shape = (points_per_axis,) * n
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coeffs[radius > band * math.pi / f.spacing] = 0.0
    return f.with_samples(scipy.fft.ifftn(coeffs))


def family_grid(
    p: PolynomialSymbol,
    widths: Sequence[float],
    t_max: float,
    carrier: Sequence[float] | None = None,
    spread: float = SPREAD["small_t"],
    max_points: int = MAX_POINTS,
) -> tuple[int, float]:
    """Points per axis and half-width of a box holding Gaussian data of the given widths up to |t| = t_max.

    The half-width covers t_max times the largest group-velocity offset |grad P(xi0 + eta) - grad P(xi0)|
    over |eta| <= spread / min(widths), plus six widths, inside the boundary strip. The spacing puts the
    Nyquist frequency at NYQUIST_WIDTHS / min(widths).

    Raises:
        ResolutionError: if the box needs more than max_points per axis
    """
    if len(widths) == 0 or min(widths) <= 0.0:
        raise ValueError(f"Widths must be positive, got {list(widths)}")
    w_min, w_max = min(widths), max(widths)
    xi0 = np.zeros(p.n) if carrier is None else np.asarray(carrier, dtype=float)
    radii = np.linspace(0.0, spread / w_min, 33)
    eta = radii[:, None, None] * sphere_grid(p.n)[None, :, :]
    grad = p.gradient()
    offsets = np.stack([g.evaluate_many(xi0 + eta) - float(g.evaluate(xi0)) for g in grad], axis=-1)
    reach = abs(t_max) * float(np.linalg.norm(offsets, axis=-1).max())
    half_width = (reach + 6.0 * w_max) / (1.0 - SHELL_FRACTION)
    spacing = math.pi * w_min / NYQUIST_WIDTHS
    points = 2 * scipy.fft.next_fast_len(math.ceil(half_width / spacing))
    if points > max_points:
        raise ResolutionError(
            f"Data of width {w_min:g} up to t = {t_max:g} need {points} points per axis, more than {max_points}"
        )
    logger.debug(f"Family grid: {points} points per axis, half-width {points * spacing / 2.0:.1f}, reach {reach:.1f}")
    return points, points * spacing / 2.0


def packet_widths(p: PolynomialSymbol, carrier: Sequence[float], t_min: float) -> tuple[float, ...]:
    """PACKET_WIDTHS times sqrt(lambda t_min), lambda the largest |eigenvalue| of the Hessian of P at the carrier.

    Packets of these widths start dispersing near t_min, whatever the carrier.
    """
    xi0 = np.asarray(carrier, dtype=float)
    hessian = np.array([[float(h.evaluate(xi0)) for h in row] for row in p.hessian()])
    curvature = float(np.abs(np.linalg.eigvalsh(hessian)).max())
    if curvature == 0.0:
        raise ValueError(f"P has a vanishing Hessian at the carrier {tuple(xi0)}")
    return tuple(k * math.sqrt(curvature * abs(t_min)) for k in PACKET_WIDTHS)


def build_family(
    p: PolynomialSymbol,
    regime: str,
    t_grid: Sequence[float],
    widths: Sequence[float] | None = None,
    a_cut: float | None = None,
    center_factor: float = 8.0,
    grid: tuple[int, float] | None = None,
    max_points: int = MAX_POINTS,
) -> list[GridFunction]:
    """Gaussians, or shifted Gaussians on the carrier center_factor * a_cut e_1 when a_cut is given.

    Unset widths take DEFAULT_WIDTHS of the regime, or packet_widths for shifted data. Without
    grid = (points_per_axis, extent) the box is sized by family_grid for the largest |t| of t_grid.
    """
    t_abs = [abs(t) for t in t_grid]
    carrier = None
    if a_cut is not None:
        carrier = np.zeros(p.n)
        carrier[0] = center_factor * a_cut
    if widths:
        widths = tuple(widths)
    elif carrier is not None:
        widths = packet_widths(p, carrier, min(t_abs))
    else:
        widths = DEFAULT_WIDTHS[regime]
    points, extent = grid or family_grid(p, widths, max(t_abs), carrier, SPREAD[regime], max_points)
    if a_cut is None:
        return [gaussian(p.n, points, extent, w) for w in widths]
    return [shifted_gaussian(p.n, points, extent, w, a_cut, center_factor) for w in widths]


def translate(f: GridFunction, shift: Sequence[int]) -> GridFunction:
    """Periodic translation by whole lattice steps."""
    return f.with_samples(np.roll(f.samples, tuple(shift), axis=tuple(range(f.n))))


def gaussian_evolution_exact(t: float, width: float, points: np.ndarray) -> np.ndarray:
    """e^{it|D|^2} applied to e^{-|x|^2/(2 w^2)}, evaluated at points of shape (..., n)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[-1]
    z = 1.0 - 2j * t / width**2
    return z ** (-n / 2.0) * np.exp(-np.sum(points**2, axis=-1) / (2.0 * width**2 * z))


def _ratio_curves(
    p: PolynomialSymbol, pair: IndexPair, family: Sequence[GridFunction], t_grid: Sequence[float], workers: int | None
) -> tuple[list[list[float]], int]:
    # L^2 is conserved on the periodic grid whatever reaches the boundary
    wrap_norm = None if pair.q == 2.0 else pair.q
    ratios, dropped = [], 0
    for u0 in family:
        norm0 = lp_norm(u0, pair.p)
        row = []
        for t in t_grid:
            try:
                row.append(lp_norm(evolve(p, u0, t, workers=workers, wrap_norm=wrap_norm), pair.q) / norm0)
            except ResolutionError as e:
                logger.warning(f"Dropped t={t:g} for one datum: {e}")
                row.append(math.nan)
                dropped += 1
        ratios.append(row)
    return ratios, dropped


def _family_fit(
    p: PolynomialSymbol,
    pair: IndexPair,
    family: Sequence[GridFunction],
    t_grid: Sequence[float],
    workers: int | None,
    min_samples: int,
) -> tuple[list[list[float]], list[float], float, float, int]:
    if len(family) < MIN_FAMILY:
        raise ValueError(f"The data family needs at least {MIN_FAMILY} initial data, got {len(family)}")
    ratios, dropped = _ratio_curves(p, pair, family, t_grid, workers)
    max_ratios = np.nanmax(np.array(ratios, dtype=float), axis=0)
    usable = [(t, r) for t, r in zip(t_grid, max_ratios, strict=True) if math.isfinite(r) and r > 0.0]
    if len(usable) < min_samples:
        raise FitError(f"Only {len(usable)} usable times after {dropped} dropped samples (need {min_samples})")
    slope = fit_power_law(usable, min_samples=min_samples)[0]
    error = slope_standard_error(usable, min_samples=min_samples)
    return ratios, [float(r) for r in max_ratios], slope, error, dropped


def _require_fit_pair(pair: IndexPair) -> None:
    if pair.classification in (PairClass.ENDPOINT_B, PairClass.ENDPOINT_D):
        raise EndpointPairError(
            f"({pair.p}, {pair.q}) is a Hardy/BMO endpoint ({pair.classification.value}); L^p norms do not apply"
        )
    if pair.classification is PairClass.OUTSIDE:
        raise EndpointPairError(f"({pair.p}, {pair.q}) is not admissible for m = {pair.m}")


def lpq_exponent_fit(
    p: PolynomialSymbol,
    pp: float,
    qq: float,
    family: Sequence[GridFunction] | None = None,
    t_grid: Sequence[float] | None = None,
    regime: str = "small_t",
    tolerance: float = 0.05,
    min_samples: int = 3,
    workers: int | None = None,
) -> NormEstimate:
    """Fit the time exponent of max over the family of ||u(t)||_q / ||u0||_p.

    Without a family, Gaussians of the regime's default widths are placed on a box sized for the
    largest time. The apex (2, 2) is accepted as a null test with predicted exponent 0.

    Raises:
        EndpointPairError: for endpoint or non-admissible pairs
        FitError: if fewer than min_samples times survive the resolution guards
        ValueError: for an unknown regime or a family of fewer than three data
    """
    if regime not in ("small_t", "large_t"):
        raise ValueError(f"Unknown regime {regime!r}")
    pair = admissible(pp, qq, p.m)
    _require_fit_pair(pair)
    t_grid = default_t_grid(regime) if t_grid is None else [float(t) for t in t_grid]
    family = family if family is not None else build_family(p, regime, t_grid)
    ratios, max_ratios, slope, error, dropped = _family_fit(p, pair, family, t_grid, workers, min_samples)
    if pair.classification is PairClass.APEX_A_EXCLUDED:
        predicted = 0.0
    elif regime == "small_t":
        predicted = small_t_exponent(p.n, p.m, pp, qq)
    else:
        predicted = large_t_exponent(p.n, p.m, pp, qq)
    secondary = young_exponent(p.n, p.m, qq) if regime == "large_t" and pp == 1.0 else None
    estimate = NormEstimate(
        pair=pair,
        regime=regime,
        t_grid=[float(t) for t in t_grid],
        ratios=ratios,
        max_ratios=max_ratios,
        fitted_exponent=slope,
        slope_error=error,
        predicted_exponent=predicted,
        secondary_prediction=secondary,
        tolerance=tolerance,
        dropped=dropped,
        passed=abs(slope - predicted) <= tolerance,
    )
    logger.info(f"L^{pp}-L^{qq} {regime}: fitted {slope:.4f} +- {error:.4f}, predicted {predicted:.4f}, passed={estimate.passed}")
    return estimate


def large_t_check(
    p: PolynomialSymbol,
    pp: float,
    qq: float,
    family: Sequence[GridFunction] | None = None,
    t_grid: Sequence[float] | None = None,
    tolerance: float = 0.1,
    workers: int | None = None,
) -> NormEstimate:
    """Large-t fit reported against n|1/q - 1/p'| - 1/m as an upper bound only: passes when the fitted
    exponent does not exceed the prediction by more than tolerance."""
    estimate = lpq_exponent_fit(p, pp, qq, family, t_grid, "large_t", tolerance, workers=workers)
    return estimate.model_copy(update={"passed": estimate.fitted_exponent <= estimate.predicted_exponent + tolerance})


def highfreq_check(
    p: PolynomialSymbol,
    pp: float,
    qq: float,
    a_cut: float,
    family: Sequence[GridFunction] | None = None,
    t_grid: Sequence[float] | None = None,
    tolerance: float = 0.1,
    center_factor: float = 8.0,
    workers: int | None = None,
) -> NormEstimate:
    """One exponent fitted across small and large t for data with spectrum in {|xi| > a_cut}.

    (n/m)(1/q - 1/p) bounds the decay for all t at once, so the check passes when the fitted exponent
    does not exceed it by more than tolerance. Nondegenerate high-frequency packets decay faster, at
    the stationary-phase rate n(1/q - 1/p)/2 reported as the secondary prediction.
    """
    pair = admissible(pp, qq, p.m)
    _require_fit_pair(pair)
    t_grid = default_t_grid("all_t") if t_grid is None else [float(t) for t in t_grid]
    if family is None:
        family = build_family(p, "all_t", t_grid, a_cut=a_cut, center_factor=center_factor)
    ratios, max_ratios, slope, error, dropped = _family_fit(p, pair, family, t_grid, workers, 3)
    predicted = small_t_exponent(p.n, p.m, pp, qq)
    estimate = NormEstimate(
        pair=pair,
        regime="all_t",
        t_grid=[float(t) for t in t_grid],
        ratios=ratios,
        max_ratios=max_ratios,
        fitted_exponent=slope,
        slope_error=error,
        predicted_exponent=predicted,
        secondary_prediction=small_t_exponent(p.n, 2, pp, qq),
        tolerance=tolerance,
        dropped=dropped,
        passed=slope <= predicted + tolerance,
    )
    logger.info(f"High-frequency L^{pp}-L^{qq} (a_cut={a_cut:g}): fitted {slope:.4f}, bound {predicted:.4f}")
    return estimate
