"""Envelope checks, sharpness and power-law fits for kernel samples."""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np
from loguru import logger

from fundsol.errors import FitError, FundsolError, RegimeError
from fundsol.fitting import fit_power_law
from fundsol.kernel import (
    CutoffSpec,
    closed_form_gaussian,
    compact_bandwidth,
    cutoff_for,
    grid_for,
    kernel_compact_many,
    kernel_eval_many,
    kernel_fft_points,
)
from fundsol.model import CompactDecayAudit, EnvelopeFit, EnvelopeSample, KernelMethod, KernelValue, SharpnessReport
from fundsol.symbol import MultiIndex, PolynomialSymbol, radial_symbol

__all__ = [
    "Envelope",
    "compact_decay_audit",
    "compact_envelope",
    "default_times",
    "derivative_kernel_check",
    "derivative_mu",
    "envelope",
    "envelope_check",
    "fit_power_law",
    "mu_exponent",
    "nu_exponent",
    "sharpness_check",
]

Regime = Literal["small_t", "large_t"]
REGIMES = ("small_t", "large_t")
SLOPE_TOLERANCE = 0.1
STABILITY_FACTOR = 2.0
DEFAULT_SCALES = tuple(float(c) for c in np.linspace(0.0, 8.0, 9))


def mu_exponent(m: int, n: int) -> Fraction:
    """mu = n(m-2) / (2(m-1))."""
    return Fraction(n * (m - 2), 2 * (m - 1))


def nu_exponent(m: int, n: int) -> Fraction:
    """nu = n / (2(m-1))."""
    return Fraction(n, 2 * (m - 1))


def derivative_mu(m: int, n: int, b: int) -> Fraction:
    """Spatial exponent for |alpha| = b derivatives, (mn - 2n - 2b) / (2(m-1)).

    Raises:
        ValueError: unless 0 <= b <= (mn - 2n) / 2
    """
    if b < 0 or 2 * b > m * n - 2 * n:
        raise ValueError(f"Derivative order {b} outside [0, {Fraction(m * n - 2 * n, 2)}] for m={m}, n={n}")
    return Fraction(m * n - 2 * n - 2 * b, 2 * (m - 1))


def _check_regime(regime: str, t: float) -> None:
    if regime not in REGIMES:
        raise RegimeError(f"Unknown regime {regime!r}")
    if t == 0.0:
        raise RegimeError("Envelopes are defined for t != 0")
    if regime == "small_t" and abs(t) > 1.0:
        raise RegimeError(f"small_t envelope needs |t| <= 1, got {t}")
    if regime == "large_t" and abs(t) < 1.0:
        raise RegimeError(f"large_t envelope needs |t| >= 1, got {t}")


@dataclass(frozen=True)
class Envelope:
    """Unit-constant two-regime envelope of |I(t, x)|.

    small_t: |t|^{-n/m} (1 + |t|^{-1/m} |x|)^{-mu}
    large_t: |t|^{-1/m} (1 + |t|^{-1} |x|)^{-mu}
    """

    regime: Regime
    m: int
    n: int
    mu_override: Fraction | None = None
    time_power: Fraction | None = None

    @property
    def mu(self) -> float:
        return float(self.mu_override if self.mu_override is not None else mu_exponent(self.m, self.n))

    @property
    def nu(self) -> float:
        return float(nu_exponent(self.m, self.n))

    def __call__(self, t: float, x_norm: float | np.ndarray) -> float | np.ndarray:
        _check_regime(self.regime, t)
        tt, m = abs(t), self.m
        if self.regime == "small_t":
            power = self.time_power if self.time_power is not None else Fraction(self.n, m)
            return tt ** (-float(power)) * (1.0 + tt ** (-1.0 / m) * x_norm) ** (-self.mu)
        return tt ** (-1.0 / m) * (1.0 + x_norm / tt) ** (-self.mu)


def envelope(regime: Regime, m: int, n: int, t: float, x: float | Sequence[float]) -> float:
    """Envelope value with C = 1 at time t and point x (or radius |x|)."""
    x_norm = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return float(Envelope(regime, m, n)(t, x_norm))


def compact_envelope(m: int, t: float, x: float | Sequence[float], k: int) -> float:
    """Bound shape of the low-frequency piece, |t|^{-1/m} (1 + |x|/|t|)^{-(k + 1/m)}."""
    if t == 0.0:
        raise RegimeError("The compact envelope is defined for t != 0")
    x_norm = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return abs(t) ** (-1.0 / m) * (1.0 + x_norm / abs(t)) ** (-(k + 1.0 / m))


def default_times(regime: Regime) -> list[float]:
    return [0.02, 0.05, 0.1] if regime == "small_t" else [1.0, 4.0, 16.0]


def _lattice(regime: Regime, m: int, t: float, scales: Sequence[float], direction: np.ndarray) -> np.ndarray:
    """Points x = c * L(t) * direction with L = t for large_t and t^{1/m} for small_t."""
    length = abs(t) if regime == "large_t" else abs(t) ** (1.0 / m)
    return np.array([c * length * direction for c in scales])


def _samples(values: list[KernelValue], env: Envelope) -> list[EnvelopeSample]:
    out = []
    for v in values:
        x_norm = float(np.linalg.norm(v.x))
        bound = float(env(v.t, x_norm))
        out.append(
            EnvelopeSample(t=v.t, x_norm=x_norm, modulus=v.modulus, envelope=bound, ratio=v.modulus / bound, method=v.method)
        )
    return out


def _ratio_pass(max_ratio: float, refined: float | None) -> tuple[float | None, bool]:
    if refined is None or not math.isfinite(max_ratio) or max_ratio <= 0.0:
        return None, False
    stability = refined / max_ratio
    return stability, 1.0 / STABILITY_FACTOR <= stability <= STABILITY_FACTOR


def _origin_exponent(samples: list[EnvelopeSample]) -> float | None:
    """Slope of log |I(t, 0)| against log t when at least three times carry an origin sample."""
    origin = sorted({(s.t, s.modulus) for s in samples if s.x_norm == 0.0 and s.modulus > 0.0})
    if len(origin) < 3:
        return None
    try:
        return fit_power_law(origin, min_samples=3)[0]
    except FitError:
        return None


def _sweep(
    evaluate,
    regime: Regime,
    m: int,
    times: Sequence[float],
    scales: Sequence[float],
    direction: np.ndarray,
    env: Envelope,
    refine: int,
    notes: list[str],
) -> list[EnvelopeSample]:
    samples = []
    for t in times:
        _check_regime(regime, t)
        points = _lattice(regime, m, t, scales, direction)
        try:
            samples.extend(_samples(evaluate(t, points, refine), env))
        except FundsolError as e:
            notes.append(f"t={t:g}, refine={refine}: {e}")
            logger.warning(f"Envelope sample at t={t:g} dropped: {e}")
    return samples


def envelope_check(
    p: PolynomialSymbol,
    regime: Regime,
    times: Sequence[float] | None = None,
    scales: Sequence[float] = DEFAULT_SCALES,
    direction: Sequence[float] | None = None,
    strategy: str = "auto",
    threads: int | None = None,
) -> EnvelopeFit:
    """max over the lattice of |I(t, x)| / envelope(t, x), then again at doubled kernel resolution.

    Args:
        p: Elliptic symbol
        regime: small_t or large_t
        times: Times of the lattice, inside the regime
        scales: Multiples c of the regime length scale, x = c * L(t) * direction
        direction: Unit direction of the sampled rays, defaults to e_1
        strategy: Kernel route
        threads: Worker cap for split evaluations

    Returns:
        The fit with all samples; kernel failures are recorded in notes
    """
    times = list(times or default_times(regime))
    direction = np.asarray(direction if direction is not None else np.eye(p.n)[0], dtype=float)
    env = Envelope(regime, p.m, p.n)
    cutoff = cutoff_for(p) if strategy != "fft" else None
    notes: list[str] = []

    def evaluate(t, points, refine):
        return kernel_eval_many(p, t, points, strategy=strategy, cutoff=cutoff, threads=threads, refine=refine)

    return _fit_from_sweeps(p, regime, env, evaluate, times, scales, direction, notes, f"|I(t,x)| / envelope for {p!r}")


def _fit_from_sweeps(p, regime, env, evaluate, times, scales, direction, notes, description) -> EnvelopeFit:
    samples = _sweep(evaluate, regime, p.m, times, scales, direction, env, 1, notes)
    refined = _sweep(evaluate, regime, p.m, times, scales, direction, env, 2, notes)
    max_ratio = max((s.ratio for s in samples), default=math.inf)
    refined_max = max((s.ratio for s in refined), default=None)
    stability, stable = _ratio_pass(max_ratio, refined_max)
    fit = EnvelopeFit(
        description=description,
        regime=regime,
        mu=env.mu,
        sample_count=len(samples),
        max_ratio=max_ratio,
        refined_max_ratio=refined_max,
        stability=stability,
        fitted_exponent=_origin_exponent(samples),
        passed=stable,
        samples=samples,
        notes=notes,
    )
    logger.info(f"Envelope check {regime}: max ratio {max_ratio:.4g}, stability {stability}, passed={fit.passed}")
    return fit


def derivative_kernel_check(
    p: PolynomialSymbol,
    alpha: MultiIndex,
    regime: Regime,
    times: Sequence[float] | None = None,
    scales: Sequence[float] = DEFAULT_SCALES,
    direction: Sequence[float] | None = None,
) -> EnvelopeFit:
    """Envelope check of d^alpha I against the envelope with the b-shifted exponent, b = |alpha|.

    The small-t time power is (n + b)/m for b > 0, from the scaling of xi^alpha e^{itP}.
    """
    b = sum(alpha)
    mu_b = derivative_mu(p.m, p.n, b)
    time_power = Fraction(p.n + b, p.m)
    env = Envelope(regime, p.m, p.n, mu_override=mu_b, time_power=time_power)
    times = list(times or default_times(regime))
    direction = np.asarray(direction if direction is not None else np.eye(p.n)[0], dtype=float)

    def evaluate(t, points, refine):
        grid = grid_for(p, t, float(np.linalg.norm(points, axis=1).max()))
        if refine > 1:
            grid = grid.refined(refine)
        return kernel_fft_points(p, t, points, grid, alpha=tuple(alpha))

    description = f"|d^{tuple(alpha)} I(t,x)| / envelope for {p!r}"
    return _fit_from_sweeps(p, regime, env, evaluate, times, scales, direction, [], description)


def sharpness_check(
    m: int,
    n: int = 2,
    window: tuple[float, float] = (8.0, 64.0),
    count: int = 12,
    tolerance: float = SLOPE_TOLERANCE,
) -> SharpnessReport:
    """q(x) = |I(1, x)| (1 + |x|)^{mu} over the window for P = |xi|^m, and the log-log slope of |I(1, x)|."""
    mu = float(mu_exponent(m, n))
    radii = np.geomspace(window[0], window[1], count)
    points = radii[:, None] * np.eye(n)[0][None, :]
    if m == 2:
        values = [closed_form_gaussian(1.0, x) for x in points]
    else:
        values = kernel_eval_many(radial_symbol(n, {m: 1}), 1.0, points, strategy="fft")
    moduli = np.array([v.modulus for v in values])
    q = moduli * (1.0 + radii) ** mu
    slope, _, _ = fit_power_law(zip(radii, moduli, strict=True), min_samples=min(5, count))
    env = Envelope("small_t", m, n)
    report = SharpnessReport(
        m=m,
        n=n,
        window=window,
        mu=mu,
        q_min=float(q.min()),
        q_max=float(q.max()),
        slope=slope,
        tolerance=tolerance,
        passed=bool(q.min() > 0.0 and abs(slope + mu) <= tolerance),
        samples=_samples(values, env),
    )
    logger.info(f"Sharpness m={m}, n={n}: slope {slope:.4f} against {-mu:.4f}, band ratio {report.band_ratio:.3g}")
    return report


def _joint_slope(samples: Sequence[EnvelopeSample], bins: int = 5) -> float:
    """Log-log slope of the largest |I_2| (1 + t + |x|)^{1/m} per geometric bin of 1 + t + |x|."""
    scale = np.array([1.0 + s.t + s.x_norm for s in samples])
    ratios = np.array([s.ratio for s in samples])
    edges = np.geomspace(scale.min(), scale.max() * (1.0 + 1e-12), bins + 1)
    index = np.digitize(scale, edges) - 1
    tops = [
        (math.sqrt(edges[b] * edges[b + 1]), float(ratios[index == b].max()))
        for b in range(bins)
        if np.any((index == b) & (ratios > 0.0))
    ]
    return fit_power_law(tops, min_samples=3)[0]


def compact_decay_audit(
    p: PolynomialSymbol,
    k: int = 2,
    t: float = 1.0,
    window: tuple[float, float] = (10.0, 100.0),
    count: int = 10,
    joint_times: Sequence[float] = (0.5, 1.0, 2.0, 4.0, 8.0),
    joint_radii: Sequence[float] = (0.0, 5.0, 10.0, 20.0, 40.0),
    cutoff: CutoffSpec | None = None,
) -> CompactDecayAudit:
    """Slope of |I_2(t, x)| over the window against -(k + 1/m), and the joint bound
    |I_2(t, x)| (1 + t + |x|)^{1/m} over a (t, |x|) sample set.

    When the window starts inside 2 t max |grad P| on the support of 1 - psi(P), where I_2 may still
    have stationary points, a second fit from that radius on is reported as shifted_slope. The joint
    bound holds when its maximum is finite and the binned maxima do not grow with 1 + t + |x| faster
    than SLOPE_TOLERANCE in log-log.
    """
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k}")
    cutoff = cutoff or cutoff_for(p)
    e1 = np.eye(p.n)[0]
    bound_slope = -(k + 1.0 / p.m)

    def radial_fit(lower: float, upper: float) -> tuple[np.ndarray, list[float], float]:
        radii = np.geomspace(lower, upper, count)
        values = kernel_compact_many(p, t, radii[:, None] * e1[None, :], cutoff, tol=1e-14)
        moduli = [v.modulus for v in values]
        return radii, moduli, fit_power_law(zip(radii, moduli, strict=True))[0]

    radii, moduli, slope = radial_fit(*window)
    shifted_window, shifted_slope = None, None
    stationary = 2.0 * compact_bandwidth(p, cutoff, t)
    if stationary > window[0]:
        shifted_window = (float(stationary), float(max(window[1], 4.0 * stationary)))
        shifted_slope = radial_fit(*shifted_window)[2]
        logger.info(f"Compact slope past the stationary region [{stationary:.3g}, {shifted_window[1]:.3g}]: {shifted_slope:.3f}")

    joint: list[EnvelopeSample] = []
    for tj in joint_times:
        for v in kernel_compact_many(p, tj, np.array(joint_radii)[:, None] * e1[None, :], cutoff):
            x_norm = float(np.linalg.norm(v.x))
            weight = (1.0 + tj + x_norm) ** (-1.0 / p.m)
            joint.append(
                EnvelopeSample(
                    t=tj, x_norm=x_norm, modulus=v.modulus, envelope=weight, ratio=v.modulus / weight, method=KernelMethod.COMPACT
                )
            )
    joint_max = max(s.ratio for s in joint)
    joint_slope = _joint_slope(joint)
    audit = CompactDecayAudit(
        k=k,
        t=t,
        window=(float(window[0]), float(window[1])),
        slope=slope,
        bound_slope=bound_slope,
        slope_passed=slope <= bound_slope,
        shifted_window=shifted_window,
        shifted_slope=shifted_slope,
        joint_max=joint_max,
        joint_slope=joint_slope,
        joint_passed=bool(math.isfinite(joint_max) and joint_slope <= SLOPE_TOLERANCE),
        samples=[
            EnvelopeSample(
                t=t,
                x_norm=float(r),
                modulus=mod,
                envelope=compact_envelope(p.m, t, float(r), k),
                ratio=mod / compact_envelope(p.m, t, float(r), k),
                method=KernelMethod.COMPACT,
            )
            for r, mod in zip(radii, moduli, strict=True)
        ]
        + joint,
    )
    logger.info(f"Compact decay k={k}: slope {slope:.3f} (bound {bound_slope:.3f}), joint slope {joint_slope:.3f}")
    return audit
