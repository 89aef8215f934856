"""Least-squares power-law fits on log-log data."""

from collections.abc import Iterable

import numpy as np

from fundsol.errors import FitError


def fit_power_law(samples: Iterable[tuple[float, float]], min_samples: int = 5) -> tuple[float, float, float]:
    """Fit v = exp(intercept) * a^slope by ordinary least squares on (log a, log v).

    Args:
        samples: Pairs (abscissa, value), both positive
        min_samples: Minimum number of pairs

    Returns:
        slope, intercept, RMS residual in log space
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[0] < min_samples:
        raise FitError(f"Need at least {min_samples} samples for a power-law fit, got {len(data)}")
    a, v = data[:, 0], data[:, 1]
    if np.any(a <= 0.0) or np.any(v <= 0.0) or not np.all(np.isfinite(data)):
        raise FitError("Power-law fit needs finite positive abscissae and values")
    x, y = np.log(a), np.log(v)
    design = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ np.array([slope, intercept]) - y) ** 2)))
    return float(slope), float(intercept), residual


def slope_standard_error(samples: Iterable[tuple[float, float]], min_samples: int = 3) -> float:
    """Standard error of the fitted log-log slope."""
    data = np.asarray(list(samples), dtype=float)
    slope, intercept, _ = fit_power_law(data, min_samples=min_samples)
    x, y = np.log(data[:, 0]), np.log(data[:, 1])
    dof = max(len(x) - 2, 1)
    sigma2 = float(np.sum((y - (slope * x + intercept)) ** 2)) / dof
    return float(np.sqrt(sigma2 / np.sum((x - x.mean()) ** 2)))
