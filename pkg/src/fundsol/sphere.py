"""Quasi-uniform grids and small geometric helpers on the unit sphere S^{n-1}.

Only n = 2 (the unit circle) and n = 3 are supported.
"""

import math

import numpy as np

from fundsol.errors import SymbolError

DEFAULT_DENSITY = {2: 4096, 3: 8192}


def check_dimension(n: int) -> None:
    if n not in (2, 3):
        raise SymbolError(f"Sphere machinery supports n = 2 or n = 3, got n = {n}")


def sphere_area(n: int) -> float:
    """Surface measure of S^{n-1}."""
    check_dimension(n)
    return 2.0 * math.pi if n == 2 else 4.0 * math.pi


def circle_points(angles: np.ndarray) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def golden_points(count: int) -> np.ndarray:
    """Golden-spiral lattice of `count` nearly equal-area points on S^2."""
    k = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * k / count
    radius = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = k * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=-1)


def sphere_grid(n: int, density: int | None = None) -> np.ndarray:
    """Return a deterministic (density, n) array of unit vectors.

    Args:
        n: Ambient dimension, 2 or 3
        density: Number of points, defaults to DEFAULT_DENSITY[n]

    Returns:
        Angular lattice 2*pi*k/N for n = 2, golden spiral for n = 3
    """
    check_dimension(n)
    density = density or DEFAULT_DENSITY[n]
    if density < 8:
        raise SymbolError(f"Sphere density must be at least 8, got {density}")
    if n == 2:
        return circle_points(2.0 * math.pi * np.arange(density) / density)
    return golden_points(density)


def covering_radius(n: int, density: int) -> float:
    """Geodesic distance bound from any point of the sphere to the nearest grid point.

    Exact for the circle lattice; the usual equal-area estimate for the golden spiral.
    """
    check_dimension(n)
    if n == 2:
        return math.pi / density
    return math.sqrt(4.0 * math.pi / density)


def tangent_basis(omega: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at omega, shape (n - 1, n)."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] == 2:
        return np.array([[-omega[1], omega[0]]])
    helper = np.array([1.0, 0.0, 0.0]) if abs(omega[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, omega) * omega
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)
    return np.stack([e1, e2])


def project_tangent(omega: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v - np.dot(v, omega) * omega


def exp_map(omega: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Move from omega along the tangent vector v by geodesic length |v|."""
    length = float(np.linalg.norm(v))
    if length == 0.0:
        return np.array(omega, dtype=float)
    moved = math.cos(length) * omega + math.sin(length) * (v / length)
    return moved / np.linalg.norm(moved)


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle distance, vectorized over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] == 2:
        cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    else:
        cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, np.sum(a * b, axis=-1))


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise SymbolError("Zero vector has no direction")
    return v / norm


def direction_fan(n: int, count: int = 16) -> np.ndarray:
    """Fixed fan of test directions u used for per-direction audits."""
    check_dimension(n)
    if n == 2:
        return circle_points(2.0 * math.pi * (np.arange(count) + 0.25) / count)
    return golden_points(count)
