"""Fundamental solution I(t, x) = F^{-1}(e^{itP})(x) by three routes.

Fourier convention: F^{-1}g(x) = (2 pi)^{-n} * integral of e^{i<x, xi>} g(xi) d xi.

- fft: windowed and damped spectral samples, inverse FFT on a lattice or direct sums at points
- compact: the low-frequency piece I_2 with weight 1 - psi(P), tensor-product quadrature
- radial: the high-frequency piece I_1 through level sets s = P(xi) and the sphere integral Phi
"""

import math
import threading
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.fft
from loguru import logger

from fundsol.errors import BudgetExceeded, UnresolvedOscillation
from fundsol.grid import GridFunction
from fundsol.levelset import find_threshold, solve_rho_batch
from fundsol.model import KernelMethod, KernelValue
from fundsol.phase import amplitude, find_audit_threshold, phase_values, sphere_nodes
from fundsol.sphere import sphere_grid
from fundsol.symbol import MultiIndex, PolynomialSymbol

T_SWITCH = 4.0
X_FFT_MAX = 64.0
DEFAULT_MAX_POINTS = 4096
DEFAULT_MAX_COMPACT_NODES = 4096
DEFAULT_MAX_S_NODES = 400_000
WINDOW_MARGIN = 1.2
# t * window_level lower bound; the ramp error falls like its inverse cube
MIN_RAMP_PHASE = 64.0
EPS_SCALE = 1e-4
TAIL_FACTOR = 20.0
GL_HIGH, GL_LOW = 12, 8


def smoothstep(x: np.ndarray) -> np.ndarray:
    """Quintic C^2 ramp from 0 at x <= 0 to 1 at x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class CutoffSpec:
    """High-frequency cutoff psi(s): 0 for s <= a1, 1 for s >= 2 a1."""

    a1: float

    def psi(self, s) -> np.ndarray:
        return smoothstep((np.asarray(s, dtype=float) - self.a1) / self.a1)

    def complement(self, s) -> np.ndarray:
        return 1.0 - self.psi(s)


def cutoff_for(p: PolynomialSymbol) -> CutoffSpec:
    return CutoffSpec(find_audit_threshold(p))


@dataclass(frozen=True)
class FFTGridSpec:
    """Frequency box [-extent, extent)^n sampled with points_per_axis points per axis.

    Spectral samples carry the damping e^{-eps P} and the window 1 - ramp((P - S)/S), S = window_level,
    which vanishes at the box boundary.
    """

    n: int
    points_per_axis: int
    extent: float
    eps: float
    window_level: float
    t: float = 0.0
    x_max: float = 0.0

    @property
    def frequency_spacing(self) -> float:
        return 2.0 * self.extent / self.points_per_axis

    @property
    def spatial_extent(self) -> float:
        return self.points_per_axis * math.pi / (2.0 * self.extent)

    def frequency_axis(self) -> np.ndarray:
        return (np.arange(self.points_per_axis) - self.points_per_axis // 2) * self.frequency_spacing

    def coarsened(self) -> "FFTGridSpec":
        return FFTGridSpec(self.n, self.points_per_axis // 2, self.extent, self.eps, self.window_level, self.t, self.x_max)

    def with_eps(self, eps: float) -> "FFTGridSpec":
        return FFTGridSpec(self.n, self.points_per_axis, self.extent, eps, self.window_level, self.t, self.x_max)

    def refined(self, factor: int, max_points: int = DEFAULT_MAX_POINTS) -> "FFTGridSpec":
        """Same box with factor times the points per axis.

        Raises:
            UnresolvedOscillation: if the refined grid exceeds max_points per axis
        """
        count = self.points_per_axis * factor
        if count > max_points:
            raise UnresolvedOscillation(f"Refining {self.points_per_axis} points per axis by {factor} exceeds {max_points}")
        return replace(self, points_per_axis=count)


def _gradient_norm(p: PolynomialSymbol, points: np.ndarray) -> np.ndarray:
    return np.sqrt(sum(g.evaluate_many(points) ** 2 for g in _gradient(p)))


@lru_cache(maxsize=64)
def _gradient(p: PolynomialSymbol):
    return p.gradient()


def _max_gradient_within(p: PolynomialSymbol, radius: float, directions: np.ndarray) -> float:
    return max(float(_gradient_norm(p, r * directions).max()) for r in np.linspace(0.0, radius, 17)[1:])


def _stationary_radius(p: PolynomialSymbol, t: float, x_max: float, directions: np.ndarray) -> float:
    """Radius beyond which t |grad P| exceeds max(x_max, 1) in every sampled direction."""
    if t == 0.0:
        return 8.0
    target = max(x_max, 1.0)

    def enough(r: float) -> bool:
        return t * float(_gradient_norm(p, r * directions).min()) >= target

    lo, hi = 0.0, 1.0
    for _ in range(80):
        if enough(hi):
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if enough(mid) else (mid, hi)
    return hi


def grid_for(
    p: PolynomialSymbol,
    t: float,
    x_max: float,
    points_per_axis: int | None = None,
    max_points: int = DEFAULT_MAX_POINTS,
    eps: float | None = None,
) -> FFTGridSpec:
    """Size the FFT grid so that |x| <= x_max is resolved at time t.

    Stationary points xi of x + t grad P(xi) for |x| <= x_max lie where the window equals 1,
    and the window level S satisfies t S >= MIN_RAMP_PHASE. The box holds the window support and the
    frequency step gives 4 samples per period of the phase x.xi + tP(xi) over it.

    Raises:
        UnresolvedOscillation: if the requested or the maximum grid is too coarse
    """
    n, tt = p.n, abs(t)
    directions = sphere_grid(n, 64 if n == 2 else 128)
    r_star = _stationary_radius(p, tt, x_max, directions)
    level = max(float(p.evaluate_many(r * directions).max()) for r in np.linspace(0.0, WINDOW_MARGIN * r_star, 9)[1:])
    a = find_threshold(p, sphere_density=256 if n == 2 else 512, check_ellipticity=False).a
    level = max(level, a, float(p.evaluate_many(np.zeros((1, n)))[0]) + 1.0)
    if tt > 0.0:
        level = max(level, MIN_RAMP_PHASE / tt)
    outer = solve_rho_batch(p, 2.0 * level, directions)[0]
    extent = 1.02 * float(outer.max())
    bandwidth = tt * _max_gradient_within(p, extent, directions) + x_max
    needed = 4.0 * extent * bandwidth / math.pi
    count = points_per_axis or max(64, 2 ** math.ceil(math.log2(max(needed, 1.0))))
    if count < needed:
        raise UnresolvedOscillation(f"{count} points per axis do not resolve t = {t:g}, |x| <= {x_max:g} (need {needed:.0f})")
    if count > max_points:
        raise UnresolvedOscillation(f"Resolving t = {t:g}, |x| <= {x_max:g} needs {count} points per axis (cap {max_points})")
    spec = FFTGridSpec(n, count, extent, eps if eps is not None else EPS_SCALE / level, level, t, x_max)
    logger.debug(f"FFT grid for t={t:g}, |x|<={x_max:g}: N={count}, extent={extent:.4g}, window level {level:.4g}")
    return spec


def spectral_samples(p: PolynomialSymbol, t: float, grid: FFTGridSpec, alpha: MultiIndex | None = None) -> np.ndarray:
    """Windowed samples e^{(-eps + i t) P(xi)} (i xi)^alpha on the frequency lattice."""
    if alpha is not None and (len(alpha) != grid.n or any(a < 0 for a in alpha)):
        raise ValueError(f"Multi-index {tuple(alpha)} does not match dimension {grid.n}")
    axis = grid.frequency_axis()
    mesh = np.meshgrid(*([axis] * grid.n), indexing="ij")
    values = p.evaluate_many(np.stack(mesh, axis=-1))
    window = 1.0 - smoothstep((values - grid.window_level) / grid.window_level)
    samples = window * np.exp((-grid.eps + 1j * t) * np.where(window > 0.0, values, 0.0))
    if alpha is not None:
        for coordinate, a in zip(mesh, alpha, strict=True):
            if a:
                samples = samples * (1j * coordinate) ** a
    return samples


def _inverse_transform(samples: np.ndarray, grid: FFTGridSpec, workers: int | None) -> np.ndarray:
    shifted = scipy.fft.ifftshift(samples)
    values = scipy.fft.ifftn(shifted, workers=workers)
    return scipy.fft.fftshift(values) * (grid.extent / math.pi) ** grid.n


def kernel_fft(
    p: PolynomialSymbol,
    t: float,
    grid: FFTGridSpec,
    alpha: MultiIndex | None = None,
    workers: int | None = None,
    estimate_error: bool = True,
) -> GridFunction:
    """I(t, .) on the spatial lattice of the grid by one inverse FFT.

    The error estimate adds the change under eps -> eps/2 and the change against the
    half-resolution grid on the lattice points both grids share.
    """
    values = _inverse_transform(spectral_samples(p, t, grid, alpha), grid, workers)
    result = GridFunction(grid.n, grid.points_per_axis, grid.spatial_extent, values)
    if not estimate_error:
        return result
    half_eps = _inverse_transform(spectral_samples(p, t, grid.with_eps(grid.eps / 2.0), alpha), grid, workers)
    error = np.abs(values - half_eps)
    coarse_grid = grid.coarsened()
    coarse = _inverse_transform(spectral_samples(p, t, coarse_grid, alpha), coarse_grid, workers)
    quarter = grid.points_per_axis // 4
    inner = tuple(slice(quarter, 3 * quarter) for _ in range(grid.n))
    resolution = np.abs(values[inner] - coarse)
    error += resolution.max()
    error[inner] += resolution - resolution.max()
    result.error = error
    logger.info(f"kernel_fft t={t:g}: N={grid.points_per_axis}, max error estimate {error.max():.3e}")
    return result


def _direct_sums(samples: np.ndarray, axis: np.ndarray, spacing: float, points: np.ndarray) -> np.ndarray:
    """(2 pi)^{-n} sum_k samples_k e^{i<x, xi_k>} spacing^n at arbitrary points, axis by axis."""
    n = samples.ndim
    out = np.empty(len(points), dtype=complex)
    for j, x in enumerate(points):
        reduced = samples
        for i in range(n):
            reduced = np.tensordot(np.exp(1j * x[i] * axis), reduced, axes=(0, 0))
        out[j] = reduced
    return out * (spacing / (2.0 * math.pi)) ** n


def kernel_fft_points(
    p: PolynomialSymbol,
    t: float,
    points: Sequence[Sequence[float]],
    grid: FFTGridSpec | None = None,
    alpha: MultiIndex | None = None,
) -> list[KernelValue]:
    """FFT-route values at arbitrary points by direct sums over the same spectral samples."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x_max = float(np.linalg.norm(points, axis=1).max())
    grid = grid or grid_for(p, t, x_max)
    if x_max > grid.spatial_extent / 2.0:
        raise UnresolvedOscillation(f"|x| = {x_max:g} lies outside the resolved region of the grid")
    axis = grid.frequency_axis()
    values = _direct_sums(spectral_samples(p, t, grid, alpha), axis, grid.frequency_spacing, points)
    half_eps = _direct_sums(spectral_samples(p, t, grid.with_eps(grid.eps / 2.0), alpha), axis, grid.frequency_spacing, points)
    coarse = grid.coarsened()
    coarse_values = _direct_sums(spectral_samples(p, t, coarse, alpha), coarse.frequency_axis(), coarse.frequency_spacing, points)
    errors = np.abs(values - half_eps) + np.abs(values - coarse_values)
    return [
        KernelValue(t=t, x=x.tolist(), value=complex(v), method=KernelMethod.FFT, error_estimate=float(e))
        for x, v, e in zip(points, values, errors, strict=True)
    ]


def _compact_extent(p: PolynomialSymbol, cutoff: CutoffSpec) -> float:
    directions = sphere_grid(p.n, 256 if p.n == 2 else 512)
    return 1.02 * float(solve_rho_batch(p, 2.0 * cutoff.a1, directions)[0].max())


def compact_bandwidth(p: PolynomialSymbol, cutoff: CutoffSpec, t: float = 1.0) -> float:
    """|t| max |grad P| over the support of 1 - psi(P); I_2(t, x) has no stationary points beyond it."""
    directions = sphere_grid(p.n, 64 if p.n == 2 else 128)
    return abs(t) * _max_gradient_within(p, _compact_extent(p, cutoff), directions)


def _compact_rule(p: PolynomialSymbol, t: float, points: np.ndarray, cutoff: CutoffSpec, extent: float, count: int) -> np.ndarray:
    spacing = 2.0 * extent / count
    axis = -extent + (np.arange(count) + 0.5) * spacing
    mesh = np.meshgrid(*([axis] * p.n), indexing="ij")
    values = p.evaluate_many(np.stack(mesh, axis=-1))
    weight = cutoff.complement(values)
    samples = weight * np.exp(1j * t * np.where(weight > 0.0, values, 0.0))
    return _direct_sums(samples, axis, spacing, points)


def kernel_compact_many(
    p: PolynomialSymbol,
    t: float,
    points: Sequence[Sequence[float]],
    cutoff: CutoffSpec,
    tol: float = 1e-9,
    max_nodes: int = DEFAULT_MAX_COMPACT_NODES,
) -> list[KernelValue]:
    """I_2(t, x) = (2 pi)^{-n} integral of e^{i(<x, xi> + t P(xi))} (1 - psi(P(xi))) d xi at many points.

    The integrand is supported in {P <= 2 a1}; node counts per axis double until two rules agree.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    extent = _compact_extent(p, cutoff)
    bandwidth = float(np.linalg.norm(points, axis=1).max()) + compact_bandwidth(p, cutoff, t)
    count = max(32, 2 ** math.ceil(math.log2(max(16.0 * extent * bandwidth / math.pi, 1.0))))
    scale = (2.0 * extent / (2.0 * math.pi)) ** p.n
    values = _compact_rule(p, t, points, cutoff, extent, count)
    while True:
        if 2 * count > max_nodes:
            raise BudgetExceeded(f"Compact quadrature needs more than {max_nodes} nodes per axis")
        finer = _compact_rule(p, t, points, cutoff, extent, 2 * count)
        errors = np.abs(finer - values)
        count *= 2
        values = finer
        if errors.max() <= tol * scale:
            break
    logger.debug(f"kernel_compact: {count} nodes per axis, max error {errors.max():.3e}")
    return [
        KernelValue(t=t, x=x.tolist(), value=complex(v), method=KernelMethod.COMPACT, error_estimate=float(e))
        for x, v, e in zip(points, values, errors, strict=True)
    ]


def kernel_compact(p: PolynomialSymbol, t: float, x: Sequence[float], cutoff: CutoffSpec, tol: float = 1e-9) -> KernelValue:
    """The low-frequency piece I_2 at one point."""
    return kernel_compact_many(p, t, [x], cutoff, tol=tol)[0]


@lru_cache(maxsize=32)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=32)
def _sphere_rule(n: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = sphere_nodes(n, level)
    return nodes.omegas, nodes.weights


class PhiEvaluator:
    """Phi(r s^{1/m}, s) along s for one direction u and radius r.

    Direct values come from a trapezoid (circle) or Gauss-Legendre x trapezoid (S^2) rule with at
    least 10 nodes per oscillation of e^{i lam phi}; their error estimate is the change against the
    rule of half the level. Beyond `lattice_start` values are linearly interpolated from a lattice
    that resolves the internal oscillation r s^{1/m} phi; the lattice is populated by one writer
    at a time and read concurrently.
    """

    def __init__(self, p: PolynomialSymbol, u: np.ndarray, r: float, spread: float, lattice_start: float = math.inf):
        self.p, self.u, self.r, self.spread = p, u, r, spread
        self.lattice_start = lattice_start
        self._lattice_s = np.empty(0)
        self._lattice_phi = np.empty(0, dtype=complex)
        self._lattice_err = np.empty(0)
        self._lock = threading.Lock()
        self.direct_evaluations = 0

    def _level(self, lam: float) -> int:
        # circle: level nodes over 2 pi; S^2: 2 level azimuthal nodes
        if self.p.n == 2:
            return 2 ** math.ceil(math.log2(max(64.0, 10.0 * lam * self.spread + 32.0)))
        return 2 ** math.ceil(math.log2(max(16.0, 5.0 * lam * self.spread + 8.0)))

    def _rule_sum(self, s_values: np.ndarray, level: int) -> np.ndarray:
        p, m = self.p, self.p.m
        omegas, weights = _sphere_rule(p.n, level)
        out = np.empty(len(s_values), dtype=complex)
        chunk = max(1, 2**20 // len(omegas))
        for start in range(0, len(s_values), chunk):
            s_chunk = s_values[start : start + chunk]
            s_rows = np.repeat(s_chunk, len(omegas))
            tiled = np.tile(omegas, (len(s_chunk), 1))
            b, rho = amplitude(p, s_rows, tiled)
            phase = s_rows ** (-1.0 / m) * rho * (tiled @ self.u)
            lam = self.r * s_rows ** (1.0 / m)
            integrand = (np.exp(1j * lam * phase) * b).reshape(len(s_chunk), len(omegas))
            out[start : start + chunk] = integrand @ weights
        return out

    def direct(self, s_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Phi at each s and the change against the half-level rule."""
        s_values = np.asarray(s_values, dtype=float)
        values = np.empty(len(s_values), dtype=complex)
        errors = np.empty(len(s_values))
        levels = np.array([self._level(self.r * s ** (1.0 / self.p.m)) for s in s_values])
        for level in np.unique(levels):
            index = np.flatnonzero(levels == level)
            values[index] = self._rule_sum(s_values[index], int(level))
            errors[index] = np.abs(values[index] - self._rule_sum(s_values[index], int(level) // 2))
        self.direct_evaluations += len(s_values)
        return values, errors

    def internal_frequency(self, s: np.ndarray) -> np.ndarray:
        m = self.p.m
        return self.r * self.spread * np.asarray(s) ** (1.0 / m - 1.0) / m + 1.0 / np.asarray(s)

    def _ensure_lattice(self, s_end: float) -> None:
        with self._lock:
            if self._lattice_s.size and self._lattice_s[-1] >= s_end:
                return
            nodes = [self._lattice_s[-1]] if self._lattice_s.size else [self.lattice_start]
            while nodes[-1] < s_end:
                nodes.append(nodes[-1] + 0.02 * 2.0 * math.pi / float(self.internal_frequency(nodes[-1])))
            fresh = np.array(nodes[1:] if self._lattice_s.size else nodes)
            values, errors = self.direct(fresh)
            self._lattice_s = np.concatenate([self._lattice_s, fresh])
            self._lattice_phi = np.concatenate([self._lattice_phi, values])
            self._lattice_err = np.concatenate([self._lattice_err, errors])

    def interpolated(self, s_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated values and a per-node bound: interpolation error plus the lattice rule error."""
        self._ensure_lattice(float(np.max(s_values)))
        grid, values = self._lattice_s, self._lattice_phi
        interp = np.interp(s_values, grid, values.real) + 1j * np.interp(s_values, grid, values.imag)
        second = np.zeros(len(grid))
        if len(grid) > 2:
            second[1:-1] = np.abs(values[2:] - 2.0 * values[1:-1] + values[:-2]) / 8.0
            second[0], second[-1] = second[1], second[-2]
        cell = np.clip(np.searchsorted(grid, s_values), 0, len(grid) - 1)
        return interp, second[cell] + np.interp(s_values, grid, self._lattice_err)

    def __call__(self, s_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s_values = np.asarray(s_values, dtype=float)
        values = np.empty(len(s_values), dtype=complex)
        errors = np.zeros(len(s_values))
        near = s_values < self.lattice_start
        if near.any():
            values[near], errors[near] = self.direct(s_values[near])
        if (~near).any():
            values[~near], errors[~near] = self.interpolated(s_values[~near])
        return values, errors


def _panel_edges(t: float, a1: float, s_end: float, phi: PhiEvaluator, scale: float = 1.0) -> np.ndarray:
    edges = [a1]
    # ramp region [a1, 2 a1] gets its own panels
    while edges[-1] < min(2.0 * a1, s_end):
        s = edges[-1]
        step = scale * min(2.0 * math.pi / (t + float(phi.internal_frequency(s))), a1 / 4.0)
        edges.append(min(s + step, 2.0 * a1))
    while edges[-1] < s_end:
        s = edges[-1]
        step = scale * min(2.0 * math.pi / (t + float(phi.internal_frequency(s))), s / 4.0)
        edges.append(min(s + step, s_end))
    return np.array(edges)


def _integrand(p: PolynomialSymbol, t: float, eps: float, cutoff: CutoffSpec, phi: PhiEvaluator, s: np.ndarray):
    values, phi_err = phi(s)
    weight = np.exp((-eps + 1j * t) * s) * s ** (p.n / p.m - 1.0) * cutoff.psi(s)
    return weight * values, np.abs(weight) * phi_err


def _panel_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = _gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * nodes[None, :]).reshape(-1)
    w = (half[:, None] * weights[None, :]).reshape(-1)
    return s, w


def _tail(p: PolynomialSymbol, t: float, eps: float, phi: PhiEvaluator, s_end: float) -> tuple[complex, float]:
    """Abel-summed integral of e^{its} G(s) over [s_end, inf) by repeated integration by parts."""
    h = min(0.05 * 2.0 * math.pi / float(phi.internal_frequency(s_end)), 0.01 * s_end)
    s = s_end + h * np.arange(4)
    values, errors = phi.direct(s)
    weight = np.exp(-eps * s) * s ** (p.n / p.m - 1.0)
    g = values * weight
    d0 = g[0]
    d1 = (-11.0 * g[0] + 18.0 * g[1] - 9.0 * g[2] + 2.0 * g[3]) / (6.0 * h)
    d2 = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / h**2
    it = 1j * t
    terms = [d0 / it, -d1 / it**2, d2 / it**3]
    return complex(-np.exp(1j * t * s_end) * sum(terms)), float(abs(terms[-1]) + errors[0] * weight[0] / t)


def _phase_spread(p: PolynomialSymbol, u: np.ndarray, a1: float) -> float:
    sampled = phase_values(p, u, 2.0 * a1, sphere_grid(p.n, 64 if p.n == 2 else 128))
    return float(np.abs(sampled).max())


def kernel_radial(
    p: PolynomialSymbol,
    t: float,
    x: Sequence[float],
    eps: float | None = None,
    cutoff: CutoffSpec | None = None,
    use_lattice: bool = True,
    max_s_nodes: int = DEFAULT_MAX_S_NODES,
    tol: float = 1e-14,
    panel_scale: float = 1.0,
) -> KernelValue:
    """High-frequency piece I_1(t, x) = (2 pi)^{-n} J_eps with

    J_eps = integral over s of e^{-eps s + its} s^{n/m-1} psi(s) Phi(r s^{1/m}, s), r = |x|.

    Gauss-Legendre panels span at most one local period of both e^{its} and the internal
    oscillation r s^{1/m} phi. The integral stops at S = min(S_max(eps), max(20 s0, 20/t, 4 a1)),
    s0 = (r/t)^{m/(m-1)}, and the remainder is summed by integration by parts.

    Raises:
        BudgetExceeded: if more than max_s_nodes direct Phi evaluations would be needed and
            the interpolation lattice is disabled
    """
    if t <= 0.0:
        raise ValueError(f"kernel_radial needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    u = x / r if r > 0.0 else np.eye(p.n)[0]
    cutoff = cutoff or cutoff_for(p)
    eps = eps if eps is not None else EPS_SCALE / t
    m, a1 = p.m, cutoff.a1
    spread = _phase_spread(p, u, a1)
    s0 = (r / t) ** (m / (m - 1.0)) if r > 0.0 else 0.0
    s_max_eps = math.log(1.0 / tol) / eps
    s_end = min(s_max_eps, max(TAIL_FACTOR * s0, TAIL_FACTOR / t, 4.0 * a1))

    lattice_start = math.inf
    if r > 0.0:
        # internal frequency falls below t / 4 from here on
        switch = (4.0 * r * spread / (m * t)) ** (m / (m - 1.0))
        lattice_start = max(switch, 2.0 * a1)
    phi = PhiEvaluator(p, u, r, spread, lattice_start if use_lattice else math.inf)
    edges = _panel_edges(t, a1, s_end, phi, panel_scale)
    if (len(edges) - 1) * (GL_HIGH + GL_LOW) > max_s_nodes:
        if not use_lattice:
            raise BudgetExceeded(f"Radial quadrature needs {(len(edges) - 1) * (GL_HIGH + GL_LOW)} s-nodes (cap {max_s_nodes})")
        logger.warning(
            f"Radial quadrature at t={t:g}, r={r:g} exceeds {max_s_nodes} nodes; interpolating Phi from s = {2 * a1:g}"
        )
        phi.lattice_start = 2.0 * a1

    s_hi, w_hi = _panel_rule(edges, GL_HIGH)
    s_lo, w_lo = _panel_rule(edges, GL_LOW)
    f_hi, e_hi = _integrand(p, t, eps, cutoff, phi, s_hi)
    f_lo, _ = _integrand(p, t, eps, cutoff, phi, s_lo)
    value = complex(np.sum(w_hi * f_hi))
    error = abs(value - complex(np.sum(w_lo * f_lo))) + float(np.sum(w_hi * e_hi))
    if phi.lattice_start < math.inf and s_end > phi.lattice_start:
        error *= 2.0
    if s_end < s_max_eps:
        tail, tail_error = _tail(p, t, eps, phi, s_end)
        value += tail
        error += tail_error
    norm = (2.0 * math.pi) ** (-p.n)
    logger.debug(
        f"kernel_radial t={t:g}, r={r:g}: {len(edges) - 1} panels up to s={s_end:.4g}, {phi.direct_evaluations} direct Phi"
    )
    return KernelValue(t=t, x=x.tolist(), value=norm * value, method=KernelMethod.RADIAL, error_estimate=norm * error)


def kernel_split(
    p: PolynomialSymbol,
    t: float,
    x: Sequence[float],
    cutoff: CutoffSpec | None = None,
    eps: float | None = None,
    refine: int = 1,
) -> KernelValue:
    """I = I_1 + I_2 for t > 0; refine > 1 shortens the s-panels and tightens the compact rule."""
    cutoff = cutoff or cutoff_for(p)
    high = kernel_radial(p, t, x, eps=eps, cutoff=cutoff, panel_scale=1.0 / refine)
    low = kernel_compact(p, t, x, cutoff, tol=1e-9 / refine**2)
    return KernelValue(
        t=t,
        x=list(high.x),
        value=high.value + low.value,
        method=KernelMethod.SUM,
        error_estimate=high.error_estimate + low.error_estimate,
    )


def choose_strategy(t: float, x: Sequence[float]) -> str:
    """fft for |t| <= T_SWITCH and |x| <= X_FFT_MAX, split otherwise."""
    return "fft" if abs(t) <= T_SWITCH and float(np.linalg.norm(x)) <= X_FFT_MAX else "split"


def kernel_eval_many(
    p: PolynomialSymbol,
    t: float,
    points: Sequence[Sequence[float]],
    strategy: str = "auto",
    cutoff: CutoffSpec | None = None,
    threads: int | None = None,
    refine: int = 1,
) -> list[KernelValue]:
    """Kernel values at many points; negative t uses I(-t, x) = conj(I(t, -x)) for real P.

    Args:
        p: Elliptic symbol
        t: Time
        points: (k, n) array of spatial points
        strategy: auto, fft or split
        cutoff: High-frequency cutoff for the split route
        threads: Worker cap for split evaluations
        refine: Resolution multiplier (FFT points per axis, inverse s-panel length)

    Returns:
        One KernelValue per point, in input order
    """
    if strategy not in ("auto", "fft", "split"):
        raise ValueError(f"Unknown strategy {strategy!r}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if t < 0.0:
        mirrored = kernel_eval_many(p, -t, -points, strategy, cutoff, threads, refine)
        return [
            KernelValue(t=t, x=x.tolist(), value=v.value.conjugate(), method=v.method, error_estimate=v.error_estimate)
            for x, v in zip(points, mirrored, strict=True)
        ]
    if t == 0.0 and strategy == "split":
        raise ValueError("The split route needs t != 0")
    routes = [strategy if strategy != "auto" else choose_strategy(t, x) for x in points]
    if t == 0.0:
        routes = ["fft"] * len(points)
    results: list[KernelValue | None] = [None] * len(points)
    fft_index = [i for i, route in enumerate(routes) if route == "fft"]
    if fft_index:
        subset = points[fft_index]
        grid = grid_for(p, t, float(np.linalg.norm(subset, axis=1).max()))
        if refine > 1:
            grid = grid.refined(refine)
        for i, value in zip(fft_index, kernel_fft_points(p, t, subset, grid), strict=True):
            results[i] = value
    split_index = [i for i, route in enumerate(routes) if route == "split"]
    if split_index:
        cutoff = cutoff or cutoff_for(p)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = pool.map(lambda j: kernel_split(p, t, points[j], cutoff, refine=refine), split_index)
            for i, value in zip(split_index, values, strict=True):
                results[i] = value
    return results


def kernel_eval(
    p: PolynomialSymbol, t: float, x: Sequence[float], strategy: str = "auto", cutoff: CutoffSpec | None = None
) -> KernelValue:
    """Dispatching kernel evaluation at one point."""
    return kernel_eval_many(p, t, [x], strategy, cutoff)[0]


def closed_form_gaussian(t: float, x: Sequence[float], n: int | None = None) -> KernelValue:
    """Exact I(t, x) for P = |xi|^2: (-4 pi i t)^{-n/2} e^{-i|x|^2/(4t)}."""
    if t == 0.0:
        raise ValueError("The Gaussian kernel is singular at t = 0")
    x = np.asarray(x, dtype=float)
    n = n or len(x)
    value = (-4j * math.pi * t) ** (-n / 2.0) * np.exp(-1j * float(np.dot(x, x)) / (4.0 * t))
    return KernelValue(t=t, x=x.tolist(), value=complex(value), method=KernelMethod.CLOSED_FORM, error_estimate=0.0)
