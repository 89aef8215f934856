"""Spherical phase phi(s, omega) = s^{-1/m} rho(s, omega) <u, omega>, its critical points and the sphere integral."""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from loguru import logger
from numpy.polynomial.legendre import leggauss

from fundsol.errors import BranchJumpError, BudgetExceeded, CapMisalignmentError, CriticalPointError, FitError
from fundsol.fitting import fit_power_law
from fundsol.levelset import EPS, find_threshold, solve_rho_batch
from fundsol.model import (
    CriticalPoint,
    DecompositionAudit,
    InequalityFit,
    PhaseCurveRow,
    PhasePath,
    RadialPhaseAudit,
    SphereIntegralSample,
)
from fundsol.sphere import circle_points, direction_fan, exp_map, geodesic_distance, sphere_grid, tangent_basis, unit
from fundsol.symbol import Polynomial, PolynomialSymbol

DEFAULT_TOL_CRIT = 1e-8
DEFAULT_CAP_RADIUS = 0.5
DEFAULT_JUMP_BOUND = 0.25
DEFAULT_MAX_NODES = 2**22
SECOND_DERIVATIVE_STEP = 1e-4


@lru_cache(maxsize=64)
def _derivatives(p: Polynomial) -> tuple[list[Polynomial], list[list[Polynomial]]]:
    return p.gradient(), p.hessian()


@lru_cache(maxsize=64)
def _is_radial(p: PolynomialSymbol) -> bool:
    return p.is_radial()


def _gradient_at(p: Polynomial, xi: np.ndarray) -> np.ndarray:
    grads, _ = _derivatives(p)
    return np.array([g.evaluate_many(xi[None, :])[0] for g in grads])


def _hessian_at(p: Polynomial, xi: np.ndarray) -> np.ndarray:
    _, hess = _derivatives(p)
    return np.array([[h.evaluate_many(xi[None, :])[0] for h in row] for row in hess])


def phase_values(p: PolynomialSymbol, u: np.ndarray, s: float, omegas: np.ndarray) -> np.ndarray:
    """phi(s, omega) over an array of directions."""
    omegas = np.atleast_2d(omegas)
    rho = solve_rho_batch(p, s, omegas)[0]
    return s ** (-1.0 / p.m) * rho * (omegas @ np.asarray(u, dtype=float))


def phase_value(p: PolynomialSymbol, u: Sequence[float], s: float, omega: Sequence[float]) -> float:
    """phi(s, omega) = s^{-1/m} rho(s, omega) <u, omega>."""
    return float(phase_values(p, np.asarray(u, dtype=float), s, np.asarray(omega, dtype=float)[None, :])[0])


def phase_ds(p: PolynomialSymbol, u: np.ndarray, s: float, omegas: np.ndarray) -> np.ndarray:
    """Partial s-derivative of phi at fixed omega."""
    omegas = np.atleast_2d(omegas)
    rho, _, deriv, _ = solve_rho_batch(p, s, omegas)
    m = p.m
    return (-rho / (m * s) + 1.0 / deriv) * s ** (-1.0 / m) * (omegas @ u)


def tangential_gradient(p: PolynomialSymbol, u: np.ndarray, s: float, omega: np.ndarray) -> np.ndarray:
    """Gradient of phi(s, .) on the sphere at omega, from implicit differentiation of rho."""
    rho = solve_rho_batch(p, s, omega[None, :])[0][0]
    grad = _gradient_at(p, rho * omega)
    v = u - np.dot(u, omega) * grad / np.dot(grad, omega)
    v = v - np.dot(v, omega) * omega
    return s ** (-1.0 / p.m) * rho * v


def _tangential_second_derivatives(p: PolynomialSymbol, u: np.ndarray, s: float, omega: np.ndarray) -> np.ndarray:
    delta = SECOND_DERIVATIVE_STEP
    basis = tangent_basis(omega)
    points = [omega]
    for e in basis:
        points += [exp_map(omega, delta * e), exp_map(omega, -delta * e)]
    values = phase_values(p, u, s, np.stack(points))
    return np.array([(values[1 + 2 * j] - 2.0 * values[0] + values[2 + 2 * j]) / delta**2 for j in range(len(basis))])


def _kkt_newton(
    p: PolynomialSymbol, u: np.ndarray, s: float, xi0: np.ndarray, max_iter: int = 80
) -> tuple[np.ndarray, float, int]:
    """Damped Newton on grad P(xi) = mu u, P(xi) = s.

    Solutions are the critical points of <u, xi> on the level surface, i.e. of phi(s, .).
    """
    n = p.n
    xi = np.array(xi0, dtype=float)
    mu = float(np.dot(_gradient_at(p, xi), u))
    s_scale = max(s, 1.0)

    def merit(xi, mu):
        g = _gradient_at(p, xi)
        residual = np.concatenate([g - mu * u, [p.evaluate_many(xi[None, :])[0] - s]])
        scaled = np.concatenate([residual[:n] / max(np.linalg.norm(g), 1e-300), residual[n:] / s_scale])
        return residual, float(np.linalg.norm(scaled)), g

    residual, value, grad = merit(xi, mu)
    for iteration in range(1, max_iter + 1):
        if value <= 1e-13:
            return xi, mu, iteration
        jacobian = np.zeros((n + 1, n + 1))
        jacobian[:n, :n] = _hessian_at(p, xi)
        jacobian[:n, n] = -u
        jacobian[n, :n] = grad
        try:
            step = np.linalg.solve(jacobian, -residual)
        except np.linalg.LinAlgError as e:
            raise CriticalPointError(f"Singular critical-point Jacobian at s = {s:g}") from e
        damping = 1.0
        while True:
            trial_xi, trial_mu = xi + damping * step[:n], mu + damping * step[n]
            trial_residual, trial_value, trial_grad = merit(trial_xi, trial_mu)
            if trial_value < (1.0 - 1e-4 * damping) * value or damping < 1e-6:
                break
            damping *= 0.5
        if trial_value >= value and value <= 1e-10:
            return xi, mu, iteration
        xi, mu, residual, value, grad = trial_xi, trial_mu, trial_residual, trial_value, trial_grad
        logger.debug(f"critical-point Newton s={s:g} iteration {iteration}: merit {value:.3e}, damping {damping:g}")
    if value <= 1e-10:
        return xi, mu, max_iter
    raise CriticalPointError(f"Critical-point Newton did not converge at s = {s:g} (merit {value:.3e})")


def _critical_point_from(
    p: PolynomialSymbol, u: np.ndarray, s: float, branch: str, seed: np.ndarray, tol_crit: float
) -> CriticalPoint:
    if _is_radial(p):
        omega, iterations = (u if branch == "+" else -u), 0
    else:
        rho_seed = solve_rho_batch(p, s, seed[None, :])[0][0]
        xi, mu, iterations = _kkt_newton(p, u, s, rho_seed * seed)
        if (mu > 0.0) != (branch == "+"):
            raise CriticalPointError(f"Newton for branch {branch} at s = {s:g} converged to the opposite branch")
        omega = xi / np.linalg.norm(xi)
    gradient_norm = float(np.linalg.norm(tangential_gradient(p, u, s, omega)))
    if gradient_norm > tol_crit:
        raise CriticalPointError(f"Tangential gradient {gradient_norm:.3e} exceeds {tol_crit:g} at s = {s:g}, branch {branch}")
    second = _tangential_second_derivatives(p, u, s, omega)
    extreme = float(second.max()) if branch == "+" else float(second.min())
    if (branch == "+" and extreme >= 0.0) or (branch == "-" and extreme <= 0.0):
        kind = "maximum" if branch == "+" else "minimum"
        raise CriticalPointError(f"Branch {branch} critical point at s = {s:g} is not a strict {kind}")
    return CriticalPoint(
        s=s,
        branch=branch,
        omega=omega.tolist(),
        phase_value=phase_value(p, u, s, omega),
        tangential_gradient_norm=gradient_norm,
        second_derivative=extreme,
        iterations=iterations,
    )


def _scan_seeds(p: PolynomialSymbol, u: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    grid = sphere_grid(p.n, 256 if p.n == 2 else 512)
    values = phase_values(p, u, s, grid)
    return grid[int(np.argmax(values))], grid[int(np.argmin(values))]


def find_critical_points(
    p: PolynomialSymbol,
    u: Sequence[float],
    s: float,
    seeds: tuple[np.ndarray, np.ndarray] | None = None,
    tol_crit: float = DEFAULT_TOL_CRIT,
    check_duplicates: bool = True,
) -> tuple[CriticalPoint, CriticalPoint]:
    """Maximizer (branch +) and minimizer (branch -) of phi(s, .) on the sphere.

    Newton runs from the seeds (default +u and -u). With check_duplicates, a second run from
    the extreme points of a coarse scan must land on the same points; a mismatch means
    phi(s, .) has more than one critical point of that kind and is surfaced as a warning.

    Args:
        p: Symbol
        u: Unit direction
        s: Level above the audit threshold
        seeds: Starting directions for the two branches
        tol_crit: Bound on the tangential gradient at the solution
        check_duplicates: Compare against Newton runs seeded from a coarse scan

    Returns:
        The two critical points (plus, minus)
    """
    u = unit(u)
    seed_plus, seed_minus = seeds if seeds is not None else (u, -u)
    plus = _critical_point_from(p, u, s, "+", unit(seed_plus), tol_crit)
    minus = _critical_point_from(p, u, s, "-", unit(seed_minus), tol_crit)
    if check_duplicates and not _is_radial(p):
        scan_plus, scan_minus = _scan_seeds(p, u, s)
        for point, scan_seed in ((plus, scan_plus), (minus, scan_minus)):
            try:
                other = _critical_point_from(p, u, s, point.branch, scan_seed, tol_crit)
            except CriticalPointError as e:
                logger.warning(f"Scan-seeded Newton failed for branch {point.branch} at s = {s:g}: {e}")
                point.duplicate_warning = True
                continue
            if geodesic_distance(np.array(point.omega), np.array(other.omega)) > 1e-6:
                logger.warning(f"Distinct branch {point.branch} critical points at s = {s:g}: {point.omega} and {other.omega}")
                point.duplicate_warning = True
    return plus, minus


def _derivative_fit(points: list[CriticalPoint], m: int) -> tuple[float, float | None]:
    """Fit |omega'(s)| <= c (1 + s)^{-1-1/m} and the log-log slope of |omega'(s)|."""
    samples = []
    constant = 0.0
    for a, b in zip(points[:-1], points[1:], strict=True):
        ds = b.s - a.s
        step = float(geodesic_distance(np.array(a.omega), np.array(b.omega)))
        if step <= 1e-11:
            continue
        rate, s_mid = step / ds, math.sqrt(a.s * b.s)
        samples.append((s_mid, rate))
        constant = max(constant, rate * (1.0 + s_mid) ** (1.0 + 1.0 / m))
    try:
        slope = fit_power_law(samples)[0]
    except FitError:
        slope = None
    return constant, slope


def critical_path(
    p: PolynomialSymbol,
    u: Sequence[float],
    s_grid: Sequence[float],
    jump_bound: float = DEFAULT_JUMP_BOUND,
    tol_crit: float = DEFAULT_TOL_CRIT,
) -> PhasePath:
    """Continue omega_plus(s) and omega_minus(s) along an increasing s-grid.

    Raises:
        BranchJumpError: if consecutive points of a branch are more than jump_bound apart
    """
    u = unit(u)
    s_grid = [float(s) for s in s_grid]
    branches: dict[str, list[CriticalPoint]] = {"+": [], "-": []}
    seeds = (u, -u)
    for i, s in enumerate(s_grid):
        check = i in (0, len(s_grid) - 1)
        plus, minus = find_critical_points(p, u, s, seeds=seeds, tol_crit=tol_crit, check_duplicates=check)
        for point in (plus, minus):
            previous = branches[point.branch]
            if previous:
                jump = float(geodesic_distance(np.array(previous[-1].omega), np.array(point.omega)))
                if jump > jump_bound:
                    raise BranchJumpError(
                        f"Branch {point.branch} jumped by {jump:.3g} rad between s = {previous[-1].s:g} and {s:g}"
                    )
            previous.append(point)
        seeds = (np.array(plus.omega), np.array(minus.omega))

    constants, slopes = {}, {}
    for branch, points in branches.items():
        constants[branch], slopes[branch] = _derivative_fit(points, p.m)
    logger.info(f"Critical paths over {len(s_grid)} levels: derivative constants {constants}, slopes {slopes}")
    return PhasePath(
        u=u.tolist(),
        s_grid=s_grid,
        points_plus=branches["+"],
        points_minus=branches["-"],
        derivative_constant=constants,
        derivative_slope=slopes,
        limit_plus=branches["+"][-1].omega,
        limit_minus=branches["-"][-1].omega,
    )


def find_audit_threshold(
    p: PolynomialSymbol, fan: np.ndarray | None = None, a: float | None = None, safety: float = 2.0
) -> float:
    """Smallest scanned s >= a where both branches converge with correct signs for every fan direction, times safety."""
    a = a if a is not None else find_threshold(p, check_ellipticity=False).a
    fan = fan if fan is not None else direction_fan(p.n)
    s = a
    while s <= 2.0**30:
        try:
            for u in fan:
                plus, minus = find_critical_points(p, u, s, check_duplicates=False)
                if plus.phase_value <= 0.0 or minus.phase_value >= 0.0:
                    raise CriticalPointError(f"Wrong phase signs at s = {s:g}")
            logger.info(f"Critical-point audit threshold a1 = {safety * s:g} (first valid level {s:g})")
            return safety * s
        except CriticalPointError as e:
            logger.debug(f"a1 scan: level {s:g} rejected: {e}")
            s *= 2.0
    raise CriticalPointError("No audit threshold a1 found up to s = 2^30")


def radial_phase(p: PolynomialSymbol, u: Sequence[float], t: float, r: float, s: float, branch: str) -> float:
    """phi_pm(t, r, s) = s t + r s^{1/m} phi(s, omega_pm(s))."""
    plus, minus = find_critical_points(p, u, s, check_duplicates=False)
    point = plus if branch == "+" else minus
    return s * t + r * s ** (1.0 / p.m) * point.phase_value


def _radial_phase_derivatives(p: PolynomialSymbol, u: np.ndarray, r: float, t: float, path: PhasePath, branch: str) -> np.ndarray:
    """Columns: d_s phi_pm, d^2_s phi_pm, d^3_s phi_pm along the path.

    The first derivative uses the critical-point identity d_s phi_pm = t + r <u, omega_pm> d_s rho.
    Higher derivatives difference that identity with nearby continued critical points.
    """
    points = path.points_plus if branch == "+" else path.points_minus

    def oscillating_part(s: float, seed: np.ndarray) -> float:
        seeds = (seed, -seed) if branch == "+" else (-seed, seed)
        plus, minus = find_critical_points(p, u, s, seeds=seeds, check_duplicates=False)
        omega = np.array((plus if branch == "+" else minus).omega)
        deriv = solve_rho_batch(p, s, omega[None, :])[2][0]
        return r * float(np.dot(u, omega)) / deriv

    rows = []
    for point in points:
        s, omega = point.s, np.array(point.omega)
        d1 = oscillating_part(s, omega)
        h2 = s * EPS ** (1.0 / 3.0)
        d2 = (oscillating_part(s + h2, omega) - oscillating_part(s - h2, omega)) / (2.0 * h2)
        h3 = s * EPS ** (1.0 / 4.0)
        d3 = (oscillating_part(s + h3, omega) - 2.0 * d1 + oscillating_part(s - h3, omega)) / h3**2
        rows.append((t + d1, d2, d3))
    return np.array(rows)


def _envelope_crosscheck(p: PolynomialSymbol, u: np.ndarray, path: PhasePath) -> float:
    """Largest relative gap between the envelope derivative and total differences of phi(s, omega_plus(s))."""
    gaps = []
    for a, b in zip(path.points_plus[:-1], path.points_plus[1:], strict=True):
        total = (b.phase_value - a.phase_value) / (b.s - a.s)
        s_mid = math.sqrt(a.s * b.s)
        omega = unit(np.array(a.omega) + np.array(b.omega))
        partial = float(phase_ds(p, u, s_mid, omega[None, :])[0])
        gaps.append(abs(total - partial) / max(abs(partial), 1e-300))
    return max(gaps, default=0.0)


def _fit(
    name: str, lower: np.ndarray | None, upper: np.ndarray | None, ref_lower, ref_upper, need_positive: bool
) -> InequalityFit:
    c1 = float(np.min(lower)) if lower is not None else None
    c2 = float(np.max(upper)) if upper is not None else None
    r1 = float(np.min(ref_lower)) if ref_lower is not None else None
    r2 = float(np.max(ref_upper)) if ref_upper is not None else None

    def close(a, b):
        if a is None:
            return True
        if a == b:
            return True
        return b is not None and a * b > 0 and max(abs(a), abs(b)) / min(abs(a), abs(b)) < 2.0

    stable = close(c1, r1) and close(c2, r2)
    finite = all(c is None or math.isfinite(c) for c in (c1, c2))
    ordered = c1 is None or c2 is None or c1 <= c2 * (1.0 + 1e-12)
    positive = not need_positive or (c1 is not None and c1 > 0.0)
    passed = stable and finite and ordered and positive
    return InequalityFit(name=name, c1=c1, c2=c2, refined_c1=r1, refined_c2=r2, stable=stable, passed=passed)


def _inequality_quotients(p: PolynomialSymbol, u: np.ndarray, t: float, r: float, path: PhasePath) -> dict[str, tuple]:
    m = p.m
    s = np.array(path.s_grid)
    plus_values = np.array([pt.phase_value for pt in path.points_plus])
    minus_values = np.array([pt.phase_value for pt in path.points_minus])
    dplus = _radial_phase_derivatives(p, u, r, t, path, "+")
    dminus = _radial_phase_derivatives(p, u, r, t, path, "-")
    scale1 = r * s ** (1.0 / m - 1.0)
    scale2 = r * s ** (1.0 / m - 2.0)
    scale3 = r * s ** (1.0 / m - 3.0)
    bounds = np.concatenate([plus_values, -minus_values])
    higher = np.concatenate(
        [np.abs(dplus[:, 1]) / scale2, np.abs(dminus[:, 1]) / scale2, np.abs(dplus[:, 2]) / scale3, np.abs(dminus[:, 2]) / scale3]
    )
    return {
        "phase_bounds": (bounds, bounds, True),
        "plus_slope": ((dplus[:, 0] - t) / scale1, (dplus[:, 0] - t) / scale1, True),
        "minus_slope": ((t - dminus[:, 0]) / scale1, (t - dminus[:, 0]) / scale1, True),
        "minus_curvature": (np.abs(dminus[:, 1]) / scale2, np.abs(dminus[:, 1]) / scale2, True),
        "higher_derivatives": (None, higher, False),
    }


def phase_inequality_audit(
    p: PolynomialSymbol,
    u: Sequence[float],
    t: float,
    r: float,
    s_grid: Sequence[float],
) -> RadialPhaseAudit:
    """Fit the constants of the radial phase inequalities over s_grid.

    Checked families: c1 <= +-phi(s, omega_pm) <= c2; d_s phi_+ >= t + c1 r s^{1/m-1};
    t - c2 r s^{1/m-1} <= d_s phi_- <= t - c1 r s^{1/m-1}; c1 r s^{1/m-2} <= |d^2_s phi_-| <= c2 r s^{1/m-2};
    |d^k_s phi_pm| <= c2 r s^{1/m-k} for k = 2, 3. Every family is refitted on a refined s-grid.

    Returns:
        Audit with per-family constants, the stationary level s0 = (r/t)^{m/(m-1)} and its segment
    """
    u = unit(u)
    s_grid = np.asarray(s_grid, dtype=float)
    refined_grid = np.geomspace(s_grid[0], s_grid[-1], 2 * len(s_grid) - 1)
    path = critical_path(p, u, s_grid)
    refined_path = critical_path(p, u, refined_grid)
    gap = _envelope_crosscheck(p, u, refined_path)
    if gap > 1e-3:
        logger.warning(f"Envelope derivative differs from total differences by {gap:.2e} (relative)")

    quotients = _inequality_quotients(p, u, t, r, path)
    refined = _inequality_quotients(p, u, t, r, refined_path)
    fits = []
    for name, (lower, upper, need_positive) in quotients.items():
        ref_lower, ref_upper, _ = refined[name]
        fits.append(_fit(name, lower, upper, ref_lower, ref_upper, need_positive))

    m = p.m
    bounds = fits[0]
    minus_fit = next(f for f in fits if f.name == "minus_slope")
    scale1 = r * s_grid ** (1.0 / m - 1.0)
    d_minus = t - quotients["minus_slope"][0] * scale1
    curve = [
        PhaseCurveRow(s=float(s), d_minus=float(d), lower=float(t - minus_fit.c2 * k), upper=float(t - minus_fit.c1 * k))
        for s, d, k in zip(s_grid, d_minus, scale1, strict=True)
    ]
    s0 = (r / t) ** (m / (m - 1.0))
    seg_lo = (bounds.c1 / 2.0) ** (m / (m - 1.0)) * s0 if bounds.c1 and bounds.c1 > 0 else 0.0
    seg_hi = (2.0 * bounds.c2) ** (m / (m - 1.0)) * s0
    passed = all(f.passed for f in fits)
    logger.info(f"Phase inequality audit t={t:g}, r={r:g}: passed={passed}")
    return RadialPhaseAudit(
        t=t,
        r=r,
        s_grid=s_grid.tolist(),
        s0=s0,
        segment_lower=seg_lo,
        segment_upper=seg_hi,
        inequalities=fits,
        passed=passed,
        minus_slope_curve=curve,
    )


def _bump(x: np.ndarray) -> np.ndarray:
    """C-infinity bump with value 1 at 0, supported in |x| < 1."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        values = np.exp(1.0 - 1.0 / (1.0 - np.where(inside, x * x, 0.0)))
    return np.where(inside, values, 0.0)


@dataclass(frozen=True)
class PartitionOfUnity:
    """Bumps phi_+ and phi_- on caps around the limit critical points and phi_0 = 1 - phi_+ - phi_-."""

    center_plus: np.ndarray
    center_minus: np.ndarray
    cap_radius: float = DEFAULT_CAP_RADIUS

    def __post_init__(self):
        separation = float(geodesic_distance(self.center_plus, self.center_minus))
        if separation <= 2.0 * self.cap_radius:
            raise CapMisalignmentError(f"Caps of radius {self.cap_radius} around centers {separation:.3g} rad apart overlap")

    def weights(self, omegas: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        plus = _bump(geodesic_distance(omegas, self.center_plus) / self.cap_radius)
        minus = _bump(geodesic_distance(omegas, self.center_minus) / self.cap_radius)
        return plus, minus, 1.0 - plus - minus

    def contains(self, branch: str, omega: np.ndarray) -> bool:
        center = self.center_plus if branch == "+" else self.center_minus
        return float(geodesic_distance(np.asarray(omega), center)) < self.cap_radius


def partition_of_unity(
    p: PolynomialSymbol, u: Sequence[float], s_max: float, cap_radius: float = DEFAULT_CAP_RADIUS
) -> PartitionOfUnity:
    """Partition centered on omega_pm(s_max), the estimated limits of the critical paths."""
    plus, minus = find_critical_points(p, u, s_max)
    return PartitionOfUnity(np.array(plus.omega), np.array(minus.omega), cap_radius)


def phase_gradient_floor(p: PolynomialSymbol, u: Sequence[float], s: float, pou: PartitionOfUnity) -> float:
    """Sampled minimum of |grad phi(s, .)| where phi_0 is at least 1/2."""
    u = unit(u)
    grid = sphere_grid(p.n, 512)
    _, _, rest = pou.weights(grid)
    norms = [np.linalg.norm(tangential_gradient(p, u, s, w)) for w in grid[rest >= 0.5]]
    return float(min(norms))


@dataclass
class SphereNodes:
    omegas: np.ndarray
    weights: np.ndarray


def sphere_nodes(n: int, level: int) -> SphereNodes:
    """Trapezoid nodes on the circle, Gauss-Legendre times trapezoid on S^2."""
    if n == 2:
        angles = 2.0 * math.pi * np.arange(level) / level
        return SphereNodes(circle_points(angles), np.full(level, 2.0 * math.pi / level))
    z, wz = leggauss(level)
    azimuth = 2.0 * math.pi * np.arange(2 * level) / (2 * level)
    zz, aa = np.meshgrid(z, azimuth, indexing="ij")
    radius = np.sqrt(1.0 - zz**2)
    omegas = np.stack([radius * np.cos(aa), radius * np.sin(aa), zz], axis=-1).reshape(-1, 3)
    weights = (wz[:, None] * np.full(2 * level, math.pi / level)[None, :]).reshape(-1)
    return SphereNodes(omegas, weights)


def _node_count(n: int, level: int) -> int:
    return level if n == 2 else 2 * level * level


def amplitude(p: PolynomialSymbol, s: float, omegas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """b(s, omega) = s^{1-n/m} rho^{n-1} d_s rho and rho itself."""
    rho, _, deriv, _ = solve_rho_batch(p, s, omegas)
    return s ** (1.0 - p.n / p.m) * rho ** (p.n - 1) / deriv, rho


def sphere_quadrature(
    p: PolynomialSymbol,
    u: Sequence[float],
    lam: float,
    s: float,
    weight_fns: Sequence[Callable[[np.ndarray], np.ndarray]] = (),
    tol: float = 1e-10,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> tuple[np.ndarray, float]:
    """Integrals of e^{i lam phi} b w over the sphere for w = 1 and each weight function.

    Node counts double until two consecutive rules agree to tol relative to the integral of |b w|.

    Returns:
        Array of integrals (first entry without weight), error estimate of the last doubling
    """
    u = unit(u)
    n = p.n
    sampled = phase_values(p, u, s, sphere_grid(n, 64))
    spread = float(sampled.max() - sampled.min())
    level = 64 if n == 2 else 32
    while level < 4.0 * lam * spread / (1.0 if n == 2 else 2.0):
        level *= 2

    def rule(level: int) -> tuple[np.ndarray, float]:
        if _node_count(n, level) > max_nodes:
            raise BudgetExceeded(f"Sphere quadrature needs more than {max_nodes} nodes at lambda = {lam:g}, s = {s:g}")
        nodes = sphere_nodes(n, level)
        b, rho = amplitude(p, s, nodes.omegas)
        phase = s ** (-1.0 / p.m) * rho * (nodes.omegas @ u)
        integrand = np.exp(1j * lam * phase) * b * nodes.weights
        weights = [np.ones_like(b)] + [w(nodes.omegas) for w in weight_fns]
        values = np.array([np.sum(integrand * w) for w in weights])
        scale = max(float(np.sum(np.abs(b) * nodes.weights)), 1e-300)
        return values, scale

    values, scale = rule(level)
    while True:
        finer, scale = rule(2 * level)
        error = float(np.max(np.abs(finer - values)))
        level *= 2
        values = finer
        if error <= tol * scale:
            return values, error


def sphere_integral(p: PolynomialSymbol, u: Sequence[float], lam: float, s: float, tol: float = 1e-10) -> complex:
    """Phi(lam, s) = integral over the sphere of e^{i lam phi(s, omega)} b(s, omega)."""
    return complex(sphere_quadrature(p, u, lam, s, tol=tol)[0][0])


def stationary_decomposition(
    p: PolynomialSymbol, u: Sequence[float], lam: float, s: float, pou: PartitionOfUnity
) -> SphereIntegralSample:
    """Split Phi(lam, s) with the partition of unity and extract the stationary amplitudes.

    Psi_pm = lam^{(n-1)/2} e^{-i lam phi(s, omega_pm(s))} Phi_pm.

    Raises:
        CapMisalignmentError: if omega_pm(s) is outside its cap
    """
    u = unit(u)
    plus, minus = find_critical_points(p, u, s, seeds=(pou.center_plus, pou.center_minus), check_duplicates=False)
    for point in (plus, minus):
        if not pou.contains(point.branch, np.array(point.omega)):
            raise CapMisalignmentError(f"Critical point of branch {point.branch} at s = {s:g} lies outside its cap")
    values, error = sphere_quadrature(
        p, u, lam, s, weight_fns=(lambda w: pou.weights(w)[0], lambda w: pou.weights(w)[1], lambda w: pou.weights(w)[2])
    )
    phi, phi_plus, phi_minus, psi0 = (complex(v) for v in values)
    factor = lam ** ((p.n - 1) / 2.0)
    return SphereIntegralSample(
        lam=lam,
        s=s,
        phi=phi,
        phi_plus=phi_plus,
        phi_minus=phi_minus,
        psi0=psi0,
        psi_plus=factor * np.exp(-1j * lam * plus.phase_value) * phi_plus,
        psi_minus=factor * np.exp(-1j * lam * minus.phase_value) * phi_minus,
        error_estimate=error,
    )


def decomposition_audit(
    p: PolynomialSymbol,
    u: Sequence[float],
    s: float,
    lams: Sequence[float] | None = None,
    cap_radius: float = DEFAULT_CAP_RADIUS,
) -> DecompositionAudit:
    """Stationary decomposition over a lambda sweep at level s.

    Passes when |Psi_pm| vary by less than a factor 2, |Psi_0| lambda^2 decreases across the sweep
    and the three pieces add back to Phi.
    """
    lams = np.asarray(lams if lams is not None else np.geomspace(10.0, 1000.0, 9), dtype=float)
    pou = partition_of_unity(p, u, s, cap_radius)
    samples = [stationary_decomposition(p, u, float(lam), s, pou) for lam in lams]

    def variation(values: list[float]) -> float:
        return max(values) / min(values) if min(values) > 0.0 else math.inf

    psi_variation = {
        "plus": variation([abs(x.psi_plus) for x in samples]),
        "minus": variation([abs(x.psi_minus) for x in samples]),
    }
    weighted = [abs(x.psi0) * x.lam**2 for x in samples]
    decreasing = weighted[-1] < weighted[0]
    positive = [(x.lam, w) for x, w in zip(samples, weighted, strict=True) if w > 0.0]
    if decreasing and len(positive) >= 3:
        try:
            decreasing = fit_power_law(positive, min_samples=3)[0] < 0.0
        except FitError:
            decreasing = False
    reconstruction = max(abs(x.phi - (x.phi_plus + x.phi_minus + x.psi0)) / max(abs(x.phi), 1e-300) for x in samples)
    passed = all(v < 2.0 for v in psi_variation.values()) and decreasing and reconstruction <= 1e-8
    logger.info(f"Stationary decomposition at s={s:g}: Psi variation {psi_variation}, Psi_0 lam^2 decreasing={decreasing}")
    return DecompositionAudit(
        s=s,
        samples=samples,
        psi_variation=psi_variation,
        psi0_weighted_decreasing=decreasing,
        max_reconstruction_error=reconstruction,
        passed=passed,
    )
