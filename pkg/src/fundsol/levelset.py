"""Level-set radius rho(s, omega) of P(rho * omega) = s and its perturbation sigma."""

import math
from collections.abc import Sequence

import numpy as np
import numpy.polynomial.polynomial as npp
from loguru import logger

from fundsol.errors import LevelSetError, NoValidThreshold, RootNotConverged
from fundsol.model import RadialRoot, SigmaAudit, SigmaAuditRow, ThresholdA
from fundsol.sphere import DEFAULT_DENSITY, exp_map, sphere_grid, tangent_basis
from fundsol.symbol import PolynomialSymbol, require_elliptic

EPS = np.finfo(float).eps
DEFAULT_TOL_REL = 1e-12
DEFAULT_MAX_ITER = 200
DEFAULT_SCAN_MAX = 2.0**20

# Central finite-difference stencils: offsets in units of h and weights, divided by h^k
FD_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def _batched_roots(coefs: np.ndarray) -> np.ndarray:
    """Roots of many polynomials at once through stacked companion matrices.

    Args:
        coefs: Ascending coefficients, shape (N, d + 1), nonzero leading coefficient

    Returns:
        Complex roots, shape (N, d)
    """
    count, degree = coefs.shape[0], coefs.shape[1] - 1
    monic = coefs[:, :-1] / coefs[:, -1:]
    companion = np.zeros((count, degree, degree))
    if degree > 1:
        companion[:, np.arange(1, degree), np.arange(degree - 1)] = 1.0
    companion[:, :, -1] = -monic
    return np.linalg.eigvals(companion)


def critical_radial_values(p: PolynomialSymbol, omegas: np.ndarray) -> np.ndarray:
    """Largest value of rho -> P(rho * omega) at its positive critical points, per omega.

    Returns -inf where the radial profile has no positive critical point.
    """
    coefs = p.radial_coefficients(omegas)
    deriv = npp.polyder(coefs.T, axis=0).T
    roots = _batched_roots(deriv)
    near_real = np.abs(roots.imag) <= 1e-7 * (1.0 + np.abs(roots))
    rho_c = np.where(near_real & (roots.real > 0.0), roots.real, np.nan)
    values = _profile_at(coefs, rho_c)
    values = np.where(np.isnan(rho_c), -np.inf, values)
    return values.max(axis=1)


def _profile_at(coefs: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Evaluate each radial profile (row of coefs) at each column of rho."""
    result = np.zeros_like(rho, dtype=float)
    filled = np.nan_to_num(rho)
    for k in range(coefs.shape[1] - 1, -1, -1):
        result = result * filled + coefs[:, k : k + 1]
    return result


def find_threshold(
    p: PolynomialSymbol,
    sphere_density: int | None = None,
    s_scan_max: float = DEFAULT_SCAN_MAX,
    check_ellipticity: bool = True,
) -> ThresholdA:
    """Smallest scanned s = 2^j from which the level-set radius is unique on every grid direction.

    For fixed omega, P(rho * omega) = s has exactly one positive root, crossing with positive
    slope, iff P(0) < s and every positive critical value of the radial profile lies below s.
    The condition is monotone in s.

    Args:
        p: Elliptic symbol
        sphere_density: Number of sphere grid points
        s_scan_max: Largest scanned s

    Returns:
        The threshold with the full scan record

    Raises:
        NoValidThreshold: if no scanned s is valid
    """
    if check_ellipticity:
        require_elliptic(p)
    density = sphere_density or DEFAULT_DENSITY[p.n]
    grid = sphere_grid(p.n, density)
    constant = float(p.homogeneous_component(0).evaluate_many(grid[:1])[0]) if p.homogeneous_component(0).coeffs else 0.0
    barrier = max(constant, float(critical_radial_values(p, grid).max()))

    scanned = [2.0**j for j in range(int(math.floor(math.log2(s_scan_max))) + 1)]
    valid = [s > barrier for s in scanned]
    if not any(valid):
        raise NoValidThreshold(f"No valid threshold up to s = {s_scan_max:g}; radial profiles reach {barrier:.6g}")
    a = scanned[valid.index(True)]
    logger.info(f"Level-set threshold a = {a:g} (radial barrier {barrier:.6g}, {density} directions)")
    return ThresholdA(a=a, sphere_density=density, s_scan_max=s_scan_max, s_scanned=scanned, valid=valid)


def solve_rho_batch(
    p: PolynomialSymbol,
    s: float | np.ndarray,
    omegas: np.ndarray,
    tol_rel: float = DEFAULT_TOL_REL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Vectorized safeguarded Newton for P(rho * omega) = s.

    Newton steps start from (s / P_m(omega))^{1/m} and fall back to bisection whenever they
    leave the sign-change bracket.

    Returns:
        rho, residual, radial derivative, iterations used
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    coefs = p.radial_coefficients(omegas)
    ct = coefs.T
    dct = npp.polyder(ct, axis=0)
    s = np.broadcast_to(np.asarray(s, dtype=float), (omegas.shape[0],)).copy()
    m = p.m

    def g(rho):
        return npp.polyval(rho, ct, tensor=False)

    if np.any(coefs[:, 0] >= s):
        raise LevelSetError(f"P(0) = {coefs[:, 0].max():.6g} is not below s = {s.min():.6g}; no crossing level set")

    rho0 = (s / coefs[:, m]) ** (1.0 / m)
    if p.is_homogeneous():
        rho = rho0
        return rho, np.abs(g(rho) - s), npp.polyval(rho, dct, tensor=False), 0

    lo = np.zeros_like(rho0)
    hi = np.maximum(rho0, 1e-8)
    below = g(hi) <= s
    lo = np.where(below, hi, lo)
    for _ in range(2100):
        if not below.any():
            break
        hi = np.where(below, 2.0 * hi, hi)
        below = g(hi) <= s
        lo = np.where(below, hi, lo)
    rho = np.where((rho0 > lo) & (rho0 < hi), rho0, 0.5 * (lo + hi))

    tol_abs = tol_rel * np.maximum(s, 1.0)
    done = np.zeros_like(rho, dtype=bool)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        f = g(rho) - s
        df = npp.polyval(rho, dct, tensor=False)
        lo = np.where(f < 0.0, rho, lo)
        hi = np.where(f > 0.0, rho, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(df > 0.0, f / df, np.nan)
        candidate = rho - step
        bisect = ~np.isfinite(candidate) | (candidate <= lo) | (candidate >= hi)
        new_rho = np.where(bisect, 0.5 * (lo + hi), candidate)
        small_step = np.abs(new_rho - rho) <= 16.0 * EPS * np.maximum(rho, 1e-300)
        narrow = (hi - lo) <= 4.0 * EPS * np.maximum(rho, 1e-300)
        done = (np.abs(f) <= tol_abs) & (small_step | narrow | (f == 0.0))
        rho = np.where(done | (f == 0.0), rho, new_rho)
        if done.all():
            break

    residual = np.abs(g(rho) - s)
    failed = residual > tol_abs
    if failed.any():
        i = int(np.argmax(failed))
        raise RootNotConverged(
            f"Level-set Newton did not converge at s = {s[i]:.6g} after {max_iter} iterations", (float(lo[i]), float(hi[i]))
        )
    deriv = npp.polyval(rho, dct, tensor=False)
    if np.any(deriv <= 0.0):
        raise LevelSetError("Radial derivative is not positive at the root; s is below the threshold a")
    logger.debug(f"solve_rho_batch: {omegas.shape[0]} roots in {iterations} iterations")
    return rho, residual, deriv, iterations


def solve_rho(p: PolynomialSymbol, s: float, omega: Sequence[float], tol_rel: float = DEFAULT_TOL_REL) -> RadialRoot:
    """Unique level-set radius rho(s, omega) for s above the threshold."""
    omega = np.asarray(omega, dtype=float)
    rho, residual, deriv, iterations = solve_rho_batch(p, s, omega[None, :], tol_rel=tol_rel)
    return RadialRoot(
        s=s,
        omega=omega.tolist(),
        rho=float(rho[0]),
        residual=float(residual[0]),
        radial_derivative=float(deriv[0]),
        iterations=iterations,
    )


def leading_radius(p: PolynomialSymbol, s: float | np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """s^{1/m} P_m(omega)^{-1/m}, computed the same way as the Newton seed."""
    pm = p.principal_part().evaluate_many(np.atleast_2d(omegas))
    return (np.asarray(s, dtype=float) / pm) ** (1.0 / p.m)


def sigma_batch(p: PolynomialSymbol, s: float | np.ndarray, omegas: np.ndarray) -> np.ndarray:
    rho = solve_rho_batch(p, s, omegas)[0]
    return rho - leading_radius(p, s, omegas)


def sigma(p: PolynomialSymbol, s: float, omega: Sequence[float]) -> float:
    """sigma(s, omega) = rho(s, omega) - s^{1/m} P_m(omega)^{-1/m}."""
    return float(sigma_batch(p, s, np.asarray(omega, dtype=float)[None, :])[0])


def drho_ds(p: PolynomialSymbol, s: float | np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """Implicit derivative d rho / d s = 1 / (d/d rho) P(rho * omega)."""
    return 1.0 / solve_rho_batch(p, s, omegas)[2]


def fd_step(s: np.ndarray, k: int, scale: float = 1.0) -> np.ndarray:
    """Finite-difference step s * eps^{1/(k+2)}."""
    return scale * s * EPS ** (1.0 / (k + 2))


def _radius_scale(p: PolynomialSymbol, s_grid: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """Largest leading radius over omegas, per s."""
    pm_min = float(p.principal_part().evaluate_many(omegas).min())
    return (np.asarray(s_grid, dtype=float) / pm_min) ** (1.0 / p.m)


def _sigma_derivatives(p: PolynomialSymbol, k: int, s_grid: np.ndarray, omegas: np.ndarray, step_scale: float):
    """|d^k_s sigma| on (s_grid x omegas) with its rounding floor."""
    if k == 0:
        values = np.stack([sigma_batch(p, s, omegas) for s in s_grid])
        return np.abs(values), (8.0 * EPS * np.maximum(_radius_scale(p, s_grid, omegas), 1.0))[:, None]
    offsets, weights = FD_STENCILS[k]
    h = fd_step(s_grid, k, step_scale)
    values = np.zeros((len(s_grid), omegas.shape[0]))
    for off, w in zip(offsets, weights, strict=True):
        values += w * np.stack([sigma_batch(p, s + off * hs, omegas) for s, hs in zip(s_grid, h, strict=True)])
    values /= (h**k)[:, None]
    rho_s = _radius_scale(p, s_grid, omegas)
    floor = (8.0 * EPS * np.maximum(rho_s, 1.0) * sum(abs(w) for w in weights) / h**k)[:, None]
    return np.abs(values), floor


def _tangential_sigma(p: PolynomialSymbol, s_values: np.ndarray, omegas: np.ndarray, delta: float) -> np.ndarray:
    """First tangential derivative of sigma along the first tangent direction, per (s, omega)."""
    plus = np.stack([exp_map(w, delta * tangent_basis(w)[0]) for w in omegas])
    minus = np.stack([exp_map(w, -delta * tangent_basis(w)[0]) for w in omegas])
    return np.stack([(sigma_batch(p, s, plus) - sigma_batch(p, s, minus)) / (2.0 * delta) for s in s_values])


def _clamped_constant(values: np.ndarray, floor, weights: np.ndarray) -> tuple[float, np.ndarray, bool]:
    clamped = values <= floor
    kept = np.where(clamped, 0.0, values)
    per_s = kept.max(axis=1)
    weighted = per_s * weights
    return float(weighted.max()), per_s, bool(clamped.all(axis=1).any() and kept.any())


def _stable(c: float, c_ref: float, factor: float = 2.0) -> bool:
    if not (math.isfinite(c) and math.isfinite(c_ref)):
        return False
    if max(c, c_ref) == 0.0:
        return True
    return max(c, c_ref) / max(min(c, c_ref), 1e-300) < factor


def sigma_audit(
    p: PolynomialSymbol,
    k_max: int = 3,
    s_grid: np.ndarray | None = None,
    omegas: np.ndarray | None = None,
    a: float | None = None,
) -> SigmaAudit:
    """Audit |d^k_s sigma(s, omega)| <= C_k (1 + s)^{-k} by central finite differences.

    C_k is the maximum of |d^k_s sigma| (1 + s)^k over the grids. The audit repeats on a
    refined s-grid with halved steps; it passes when every C_k changes by less than 2x.
    Values at or below the rounding floor count as zero.

    Args:
        p: Symbol
        k_max: Highest s-derivative order, at most 3
        s_grid: Geometric grid inside [a, inf)
        omegas: Sphere directions
        a: Level-set threshold, computed when omitted

    Returns:
        Audit report with one CSV row per (k, s)
    """
    if not 0 <= k_max <= 3:
        raise LevelSetError(f"k_max must be between 0 and 3, got {k_max}")
    if s_grid is None:
        a = a if a is not None else find_threshold(p, check_ellipticity=False).a
        s_grid = np.geomspace(2.0 * a, 2.0**20, 21)
    s_grid = np.asarray(s_grid, dtype=float)
    refined = np.geomspace(s_grid[0], s_grid[-1], 2 * len(s_grid) - 1)
    omegas = omegas if omegas is not None else sphere_grid(p.n, 64 if p.n == 2 else 128)

    constants, refined_constants, tangential, stable, noisy = {}, {}, {}, {}, {}
    rows: list[SigmaAuditRow] = []
    for k in range(k_max + 1):
        values, floor = _sigma_derivatives(p, k, s_grid, omegas, 1.0)
        constants[k], per_s, noisy[k] = _clamped_constant(values, floor, (1.0 + s_grid) ** k)
        rows += [SigmaAuditRow(k=k, s=s, derivative=d, weighted=d * (1.0 + s) ** k) for s, d in zip(s_grid, per_s, strict=True)]
        ref_values, ref_floor = _sigma_derivatives(p, k, refined, omegas, 0.5)
        refined_constants[k] = _clamped_constant(ref_values, ref_floor, (1.0 + refined) ** k)[0]
        stable[k] = _stable(constants[k], refined_constants[k])
        if noisy[k]:
            logger.warning(f"sigma audit k={k}: finite-difference noise dominates at some s")

    delta = EPS ** (1.0 / 3.0)
    lsigma = np.abs(_tangential_sigma(p, s_grid, omegas, delta))
    tangential_floor = (8.0 * EPS * np.maximum(_radius_scale(p, s_grid, omegas), 1.0) / delta)[:, None]
    tangential[0] = _clamped_constant(lsigma, tangential_floor, np.ones_like(s_grid))[0]
    if k_max >= 1:
        h = fd_step(s_grid, 1)
        upper = _tangential_sigma(p, s_grid + h, omegas, delta)
        lower = _tangential_sigma(p, s_grid - h, omegas, delta)
        dl = np.abs(upper - lower) / (2.0 * h[:, None])
        tangential[1] = _clamped_constant(dl, 2.0 * tangential_floor / h[:, None], 1.0 + s_grid)[0]

    passed = all(stable.values()) and all(math.isfinite(c) for c in tangential.values())
    logger.info(f"sigma audit constants {constants} (refined {refined_constants}), passed={passed}")
    return SigmaAudit(
        k_max=k_max,
        constants=constants,
        refined_constants=refined_constants,
        tangential_constants=tangential,
        stable=stable,
        noise_limited=noisy,
        passed=passed,
        rows=rows,
    )
