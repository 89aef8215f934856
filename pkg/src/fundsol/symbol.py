"""Real polynomial symbols on R^n: exact arithmetic, differentiation and certification."""

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from pathlib import Path

import numpy as np
from loguru import logger

from fundsol.errors import InconclusiveCertificate, SymbolError
from fundsol.model import CertificateStatus, SymbolCertificate
from fundsol.sphere import DEFAULT_DENSITY, covering_radius, sphere_grid

MultiIndex = tuple[int, ...]
Coefficient = Fraction | float

# Relative size below which |det Hess P_m| counts as a vanishing witness
DEGENERACY_RTOL = 1e-12


def order(alpha: MultiIndex) -> int:
    return sum(alpha)


def parse_coefficient(value: str | int | float | Fraction) -> Coefficient:
    """Parse a decimal or rational coefficient exactly.

    Raises:
        SymbolError: if the value is not a finite real number
    """
    if isinstance(value, bool):
        raise SymbolError(f"Invalid coefficient: {value!r}")
    if isinstance(value, Fraction | int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SymbolError(f"Coefficient must be finite, got {value}")
        return Fraction(repr(value))
    try:
        return Fraction(str(value).strip())
    except (TypeError, ValueError, ZeroDivisionError) as e:
        raise SymbolError(f"Invalid coefficient: {value!r}") from e


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Sparse real polynomial in n variables, stored as multi-index -> coefficient.

    Zero coefficients are dropped at construction so that `degree` is exact.
    """

    n: int
    coeffs: Mapping[MultiIndex, Coefficient]

    def __post_init__(self):
        cleaned: dict[MultiIndex, Coefficient] = {}
        for alpha, c in self.coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n or any(a < 0 for a in alpha):
                raise SymbolError(f"Multi-index {alpha} is not a length-{self.n} tuple of non-negative integers")
            if isinstance(c, float) and not math.isfinite(c):
                raise SymbolError(f"Coefficient of {alpha} is not finite: {c}")
            if c != 0:
                cleaned[alpha] = cleaned.get(alpha, 0) + c
        object.__setattr__(self, "coeffs", {a: c for a, c in cleaned.items() if c != 0})

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n, {})

    @classmethod
    def constant(cls, n: int, c: Coefficient) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        return cls(n, {tuple(1 if j == i else 0 for j in range(n)): Fraction(1)})

    @property
    def degree(self) -> int:
        """Highest multi-index order with nonzero coefficient, -1 for the zero polynomial."""
        return max((order(a) for a in self.coeffs), default=-1)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def is_homogeneous(self) -> bool:
        return len({order(a) for a in self.coeffs}) <= 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and dict(self.coeffs) == dict(other.coeffs)

    def __hash__(self) -> int:
        return hash((self.n, frozenset(self.coeffs.items())))

    def __repr__(self) -> str:
        terms = " + ".join(f"{c}*x^{list(a)}" for a, c in sorted(self.coeffs.items(), reverse=True)) or "0"
        return f"{type(self).__name__}(n={self.n}, {terms})"

    def _check_same_dimension(self, other: "Polynomial") -> None:
        if self.n != other.n:
            raise SymbolError(f"Dimension mismatch: {self.n} != {other.n}")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_same_dimension(other)
        coeffs = dict(self.coeffs)
        for alpha, c in other.coeffs.items():
            coeffs[alpha] = coeffs.get(alpha, 0) + c
        return Polynomial(self.n, coeffs)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.n, {a: -c for a, c in self.coeffs.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial | Coefficient | int") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return Polynomial(self.n, {a: c * other for a, c in self.coeffs.items()})
        self._check_same_dimension(other)
        coeffs: dict[MultiIndex, Coefficient] = {}
        for (a, c), (b, d) in product(self.coeffs.items(), other.coeffs.items()):
            alpha = tuple(x + y for x, y in zip(a, b, strict=True))
            coeffs[alpha] = coeffs.get(alpha, 0) + c * d
        return Polynomial(self.n, coeffs)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        result = Polynomial.constant(self.n, Fraction(1))
        for _ in range(k):
            result = result * self
        return result

    def evaluate(self, xi: Sequence) -> Coefficient:
        """Exact value sum c_alpha xi^alpha.

        Integer, Fraction or float entries are accepted; with exact inputs the result is exact.

        Raises:
            SymbolError: if len(xi) != n
        """
        if len(xi) != self.n:
            raise SymbolError(f"Point has dimension {len(xi)}, symbol has n = {self.n}")
        total: Coefficient = Fraction(0)
        for alpha, c in self.coeffs.items():
            term = c
            for x, a in zip(xi, alpha, strict=True):
                if a:
                    term = term * x**a
            total = total + term
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation over points of shape (..., n)."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.n:
            raise SymbolError(f"Points have dimension {points.shape[-1]}, symbol has n = {self.n}")
        result = np.zeros(points.shape[:-1])
        powers: dict[tuple[int, int], np.ndarray] = {}
        for alpha, c in self.coeffs.items():
            term = np.full(points.shape[:-1], float(c))
            for i, a in enumerate(alpha):
                if a:
                    if (i, a) not in powers:
                        powers[(i, a)] = points[..., i] ** a
                    term = term * powers[(i, a)]
            result += term
        return result

    def differentiate(self, i: int) -> "Polynomial":
        """Exact partial derivative along axis i (0-based)."""
        if not 0 <= i < self.n:
            raise SymbolError(f"Axis {i} out of range for n = {self.n}")
        coeffs = {}
        for alpha, c in self.coeffs.items():
            if alpha[i]:
                beta = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1 :]
                coeffs[beta] = c * alpha[i]
        return Polynomial(self.n, coeffs)

    def gradient(self) -> list["Polynomial"]:
        return [self.differentiate(i) for i in range(self.n)]

    def hessian(self) -> list[list["Polynomial"]]:
        grad = self.gradient()
        return [[g.differentiate(j) for j in range(self.n)] for g in grad]

    def hessian_determinant(self) -> "Polynomial":
        """Exact det(d_i d_j P) by cofactor expansion along the first row."""
        return _determinant(self.hessian())

    def homogeneous_component(self, k: int) -> "Polynomial":
        return Polynomial(self.n, {a: c for a, c in self.coeffs.items() if order(a) == k})

    def principal_part(self) -> "Polynomial":
        return self.homogeneous_component(self.degree)

    def sphere_lipschitz_bound(self) -> float:
        """Bound on |grad Q| over the closed unit ball from coefficient norms.

        Uses |d_i xi^alpha| <= alpha_i for |xi| <= 1.
        """
        return float(sum(abs(float(c)) * math.sqrt(sum(a * a for a in alpha)) for alpha, c in self.coeffs.items()))

    def coefficient_scale(self) -> float:
        return max((abs(float(c)) for c in self.coeffs.values()), default=0.0)

    def radial_coefficients(self, omegas: np.ndarray) -> np.ndarray:
        """Coefficients of rho -> P(rho*omega) in ascending powers, shape (N, degree + 1)."""
        omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
        table = np.zeros((omegas.shape[0], self.degree + 1))
        for k in range(self.degree + 1):
            component = self.homogeneous_component(k)
            if not component.is_zero:
                table[:, k] = component.evaluate_many(omegas)
        return table


def _determinant(matrix: list[list[Polynomial]]) -> Polynomial:
    size = len(matrix)
    if size == 1:
        return matrix[0][0]
    result = Polynomial.zero(matrix[0][0].n)
    for j, entry in enumerate(matrix[0]):
        if entry.is_zero:
            continue
        minor = [row[:j] + row[j + 1 :] for row in matrix[1:]]
        cofactor = entry * _determinant(minor)
        result = result + cofactor if j % 2 == 0 else result - cofactor
    return result


@dataclass(frozen=True, eq=False)
class PolynomialSymbol(Polynomial):
    """Real elliptic-candidate symbol P of even order m on R^n, n >= 2."""

    def __post_init__(self):
        super().__post_init__()
        if self.n < 2:
            raise SymbolError(f"Symbols need dimension n >= 2, got n = {self.n}")
        m = self.degree
        if m < 2 or m % 2:
            raise SymbolError(f"Symbol order must be an even integer >= 2, got m = {m}")

    @property
    def m(self) -> int:
        return self.degree

    @classmethod
    def from_polynomial(cls, poly: Polynomial) -> "PolynomialSymbol":
        return cls(poly.n, dict(poly.coeffs))

    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[Sequence[int], str | int | float | Fraction]]) -> "PolynomialSymbol":
        coeffs: dict[MultiIndex, Coefficient] = {}
        for alpha, c in terms:
            alpha = tuple(alpha)
            coeffs[alpha] = coeffs.get(alpha, 0) + parse_coefficient(c)
        return cls(n, coeffs)

    def principal_part(self) -> "PolynomialSymbol":
        return PolynomialSymbol.from_polynomial(super().principal_part())

    def scaled(self, t: float) -> "PolynomialSymbol":
        """P_t(xi) = t * P(t^{-1/m} xi), with float coefficients."""
        if t <= 0:
            raise SymbolError(f"Scaling parameter must be positive, got {t}")
        m = self.m
        return PolynomialSymbol(self.n, {a: float(c) * t ** (1.0 - order(a) / m) for a, c in self.coeffs.items()})

    def multiplied(self, c: float) -> "PolynomialSymbol":
        if c <= 0:
            raise SymbolError(f"Multiplier must be positive, got {c}")
        return PolynomialSymbol.from_polynomial(self * c)

    def is_radial(self, samples: int = 64) -> bool:
        """True when every homogeneous component is constant on the sphere."""
        grid = sphere_grid(self.n, max(samples, 8))
        for k in range(self.m + 1):
            component = self.homogeneous_component(k)
            if component.is_zero:
                continue
            values = component.evaluate_many(grid)
            if np.ptp(values) > 1e-12 * max(component.coefficient_scale(), 1.0):
                return False
        return True


def radial_symbol(n: int, powers: Mapping[int, str | int | float | Fraction]) -> PolynomialSymbol:
    """Build sum_k c_k |xi|^k for even k from a {k: c_k} map."""
    square = sum((Polynomial.variable(n, i) ** 2 for i in range(n)), Polynomial.zero(n))
    total = Polynomial.zero(n)
    for k, c in powers.items():
        if k % 2:
            raise SymbolError(f"Radial powers must be even, got {k}")
        total = total + (square ** (k // 2)) * parse_coefficient(c)
    return PolynomialSymbol.from_polynomial(total)


def evaluate(p: Polynomial, xi: Sequence) -> Coefficient:
    return p.evaluate(xi)


def differentiate(p: Polynomial, i: int) -> Polynomial:
    return p.differentiate(i)


def principal_part(p: Polynomial) -> Polynomial:
    return p.principal_part()


def _status(minimum: float, margin: float, refuted: bool) -> CertificateStatus:
    if minimum - margin > 0:
        return CertificateStatus.CERTIFIED
    if refuted:
        return CertificateStatus.REFUTED
    return CertificateStatus.INCONCLUSIVE


def certify(p: PolynomialSymbol, sphere_density: int | None = None) -> SymbolCertificate:
    """Certify ellipticity and non-degeneracy of P from its principal part.

    P_m and det Hess P_m are sampled on a quasi-uniform sphere grid. A sampled minimum
    only certifies a property when it exceeds its own Lipschitz margin G * h, where G bounds
    the gradient of that polynomial over the ball and h is the covering radius of the grid.

    Args:
        p: Symbol to certify
        sphere_density: Number of grid points on the sphere

    Returns:
        The certificate with per-property status
    """
    density = sphere_density or DEFAULT_DENSITY[p.n]
    grid = sphere_grid(p.n, density)
    h = covering_radius(p.n, density)
    pm = p.principal_part()
    hessdet = pm.hessian_determinant()

    min_principal = float(pm.evaluate_many(grid).min())
    min_hessdet = float(np.abs(hessdet.evaluate_many(grid)).min()) if not hessdet.is_zero else 0.0
    principal_margin = pm.sphere_lipschitz_bound() * h
    hessdet_margin = hessdet.sphere_lipschitz_bound() * h
    margin = max(principal_margin, hessdet_margin)

    elliptic_status = _status(min_principal, principal_margin, refuted=min_principal <= 0.0)
    degenerate_witness = min_hessdet <= DEGENERACY_RTOL * max(hessdet.coefficient_scale(), 1.0)
    nondegenerate_status = _status(min_hessdet, hessdet_margin, refuted=degenerate_witness)
    logger.debug(
        f"certify: min P_m = {min_principal:.6g} (margin {principal_margin:.3g}), "
        f"min |det| = {min_hessdet:.6g} (margin {hessdet_margin:.3g}) over {density} points"
    )
    return SymbolCertificate(
        elliptic=elliptic_status == CertificateStatus.CERTIFIED,
        min_principal_on_sphere=min_principal,
        nondegenerate=nondegenerate_status == CertificateStatus.CERTIFIED,
        min_abs_hessdet_on_sphere=min_hessdet,
        sphere_sample_count=density,
        lipschitz_margin=margin,
        principal_margin=principal_margin,
        hessdet_margin=hessdet_margin,
        elliptic_status=elliptic_status,
        nondegenerate_status=nondegenerate_status,
    )


def require_elliptic(p: PolynomialSymbol, sphere_density: int | None = None) -> SymbolCertificate:
    """Certify P and raise unless ellipticity is certified."""
    certificate = certify(p, sphere_density)
    if certificate.elliptic_status == CertificateStatus.REFUTED:
        raise SymbolError(f"Symbol is not elliptic: min P_m on the sphere is {certificate.min_principal_on_sphere:.6g}")
    if certificate.elliptic_status == CertificateStatus.INCONCLUSIVE:
        raise InconclusiveCertificate(
            f"Ellipticity inconclusive at {certificate.sphere_sample_count} sphere points; refine the sphere density"
        )
    return certificate


def symbol_from_dict(data: Mapping) -> PolynomialSymbol:
    """Build a symbol from the parsed symbol-file structure.

    The structure holds `n`, optionally `m`, and `terms` as a list of {alpha, coeff} tables.
    """
    try:
        n = int(data["n"])
        terms = [(tuple(term["alpha"]), term["coeff"]) for term in data["terms"]]
    except (KeyError, TypeError, ValueError) as e:
        raise SymbolError(f"Malformed symbol description: {e}") from e
    symbol = PolynomialSymbol.from_terms(n, terms)
    if "m" in data and int(data["m"]) != symbol.m:
        raise SymbolError(f"Declared order m = {data['m']} does not match the terms (order {symbol.m})")
    return symbol


def symbol_to_dict(p: PolynomialSymbol) -> dict:
    terms = [{"alpha": list(alpha), "coeff": str(c)} for alpha, c in sorted(p.coeffs.items(), reverse=True)]
    return {"n": p.n, "m": p.m, "terms": terms}


def load_symbol(path: str | Path) -> PolynomialSymbol:
    """Read a TOML symbol file."""
    path = Path(path)
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise SymbolError(f"Cannot read symbol file {path}: {e}") from e
    symbol = symbol_from_dict(data)
    logger.info(f"Loaded symbol n={symbol.n}, m={symbol.m} with {len(symbol.coeffs)} terms from {path}")
    return symbol


def dump_symbol(p: PolynomialSymbol, path: str | Path) -> None:
    data = symbol_to_dict(p)
    lines = [f"n = {data['n']}", f"m = {data['m']}", ""]
    for term in data["terms"]:
        lines += ["[[terms]]", f"alpha = {term['alpha']}", f'coeff = "{term["coeff"]}"', ""]
    Path(path).write_text("\n".join(lines))
