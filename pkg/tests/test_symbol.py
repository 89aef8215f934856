"""Test polynomial symbols, certification and symbol files."""

from fractions import Fraction

import numpy as np
import pytest
import sympy

from fundsol.errors import SymbolError
from fundsol.model import CertificateStatus
from fundsol.symbol import (
    Polynomial,
    PolynomialSymbol,
    certify,
    differentiate,
    dump_symbol,
    evaluate,
    load_symbol,
    parse_coefficient,
    principal_part,
    radial_symbol,
    require_elliptic,
)


def _to_sympy(p: Polynomial, xs):
    terms = [sympy.Rational(str(c)) * sympy.prod([x**a for x, a in zip(xs, alpha, strict=True)]) for alpha, c in p.coeffs.items()]
    return sum(terms)


def test_evaluate_examples(laplacian: PolynomialSymbol, mixed: PolynomialSymbol):
    """Exact values at integer points."""
    assert evaluate(laplacian, (3, 4)) == 25
    assert evaluate(mixed, (1, 0)) == 2

    # Check the constant coefficient at the origin
    shifted = PolynomialSymbol.from_terms(2, [((2, 0), 1), ((0, 2), 1), ((0, 0), "7/2")])
    assert evaluate(shifted, (0, 0)) == Fraction(7, 2)


def test_evaluate_dimension_mismatch(laplacian: PolynomialSymbol):
    with pytest.raises(SymbolError):
        evaluate(laplacian, (1, 2, 3))


def test_differentiate_examples(laplacian: PolynomialSymbol):
    """Power rule on monomials, zero for constants."""
    quartic = PolynomialSymbol.from_terms(2, [((4, 0), 1), ((0, 4), 1)])
    assert differentiate(quartic, 0) == Polynomial(2, {(3, 0): 4})
    assert differentiate(laplacian, 1) == Polynomial(2, {(0, 1): 2})
    assert differentiate(Polynomial.constant(2, Fraction(5)), 0).is_zero

    # Check axis range
    with pytest.raises(SymbolError):
        differentiate(laplacian, 2)


def test_principal_part_examples(mixed: PolynomialSymbol, biharmonic: PolynomialSymbol):
    assert principal_part(mixed) == biharmonic
    assert principal_part(biharmonic) == biharmonic

    p = PolynomialSymbol.from_terms(2, [((4, 0), 1), ((2, 2), 1), ((0, 1), 1)])
    assert principal_part(p) == Polynomial(2, {(4, 0): 1, (2, 2): 1})


def test_hessian_determinant_matches_sympy(mixed: PolynomialSymbol, anisotropic: PolynomialSymbol):
    """Cofactor expansion against the symbolic determinant."""
    xs = sympy.symbols("x1 x2")
    for p in (mixed, anisotropic):
        expected = sympy.expand(sympy.hessian(_to_sympy(p, xs), xs).det())
        assert sympy.expand(_to_sympy(p.hessian_determinant(), xs) - expected) == 0

    # Check det Hess |xi|^4 = 48 |xi|^4
    quartic = mixed.principal_part().hessian_determinant()
    assert quartic == radial_symbol(2, {4: 48})


def test_derivative_commutes_with_finite_differences(anisotropic: PolynomialSymbol):
    """Central differences converge to the exact derivative at second order."""
    rng = np.random.default_rng(7)
    for _ in range(5):
        xi = rng.uniform(-2.0, 2.0, size=2)
        for i in range(2):
            exact = float(differentiate(anisotropic, i).evaluate_many(xi[None, :])[0])
            errors = []
            for h in (1e-2, 5e-3):
                e = np.zeros(2)
                e[i] = h
                fd = (anisotropic.evaluate_many((xi + e)[None, :])[0] - anisotropic.evaluate_many((xi - e)[None, :])[0]) / (2 * h)
                errors.append(abs(fd - exact))
            # Check second-order convergence under step halving
            assert errors[1] <= errors[0] / 3.0 or errors[0] < 1e-9


def test_certify_laplacian(laplacian: PolynomialSymbol):
    certificate = certify(laplacian)
    assert certificate.elliptic
    assert certificate.nondegenerate
    assert certificate.min_abs_hessdet_on_sphere == pytest.approx(4.0)
    assert certificate.passed


def test_certify_degenerate_quartic():
    """det Hess (xi1^4 + xi2^4) = 144 xi1^2 xi2^2 vanishes on the axes."""
    p = PolynomialSymbol.from_terms(2, [((4, 0), 1), ((0, 4), 1)])
    certificate = certify(p)
    assert not certificate.nondegenerate
    assert certificate.nondegenerate_status == CertificateStatus.REFUTED
    assert certificate.elliptic


def test_certify_mixed_and_anisotropic(mixed: PolynomialSymbol, anisotropic: PolynomialSymbol):
    for p in (mixed, anisotropic):
        certificate = certify(p)
        assert certificate.elliptic_status == CertificateStatus.CERTIFIED
        assert certificate.nondegenerate_status == CertificateStatus.CERTIFIED

    # Check the sampled minimum of det Hess |xi|^4 on the circle
    assert certify(mixed).min_abs_hessdet_on_sphere == pytest.approx(48.0)


def test_require_elliptic_rejects_non_elliptic():
    p = PolynomialSymbol.from_terms(2, [((4, 0), 1), ((0, 4), -1)])
    with pytest.raises(SymbolError):
        require_elliptic(p)


def test_symbol_construction_errors():
    with pytest.raises(SymbolError):
        PolynomialSymbol.from_terms(1, [((2,), 1)])
    with pytest.raises(SymbolError):
        PolynomialSymbol.from_terms(2, [((3, 0), 1)])
    with pytest.raises(SymbolError):
        parse_coefficient("not a number")
    with pytest.raises(SymbolError):
        parse_coefficient(float("nan"))

    # Check exact rational parsing
    assert parse_coefficient("1/3") == Fraction(1, 3)
    assert parse_coefficient("0.1") == Fraction(1, 10)


def test_scaled_symbol(mixed: PolynomialSymbol):
    """P_t(xi) = t P(t^{-1/m} xi)."""
    t = 0.25
    scaled = mixed.scaled(t)
    xi = np.array([[0.7, -1.3], [2.0, 0.5]])
    expected = t * mixed.evaluate_many(t ** (-1.0 / mixed.m) * xi)
    assert np.allclose(scaled.evaluate_many(xi), expected, rtol=1e-13)

    # Check the principal part is unchanged
    assert scaled.principal_part().evaluate_many(xi) == pytest.approx(mixed.principal_part().evaluate_many(xi))


def test_is_radial(mixed: PolynomialSymbol, anisotropic: PolynomialSymbol):
    assert mixed.is_radial()
    assert not anisotropic.is_radial()


def test_symbol_files(symbols_dir, mixed: PolynomialSymbol, laplacian: PolynomialSymbol, tmp_path):
    """Bundled files describe the canonical symbols; dumped files load back."""
    assert load_symbol(symbols_dir / "mixed.toml") == mixed
    assert load_symbol(symbols_dir / "laplacian.toml") == laplacian

    path = tmp_path / "third.toml"
    p = PolynomialSymbol.from_terms(2, [((4, 0), "1/3"), ((0, 4), 1), ((2, 2), "0.5"), ((1, 0), -2)])
    dump_symbol(p, path)
    assert load_symbol(path) == p


def test_symbol_file_errors(tmp_path):
    with pytest.raises(SymbolError):
        load_symbol(tmp_path / "missing.toml")

    # Check declared order mismatch
    path = tmp_path / "bad.toml"
    path.write_text('n = 2\nm = 6\n\n[[terms]]\nalpha = [2, 0]\ncoeff = "1"\n\n[[terms]]\nalpha = [0, 2]\ncoeff = "1"\n')
    with pytest.raises(SymbolError):
        load_symbol(path)


def test_certify_uses_each_margin(biharmonic: PolynomialSymbol):
    """A coarse grid resolves P_m = 1 on the circle before det Hess P_m = 48 |xi|^4 with its larger margin."""
    certificate = certify(biharmonic, sphere_density=64)
    assert certificate.principal_margin < 1.0 < certificate.hessdet_margin
    assert certificate.hessdet_margin < 48.0
    assert certificate.lipschitz_margin == certificate.hessdet_margin

    # Check each property is certified against its own margin
    assert certificate.elliptic_status == CertificateStatus.CERTIFIED
    assert certificate.nondegenerate_status == CertificateStatus.CERTIFIED
