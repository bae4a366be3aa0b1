"""Kernel moments against an exact rational oracle and Gauss-Legendre quadrature."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsquant.errors import QuadratureError
from nsquant.kernel import (EPANECHNIKOV, TRIWEIGHT, UNIFORM, boundary_constants, custom_kernel,
                            get_kernel, jackknife_kernel, kernel_moment, kernel_phi)

# kernels as exact polynomial coefficient lists on [-1, 1]
POLY = {
    "epanechnikov": [Fraction(3, 4), 0, Fraction(-3, 4)],
    "triweight": [Fraction(35, 32), 0, Fraction(-105, 32), 0, Fraction(105, 32), 0, Fraction(-35, 32)],
    "uniform": [Fraction(1, 2)],
}


def _half_integral(coefs, j):
    """Exact int_0^1 u^j p(u) du."""
    return sum(Fraction(c) / (k + j + 1) for k, c in enumerate(coefs))


def _square(coefs):
    out = [Fraction(0)] * (2 * len(coefs) - 1)
    for i, a in enumerate(coefs):
        for k, b in enumerate(coefs):
            out[i + k] += Fraction(a) * Fraction(b)
    return out


def exact_moment(coefs, j):
    half = _half_integral(coefs, j)
    return 2 * half if j % 2 == 0 else half


def gauss(f, a, b, deg=40):
    x, w = np.polynomial.legendre.leggauss(deg)
    mid, rad = 0.5 * (a + b), 0.5 * (b - a)
    return float(rad * np.sum(w * f(mid + rad * x)))


@pytest.mark.parametrize("name", sorted(POLY))
@pytest.mark.parametrize("j", range(5))
def test_moments_match_rational_oracle(name, j):
    assert kernel_moment(get_kernel(name), j) == pytest.approx(float(exact_moment(POLY[name], j)), abs=1e-12)


@pytest.mark.parametrize("name", sorted(POLY))
def test_phi_matches_rational_oracle(name):
    exact = 2 * _half_integral(_square(POLY[name]), 0)
    assert kernel_phi(get_kernel(name)) == pytest.approx(float(exact), abs=1e-12)


def test_epanechnikov_reference_values():
    mu = EPANECHNIKOV.constants.mu
    assert mu[0] == pytest.approx(1.0, abs=1e-12)
    assert mu[1] == pytest.approx(0.1875, abs=1e-12)
    assert mu[2] == pytest.approx(0.2, abs=1e-12)
    assert mu[3] == pytest.approx(0.0625, abs=1e-12)
    assert EPANECHNIKOV.phi == pytest.approx(0.6, abs=1e-12)
    assert UNIFORM.phi == pytest.approx(0.5, abs=1e-12)


def test_phi_j_half_line():
    sq = _square(POLY["epanechnikov"])
    for j in range(3):
        assert EPANECHNIKOV.constants.phi_j[j] == pytest.approx(float(_half_integral(sq, j)), abs=1e-12)


@pytest.mark.parametrize("base", [EPANECHNIKOV, TRIWEIGHT, UNIFORM])
def test_jackknife_kernel_identities(base):
    ks = jackknife_kernel(base)
    r = math.sqrt(2.0)
    total = gauss(ks, -1, 1) + 2 * gauss(ks, 1, r)
    second = gauss(lambda u: u * u * ks(u), -1, 1) + 2 * gauss(lambda u: u * u * ks(u), 1, r)
    assert total == pytest.approx(1.0, abs=1e-10)
    assert abs(second) < 1e-10
    assert kernel_moment(ks, 0) == pytest.approx(1.0, abs=1e-10)
    assert abs(kernel_moment(ks, 2)) < 1e-10
    assert not ks.in_class
    assert ks.support_radius == pytest.approx(r)


def test_jackknife_kernel_at_zero_and_phi():
    ks = jackknife_kernel(EPANECHNIKOV)
    assert float(ks(0.0)) == pytest.approx(2 * 0.75 - 0.75 / math.sqrt(2), abs=1e-15)
    r = math.sqrt(2.0)
    sq = lambda u: ks(u) ** 2
    phi_oracle = 2 * (gauss(sq, 0, 1) + gauss(sq, 1, r))
    assert ks.phi == pytest.approx(phi_oracle, abs=1e-10)


def test_jackknife_kernel_cached():
    assert jackknife_kernel(EPANECHNIKOV) is jackknife_kernel(EPANECHNIKOV)


def test_boundary_constants_epanechnikov():
    B, V = boundary_constants(EPANECHNIKOV)
    assert B == pytest.approx((0.2**2 - 4 * 0.1875 * 0.0625) / (0.2 - 4 * 0.1875**2), abs=1e-12)
    m1, m2 = 0.1875, 0.2
    direct = 4 * gauss(lambda u: (m2 - 2 * m1 * u) ** 2 * EPANECHNIKOV(u) ** 2, 0, 1) / (m2 - 4 * m1**2) ** 2
    assert V == pytest.approx(direct, abs=1e-8)
    assert math.isfinite(B) and math.isfinite(V)


def test_boundary_degenerate_denominator():
    # mu_2 - 4 mu_1^2 = 0 for this artificial moment set
    with pytest.raises(ZeroDivisionError):
        boundary_constants(EPANECHNIKOV, {1: 0.25, 2: 0.25, 3: 0.1})


def test_non_integrable_kernel_raises():
    k = custom_kernel(lambda u: np.where(np.abs(u) <= 1, 1.0 / np.maximum(np.abs(u), 1e-300), 0.0), "bad")
    with pytest.raises(QuadratureError):
        kernel_moment(k, 0)


def test_unknown_kernel_name():
    with pytest.raises(ValueError):
        get_kernel("gaussian-ish")
    with pytest.raises(ValueError):
        kernel_moment(EPANECHNIKOV, 5)


@settings(max_examples=30, deadline=None)
@given(c2=st.fractions(min_value=Fraction(-1), max_value=Fraction(0), max_denominator=50),
       c4=st.fractions(min_value=Fraction(0), max_value=Fraction(1), max_denominator=50))
def test_random_polynomial_kernels(c2, c4):
    # p(u) = 1 + c2 u^2 + c4 u^4 is positive on [-1, 1]; normalise to unit mass
    raw = [Fraction(1), 0, c2, 0, c4]
    mass = 2 * _half_integral(raw, 0)
    coefs = [Fraction(c) / mass for c in raw]
    fc = [float(c) for c in coefs]
    k = custom_kernel(lambda u: np.where(np.abs(u) <= 1, np.polyval(fc[::-1], u), 0.0), "poly")
    for j in range(5):
        assert kernel_moment(k, j) == pytest.approx(float(exact_moment(coefs, j)), abs=1e-11)
    assert kernel_phi(k) == pytest.approx(float(2 * _half_integral(_square(coefs), 0)), abs=1e-11)
