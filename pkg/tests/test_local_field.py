"""Tests for places, p-adic arithmetic and local Fourier analysis."""

import cmath
import math
from fractions import Fraction

import pytest

from src.errors import DomainError, PrecisionError
from src.services.local_field import (
    HaarNormalization,
    LogLinearNumber,
    PAdicBall,
    PAdicNumber,
    Place,
    alpha0,
    fractional_part,
    homogeneous_delta,
    homogeneous_delta_prime,
    local_zeta_integral,
    module,
    module_range_measure,
    padic_fourier,
    valuation,
)
from src.services.test_functions import LocallyConstantFn


def test_place_parsing():
    assert Place.parse("Q_2") == Place.finite(2)
    assert Place.parse("inf") == Place.real()
    assert Place.parse("C") == Place.complex()
    assert str(Place.finite(7)) == "Q_7"


def test_place_rejects_composite():
    with pytest.raises(DomainError):
        Place.parse("4")


def test_valuation_and_fractional_part():
    assert valuation(Fraction(18, 5), 3) == 2
    assert valuation(Fraction(5, 18), 3) == -2
    assert fractional_part(Fraction(1, 3), 3) == Fraction(1, 3)
    assert fractional_part(Fraction(7, 2), 3) == 0
    with pytest.raises(DomainError):
        valuation(0, 3)


def test_alpha0_is_trivial_on_integers():
    assert alpha0(5, 3) == pytest.approx(1)
    assert alpha0(Fraction(1, 3), 3) == pytest.approx(cmath.exp(2j * math.pi / 3))


def test_module_at_each_kind_of_place():
    assert module(Place.finite(3), Fraction(9, 2)) == Fraction(1, 9)
    assert module(Place.finite(3), 0) == 0
    assert module(Place.real(), -2.5) == 2.5
    assert module(Place.complex(), 3 + 4j) == pytest.approx(25.0)


def test_padic_multiplication_and_inverse():
    two = PAdicNumber.from_rational(2, 3, 6)
    half = PAdicNumber.from_rational(Fraction(1, 2), 3, 6)
    assert (two * half).to_fraction() == 1
    assert two.inverse().residue_mod(6) == half.residue_mod(6)
    assert PAdicNumber.from_rational(Fraction(1, 3), 3, 5).norm == 3


def test_padic_addition_keeps_digits():
    one = PAdicNumber.from_rational(1, 3, 6)
    assert (one + one).to_fraction() == 2


def test_padic_cancellation_raises():
    one = PAdicNumber.from_rational(1, 5, 4)
    with pytest.raises(PrecisionError):
        one + PAdicNumber.from_rational(-1, 5, 4)


def test_indeterminate_value_has_no_norm():
    with pytest.raises(PrecisionError):
        PAdicNumber.big_o(3, 2).norm


def test_balls_nest_or_are_disjoint():
    outer = PAdicBall.around(0, 3, 1)
    inner = PAdicBall.around(3, 3, 2)
    assert outer.relation(inner) == "contains"
    assert inner.relation(outer) == "inside"
    assert PAdicBall.around(1, 3, 1).relation(outer) == "disjoint"
    assert outer.measure == Fraction(1, 3)


def test_log_linear_arithmetic():
    x = LogLinearNumber.log(2) + LogLinearNumber.log(2, Fraction(1, 2))
    assert x.symbolic() == "3/2*log(2)"
    assert float(x) == pytest.approx(1.5 * math.log(2))
    assert (x - x).is_zero
    assert (LogLinearNumber.log(3) * -1).symbolic() == "-log(3)"
    with pytest.raises(DomainError):
        LogLinearNumber.log(4)


def test_log_linear_json_round_trip():
    x = LogLinearNumber(Fraction(1, 3), ((2, Fraction(-1)),), euler_gamma=Fraction(1))
    assert LogLinearNumber.from_json(x.to_json()) == x


def test_module_range_measure_counts_shells():
    assert module_range_measure(3, 2).symbolic() == "3*log(3)"
    unit_mass = module_range_measure(3, 2, HaarNormalization.UNIT_MASS_ON_UNITS)
    assert float(unit_mass) == 3


def test_fourier_of_ring_of_integers_is_itself():
    f = LocallyConstantFn.ball_indicator(3, 0, 0)
    g = padic_fourier(f)
    assert g(0) == 1
    assert g(Fraction(1, 3)) == 0
    assert g(5) == 1


def test_fourier_scales_balls():
    f = LocallyConstantFn.ball_indicator(3, 0, 1)
    g = padic_fourier(f)
    assert g(Fraction(1, 3)) == Fraction(1, 3)
    assert g(Fraction(1, 9)) == 0


def test_fourier_inversion_reflects():
    f = LocallyConstantFn.ball_indicator(3, 1, 1)
    twice = padic_fourier(padic_fourier(f))
    reflected = f.reflect()
    assert len(twice.values) == len(reflected.values)
    for u, v in zip(twice.values, reflected.values, strict=True):
        assert abs(complex(u) - complex(v)) < 1e-12


@pytest.mark.parametrize("p", [2, 3, 5])
def test_local_zeta_at_finite_place(p):
    report = local_zeta_integral(Place.finite(p), 2 + 1j)
    assert report.discrepancy < 1e-9
    assert report.terms > 0


def test_local_zeta_at_real_place():
    report = local_zeta_integral(Place.real(), 2.0)
    assert report.closed_form_re == pytest.approx(1 / (2 * math.pi))
    assert report.discrepancy < 1e-8


def test_local_zeta_needs_positive_real_part():
    with pytest.raises(DomainError):
        local_zeta_integral(Place.finite(2), -0.5)


def test_homogeneous_delta_on_units():
    units = LocallyConstantFn.units(3)
    s = 0.5 + 2j
    assert homogeneous_delta(Place.finite(3), s, units) == pytest.approx(1)
    assert homogeneous_delta_prime(Place.finite(3), s, units) == pytest.approx(1 - 3 ** (-s))


def test_delta_prime_factors_through_delta():
    f = LocallyConstantFn.radial(3, {0: 1, 1: 2})
    s = 0.7 - 0.3j
    z = 3 ** (-s)
    place = Place.finite(3)
    assert homogeneous_delta_prime(place, s, f) == pytest.approx(1 + z - 2 * z**2)
    assert homogeneous_delta_prime(place, s, f) == pytest.approx(
        (1 - z) * homogeneous_delta(place, s, f)
    )
