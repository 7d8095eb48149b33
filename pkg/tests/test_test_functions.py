"""Tests for characters, locally constant functions and radial test functions."""

import math
from fractions import Fraction

import pytest

from src.errors import DomainError
from src.services.local_field import PAdicBall
from src.services.test_functions import (
    FiniteCharacter,
    LocallyConstantFn,
    RadialTestFn,
    fourier_real,
    mellin,
    primitive_root,
    reference_f0_f1_f2,
)


class TestFiniteCharacter:
    def test_generator_values(self):
        chi = FiniteCharacter.from_index(5, 1, 1)
        assert chi.conductor_exponent == 1
        assert chi(2) == pytest.approx(1j)
        assert chi(4) == pytest.approx(-1)
        assert chi(5) == 0

    def test_trivial_index_reduces_conductor(self):
        chi = FiniteCharacter.from_index(3, 2, 0)
        assert chi.conductor_exponent == 0
        assert chi(7) == 1

    def test_sign_character_mod_four(self):
        chi = FiniteCharacter.from_index(2, 2, 0, sign=1)
        assert chi.conductor_exponent == 2
        assert chi(3) == pytest.approx(-1)
        assert chi(Fraction(5, 3)) == pytest.approx(-1)

    def test_conjugate(self):
        chi = FiniteCharacter.from_index(5, 1, 1)
        assert chi.conjugate()(2) == pytest.approx(-1j)

    def test_rejects_non_multiplicative_table(self):
        with pytest.raises(DomainError):
            FiniteCharacter(3, 1, ((1, 1 + 0j), (2, 1j)))

    def test_primitive_root(self):
        assert primitive_root(7) == 3
        with pytest.raises(DomainError):
            primitive_root(2, 3)


class TestLocallyConstantFn:
    def test_multiplicative_domain_vanishes_near_zero(self):
        with pytest.raises(DomainError):
            LocallyConstantFn(3, 0, 1, (1, 1, 1))

    def test_units_integral_and_shells(self):
        units = LocallyConstantFn.units(3)
        assert units.integral() == Fraction(2, 3)
        assert units.shell_integrals() == {0: 1, 1: 0}

    def test_radial_shell_integrals(self):
        f = LocallyConstantFn.radial(3, {0: 1, 1: 2})
        assert f.shell_integrals() == {0: 1, 1: 2, 2: 0}

    def test_dilation_moves_support(self):
        g = LocallyConstantFn.units(3).dilate(3)
        assert g(Fraction(1, 3)) == 1
        assert g(1) == 0

    def test_translation(self):
        g = LocallyConstantFn.ball_indicator(3, 0, 1).translate(1)
        assert [g(0), g(1), g(4), g(2)] == [0, 1, 1, 0]
        assert g.integral() == Fraction(1, 3)
        h = LocallyConstantFn.units(3).translate(Fraction(1, 3))
        assert h(Fraction(4, 3)) == 1
        assert h(Fraction(1, 3)) == 0
        assert h.integral() == Fraction(2, 3)

    def test_inversion_swaps_shells(self):
        g = LocallyConstantFn.shell(3, -1).inverted()
        assert g(3) == 1
        assert g(Fraction(1, 3)) == 0
        assert g(1) == 0

    def test_addition_aligns_grids(self):
        f = LocallyConstantFn.units(3) + LocallyConstantFn.shell(3, 2, 5)
        assert f(1) == 1
        assert f(9) == 5
        assert f(3) == 0

    def test_constant_on(self):
        units = LocallyConstantFn.units(3)
        assert units.constant_on(1, 1)
        assert not units.constant_on(0, 0)

    def test_pieces(self):
        assert len(LocallyConstantFn.units(3).pieces()) == 2

    def test_from_pieces_rejects_overlap(self):
        pieces = [(PAdicBall.around(0, 3, 1), 1), (PAdicBall.around(3, 3, 2), 1)]
        with pytest.raises(DomainError):
            LocallyConstantFn.from_pieces(3, pieces)

    def test_twisted_shell(self):
        chi = FiniteCharacter.from_index(5, 1, 1)
        f = LocallyConstantFn.shell(5, 0, character=chi)
        assert f(2) == pytest.approx(1j)
        assert f(5) == 0


class TestRadialTestFn:
    def test_unbounded_support_needs_certificate(self):
        with pytest.raises(DomainError):
            RadialTestFn(lambda y: y)

    def test_gaussian_mellin_matches_closed_form(self):
        h = RadialTestFn.gaussian_log(0.8, center=0.2)
        rho = 0.5 + 1.0j
        result = mellin(h, rho)
        assert abs(result.value - h.mellin_closed_form(rho)) < 1e-8

    def test_window_mellin_matches_closed_form(self):
        h = RadialTestFn.window(-1.0, 1.0)
        result = mellin(h, 0.3)
        assert result.value.real == pytest.approx(2 * math.sinh(0.3) / 0.3, abs=1e-8)

    def test_dilation_scales_mellin(self):
        h = RadialTestFn.gaussian_log(1.0)
        rho = 0.25 - 0.5j
        scaled = mellin(h.dilate(2.0), rho).value
        assert abs(scaled - 2**rho * h.mellin_closed_form(rho)) < 1e-8

    def test_inversion_flips_mellin(self):
        h = RadialTestFn.gaussian_log(1.0, center=0.5)
        assert h.inverted().mellin_closed_form(0.3) == pytest.approx(h.mellin_closed_form(-0.3))

    def test_bump_peak(self):
        h = RadialTestFn.from_parameters("bump", width=1.0)
        assert h.value_at_one() == pytest.approx(1.0)
        assert h.at_module(math.e) == 0.0
        assert h.at_module(0.0) == 0.0

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            RadialTestFn.from_parameters("sinc")


def test_fourier_real_of_gaussian():
    transform = fourier_real(
        lambda y: math.exp(-math.pi * y * y),
        (-math.inf, math.inf),
        decay_scale=1 / math.sqrt(math.pi),
    )
    value, error = transform(0.5)
    assert value == pytest.approx(math.exp(-math.pi / 4), abs=1e-9)
    assert error < 1e-8
    at_zero = transform(0.0)
    assert at_zero.value == pytest.approx(1.0, abs=1e-9)
    assert at_zero.value.imag == 0.0
    assert at_zero.error < 1e-8


def test_fourier_real_of_window():
    transform = fourier_real(lambda y: 1.0, (-0.5, 0.5))
    assert transform(0.0).value == pytest.approx(1.0, abs=1e-12)
    assert transform(1.0).value == pytest.approx(0.0, abs=1e-9)
    assert transform(0.5).value.real == pytest.approx(2 / math.pi, abs=1e-9)


def test_reference_functions():
    assert reference_f0_f1_f2(4.0) == pytest.approx((0.5, 1.5, 1.0))
    with pytest.raises(DomainError):
        reference_f0_f1_f2(0.0)
