"""Tests for the p-adic, real and S-local cutoff traces."""

import math
from fractions import Fraction

import numpy as np
import pytest

from src.errors import DomainError
from src.services.cutoff_trace import (
    SLocalConfig,
    slice_weight,
    symbol_g,
    trace_padic,
    trace_padic_character,
    trace_real,
    trace_real_ladder,
    trace_slocal,
)
from src.services.local_field import Domain, LogLinearNumber, Place
from src.services.principal_value import pv_finite
from src.services.test_functions import FiniteCharacter, LocallyConstantFn, RadialTestFn


def _mixed_functions(count: int = 24) -> list[LocallyConstantFn]:
    """Seeded shell sums plus an off-zero ball, on Q_2 and Q_3."""
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(count):
        p = int(rng.choice([2, 3]))
        picks = rng.choice([-1, 0, 1], size=int(rng.integers(1, 3)), replace=False)
        shells = {
            int(m): Fraction(int(rng.choice([-2, -1, 1, 2, 3])), int(rng.integers(1, 4)))
            for m in picks
        }
        v, depth = int(rng.integers(-1, 2)), int(rng.integers(1, 3))
        center = Fraction(int(rng.integers(1, p)), 1) * Fraction(p) ** v
        ball = LocallyConstantFn.ball_indicator(
            p, center, v + depth, Fraction(int(rng.integers(1, 4))), Domain.MULTIPLICATIVE
        )
        out.append(LocallyConstantFn.radial(p, shells) + ball)
    return out


class TestPadicTrace:
    def test_symbol_of_units(self):
        g = symbol_g(LocallyConstantFn.units(3))
        assert g.domain is Domain.ADDITIVE
        assert g(0) == 1
        assert g(1) == 1
        assert g(2) == 0

    @pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
    def test_units_trace_is_exact(self, n):
        report = trace_padic(Place.finite(3), LocallyConstantFn.units(3), n)
        assert report.exact
        assert report.residual_exact.is_zero
        assert report.computed == pytest.approx((2 * n + 1) * math.log(3))
        assert report.transform_check < 1e-9

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_outer_shell_trace_is_log_two(self, n):
        h = LocallyConstantFn.radial(2, {-1: 1})
        report = trace_padic(Place.finite(2), h, n)
        assert report.n0 == 1
        assert report.exact
        assert report.computed_exact.symbolic() == "log(2)"

    @pytest.mark.parametrize("h", _mixed_functions())
    def test_mixed_functions_trace_exactly(self, h):
        place = Place.finite(h.p)
        pv = pv_finite(place, h.inverted()).exact
        first = trace_padic(place, h, 0).n0
        for n in (first, first + 1, first + 3):
            report = trace_padic(place, h, n)
            assert report.residual_exact.is_zero
            lead = report.predicted_exact - pv
            assert (lead - LogLinearNumber.log(h.p, (2 * n + 1) * h(1))).is_zero

    @pytest.mark.parametrize("n", [2, 3])
    def test_character_trace(self, n):
        chi = FiniteCharacter.from_index(3, 1, 1)
        report = trace_padic_character(Place.finite(3), chi, n)
        assert report.exact
        assert report.computed == pytest.approx(2 * n * math.log(3))

    def test_unramified_character_is_rejected(self):
        with pytest.raises(DomainError):
            trace_padic_character(Place.finite(3), FiniteCharacter.trivial(3), 2)

    def test_wrong_place(self):
        with pytest.raises(DomainError):
            trace_padic(Place.finite(5), LocallyConstantFn.units(3), 1)

    def test_negative_cutoff(self):
        with pytest.raises(DomainError):
            trace_padic(Place.finite(3), LocallyConstantFn.units(3), -1)


class TestRealTrace:
    def test_symbol_support(self):
        symbol = symbol_g(RadialTestFn.bump(-0.5, 0.5))
        (a, b), (c, d) = symbol.intervals
        assert b == pytest.approx(-1 - math.exp(-0.5))
        assert c == pytest.approx(-1 + math.exp(-0.5))
        assert symbol(0.0) == pytest.approx(1.0)
        assert symbol(-1.0) == 0.0

    def test_symbol_needs_compact_support(self):
        with pytest.raises(DomainError):
            symbol_g(RadialTestFn.gaussian_log(1.0))

    def test_ladder_converges(self):
        h = RadialTestFn.bump(-0.5, 0.5)
        reports = trace_real_ladder(h, [4.0, 8.0, 16.0, 32.0])
        residuals = [abs(r.residual) for r in reports]
        assert residuals[-1] < 1e-4
        assert residuals[-1] <= residuals[0]
        assert reports[-1].predicted == pytest.approx(
            2 * math.log(32.0) + reports[-1].pv_terms["R"]
        )

    @pytest.mark.parametrize(
        "support", [(-0.5, 0.5), (-0.3, 0.3), (-1.0, 0.4), (-0.2, 0.7), (-0.6, 0.1)]
    )
    def test_bump_ladders_decrease(self, support):
        h = RadialTestFn.bump(*support)
        residuals = [abs(r.residual) for r in trace_real_ladder(h, [4.0, 8.0, 16.0, 32.0])]
        for earlier, later in zip(residuals, residuals[1:]):
            assert later <= earlier + 1e-7
        assert residuals[-1] < 1e-4

    def test_vanishing_at_one_halves_per_doubling(self):
        h = RadialTestFn.bump(math.log(2.0), math.log(4.0))
        assert h.value_at_one() == 0.0
        reports = trace_real_ladder(h, [2.0, 4.0, 8.0])
        residuals = [abs(r.residual) for r in reports]
        for earlier, later in zip(residuals, residuals[1:]):
            assert later < max(earlier / 2, 1e-7)
        assert reports[-1].predicted == pytest.approx(reports[-1].pv_terms["R"])

    def test_zero_function(self):
        report = trace_real(RadialTestFn.zero(), 4.0)
        assert report.computed == 0.0
        assert report.predicted == 0.0

    def test_cutoff_below_one(self):
        with pytest.raises(DomainError):
            trace_real(RadialTestFn.bump(-0.5, 0.5), 0.5)


class TestSLocalTrace:
    def test_two_primes_at_most(self):
        real = RadialTestFn.bump(-0.3, 0.3)
        finite = {p: LocallyConstantFn.units(p) for p in (2, 3, 5)}
        with pytest.raises(DomainError):
            SLocalConfig(real, finite)

    def test_units_of_two_primes(self):
        finite = {2: LocallyConstantFn.units(2), 3: LocallyConstantFn.units(3)}
        setup = SLocalConfig(RadialTestFn.bump(-0.3, 0.3), finite)
        ring = set(setup.units(1))
        assert len(ring) == 16
        assert {Fraction(6), Fraction(2, 3), Fraction(-3, 2), Fraction(-1, 6)} <= ring
        assert setup.describe() == "S = {2, 3, oo}"
        assert setup.sup_module((1, -1)) == pytest.approx(3.0)
        assert setup.window_ring() == 0

    def test_three_place_trace(self):
        finite = {2: LocallyConstantFn.units(2), 3: LocallyConstantFn.units(3)}
        setup = SLocalConfig(RadialTestFn.bump(-0.3, 0.3), finite)
        report = trace_slocal(setup, 8.0, 1e-5)
        assert set(report.pv_terms) == {"R", "Q_2", "Q_3"}
        assert report.mass_identity < 1e-8
        assert abs(report.place_residuals["Q_2"]) < 1e-6
        assert abs(report.place_residuals["Q_3"]) < 1e-6
        assert abs(report.residual) < 1e-4
        assert report.tail_bound < 1e-5

    def test_real_factor_must_be_compact(self):
        with pytest.raises(DomainError):
            SLocalConfig(RadialTestFn.gaussian_log(1.0))

    def test_units_of_s(self):
        setup = SLocalConfig(RadialTestFn.bump(-0.3, 0.3), {2: LocallyConstantFn.units(2)})
        assert sorted(setup.units(1)) == [-2, Fraction(-1, 2), Fraction(1, 2), 2]
        assert setup.describe() == "S = {2, oo}"

    def test_two_place_trace(self):
        setup = SLocalConfig(RadialTestFn.bump(-0.3, 0.3), {2: LocallyConstantFn.units(2)})
        report = trace_slocal(setup, 4.0, 1e-5)
        assert abs(report.residual) < 1e-5
        assert report.mass_identity < 1e-8
        assert set(report.pv_terms) == {"R", "Q_2"}
        assert abs(report.place_residuals["Q_2"]) < 1e-6
        assert report.error == pytest.approx(1e-5 + report.tail_bound)

    def test_archimedean_only_doubles_the_real_trace(self):
        h = RadialTestFn.bump(-0.5, 0.5)
        report = trace_slocal(SLocalConfig(h), 4.0, 1e-6)
        real = trace_real(h, 4.0, 1e-8)
        assert report.place == "S = {oo}"
        assert [t.q for t in report.breakdown] == ["1", "-1"]
        assert report.computed == pytest.approx(2 * real.computed, rel=1e-9)
        assert report.pv_terms["R"] == pytest.approx(2 * real.pv_terms["R"], abs=1e-5)
        assert report.tail_bound == 0.0

    def test_zero_real_factor(self):
        setup = SLocalConfig(RadialTestFn.zero(), {2: LocallyConstantFn.units(2)})
        report = trace_slocal(setup, 4.0, 1e-6)
        assert report.computed == 0.0
        assert report.predicted == 0.0
        assert report.mass_identity == 0.0

    def test_real_factor_vanishing_at_the_units(self):
        h = RadialTestFn.bump(math.log(1.1), math.log(1.9))
        setup = SLocalConfig(h, {2: LocallyConstantFn.units(2)})
        report = trace_slocal(setup, 8.0, 1e-5)
        assert report.mass_identity < 1e-8
        assert report.pv_terms["Q_2"] == 0.0
        assert report.predicted == pytest.approx(report.pv_terms["R"])
        assert abs(report.residual) < 1e-4

    @pytest.mark.parametrize("name", ["unit-finite", "interval-real"])
    def test_fundamental_domain_slices_agree(self, name):
        for module in (0.5, 3.0, 10.0):
            weight = slice_weight(name, module, 4.0, 2)
            assert weight == pytest.approx(2 * math.log(4.0) - math.log(module))

    def test_unknown_slice(self):
        with pytest.raises(DomainError):
            slice_weight("strip", 1.0, 4.0, 2)
