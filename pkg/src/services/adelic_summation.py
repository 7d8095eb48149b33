"""E(f)(lambda) = lambda^(1/2) sum_{q in Q^*} f(q lambda) on factorizable adelic test functions."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from pydantic import BaseModel
from scipy import integrate, special

from ..errors import DomainError, QuadratureError
from .local_field import Place, homogeneous_delta_prime, is_prime, padic_fourier, valuation
from .test_functions import LocallyConstantFn
from .zeta_zeros import zeta

logger = logging.getLogger(__name__)

TAIL_TARGET = 1e-17
S0_TOLERANCE = 1e-12


@dataclass(frozen=True)
class GaussianSeries:
    """sum_k a_k x^{d_k} exp(-pi b_k x^2) with d_k in {0, 1}."""

    terms: tuple[tuple[complex, float, int], ...]

    def __post_init__(self):
        for a, b, degree in self.terms:
            if b <= 0:
                raise DomainError(f"Gaussian width must be positive, got {b}")
            if degree not in (0, 1):
                raise DomainError("only x^0 and x^1 Gaussian terms are supported")

    @classmethod
    def gaussian(cls, b: float = 1.0, a: complex = 1.0) -> GaussianSeries:
        return cls(((a, b, 0),))

    @classmethod
    def combination(cls, amplitudes: Sequence[complex], widths: Sequence[float]) -> GaussianSeries:
        return cls(tuple((a, b, 0) for a, b in zip(amplitudes, widths, strict=True)))

    @classmethod
    def s0_example(cls) -> GaussianSeries:
        """Widths (1, 2, 4) with f(0) = int f = 0."""
        root = math.sqrt(2)
        return cls.combination((root / 2, -(2 + root) / 2, 1.0), (1.0, 2.0, 4.0))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = sum(a * x**d * np.exp(-math.pi * b * x * x) for a, b, d in self.terms)
        return out if np.ndim(out) else complex(out)

    @property
    def at_zero(self) -> complex:
        return complex(sum(a for a, _, d in self.terms if d == 0))

    def integral(self) -> complex:
        return complex(sum(a / math.sqrt(b) for a, b, d in self.terms if d == 0))

    def fourier(self) -> GaussianSeries:
        """Transform against exp(-2 pi i x xi)."""
        out = []
        for a, b, d in self.terms:
            if d == 0:
                out.append((a / math.sqrt(b), 1 / b, 0))
            else:
                out.append((-1j * a * b**-1.5, 1 / b, 1))
        return GaussianSeries(tuple(out))

    def local_delta(self, s: complex) -> complex:
        """int_{R^*} f |x|^s d*x / (pi^{-s/2} Gamma(s/2)) = (1/2) sum a_k b_k^{-s/2} (even part)."""
        return complex(sum(0.5 * a * b ** (-s / 2) for a, b, d in self.terms if d == 0))

    def envelope(self) -> tuple[float, float]:
        """(sum |a_k|, min b_k): |f(x)| <= A (1 + |x|) exp(-pi b x^2)."""
        return sum(abs(a) for a, _, _ in self.terms), min(b for _, b, _ in self.terms)


@dataclass(frozen=True)
class AdelicTestFn:
    """f_oo (x) prod_{p in S} f_p (x) prod_{p not in S} 1_{Z_p}, finite factors unit-invariant."""

    archimedean: GaussianSeries
    finite: dict[int, LocallyConstantFn] = field(default_factory=dict)
    _weights: dict[int, complex] = field(
        default_factory=dict, init=False, compare=False, repr=False
    )

    def __post_init__(self):
        for p, f in self.finite.items():
            if not is_prime(p) or f.p != p:
                raise DomainError(f"finite factor keyed by {p} is not a function on Q_{p}")
            if not _is_radial(f):
                raise DomainError(f"finite factor at {p} is not invariant under Z_{p}^*")

    @classmethod
    def standard(cls, archimedean: GaussianSeries | None = None) -> AdelicTestFn:
        """1_{Z^} (x) f_oo."""
        return cls(archimedean or GaussianSeries.gaussian())

    @property
    def denominator(self) -> int:
        """D with supp prod f_p inside (1/D) Z^."""
        return math.prod(p ** max(f.support_exponent, 0) for p, f in self.finite.items())

    def finite_weight(self, n: int) -> complex:
        """prod_p f_p(n / D)."""
        cached = self._weights.get(n)
        if cached is None:
            d = self.denominator
            cached = complex(math.prod(complex(f(Fraction(n, d))) for f in self.finite.values()))
            self._weights[n] = cached
        return cached

    @property
    def at_zero(self) -> complex:
        return self.archimedean.at_zero * math.prod(
            complex(f.values[0]) for f in self.finite.values()
        )

    def integral(self) -> complex:
        return self.archimedean.integral() * math.prod(
            complex(f.integral()) for f in self.finite.values()
        )

    @property
    def in_s0(self) -> bool:
        return abs(self.at_zero) < S0_TOLERANCE and abs(self.integral()) < S0_TOLERANCE

    def fourier(self) -> AdelicTestFn:
        return AdelicTestFn(
            self.archimedean.fourier(), {p: padic_fourier(f) for p, f in self.finite.items()}
        )


def _is_radial(f: LocallyConstantFn) -> bool:
    p = f.p
    for k, v in enumerate(f.values):
        if k == 0:
            continue
        if abs(complex(v) - complex(f.values[p ** valuation(k, p)])) > 1e-12:
            return False
    return True


class EMapReport(BaseModel):
    """E(f)(lambda) with its truncation."""

    lam: float
    value: float
    imag: float
    terms: int
    tail_bound: float


class FunctionalEquationReport(BaseModel):
    """E(f)(lambda) - E(f^)(1/lambda) against lambda^{-1/2} int f - lambda^{1/2} f(0)."""

    grid: list[float]
    differences: list[float]
    boundary_terms: list[float]
    residuals: list[float]
    max_residual: float
    in_s0: bool


class MellinReport(BaseModel):
    """int_0^oo E(f)(x) x^{s - 1/2} d*x against c L(s) Delta'_s(f)."""

    s_star: float
    constant: tuple[float, float]
    s_points: list[tuple[float, float]]
    mellin: list[tuple[float, float]]
    ratios: list[tuple[float, float]]
    deviations: list[float]
    max_deviation: float


class DecayReport(BaseModel):
    """Slopes of -log|E(f)(lambda)| against |log lambda| at both ends."""

    exponents: list[float]
    large: list[float]
    small: list[float]
    min_slope: float


def _tail_bound(f: AdelicTestFn, scale: float, n: int) -> float:
    """Bound on sum_{|k| > n} |c_k f_oo(k scale)|."""
    amplitude, width = f.archimedean.envelope()
    weight = math.prod(max(abs(complex(v)) for v in g.values) for g in f.finite.values())
    x = n * scale
    root = math.sqrt(math.pi * width)
    integral = (
        special.erfc(root * x) / (2 * math.sqrt(width)) + math.exp(-math.pi * width * x * x)
        / (2 * math.pi * width)
    ) / scale
    return 2 * weight * amplitude * integral


def e_map_report(f: AdelicTestFn, lam: float, radius: int | None = None) -> EMapReport:
    """lambda^{1/2} sum_{n != 0} c_n f_oo(n lambda / D) up to a certified Gaussian tail."""
    if lam <= 0:
        raise DomainError("E(f) is evaluated at lambda > 0")
    scale = lam / f.denominator
    if radius is None:
        _, width = f.archimedean.envelope()
        radius = int(math.ceil(1 / (scale * math.sqrt(width)))) + 4
        while _tail_bound(f, scale, radius) > TAIL_TARGET:
            radius *= 2
    n = np.arange(1, radius + 1)
    weights = np.array([f.finite_weight(int(k)) for k in n]) if f.finite else np.ones(radius)
    values = f.archimedean(n * scale) + f.archimedean(-n * scale)
    total = math.sqrt(lam) * complex(np.sum(weights * values))
    return EMapReport(
        lam=lam,
        value=total.real,
        imag=total.imag,
        terms=radius,
        tail_bound=math.sqrt(lam) * _tail_bound(f, scale, radius),
    )


def e_map(f: AdelicTestFn, lam: float) -> float:
    """E(f)(lambda) in the trivial-character sector."""
    return e_map_report(f, lam).value


def _e_complex(f: AdelicTestFn, lam: float) -> complex:
    report = e_map_report(f, lam)
    return complex(report.value, report.imag)


def boundary_term(f: AdelicTestFn, lam: float) -> complex:
    """lambda^{-1/2} int f - lambda^{1/2} f(0), the Poisson defect outside S(A)_0."""
    return f.integral() / math.sqrt(lam) - math.sqrt(lam) * f.at_zero


def functional_equation_check(
    f: AdelicTestFn, grid: Sequence[float], require_s0: bool = True
) -> FunctionalEquationReport:
    """E(f)(lambda) = E(f^)(1/lambda) on S(A)_0; otherwise the gap is the boundary term."""
    if require_s0 and not f.in_s0:
        raise DomainError(
            f"f is not in S(A)_0: f(0) = {f.at_zero:.3g}, int f = {f.integral():.3g}"
        )
    transform = f.fourier()
    differences, boundaries, residuals = [], [], []
    for lam in grid:
        diff = _e_complex(f, lam) - _e_complex(transform, 1 / lam)
        delta = boundary_term(f, lam)
        differences.append(abs(diff))
        boundaries.append(delta.real)
        residuals.append(abs(diff - delta))
    logger.debug(f"functional equation over {len(grid)} points: max {max(residuals):.2e}")
    return FunctionalEquationReport(
        grid=list(grid),
        differences=differences,
        boundary_terms=boundaries,
        residuals=residuals,
        max_residual=max(residuals),
        in_s0=f.in_s0,
    )


def _log_window(f: AdelicTestFn) -> float:
    _, width = f.archimedean.envelope()
    _, width_hat = f.fourier().archimedean.envelope()
    d = max(f.denominator, f.fourier().denominator)
    narrow = min(width, width_hat)
    return 0.5 * math.log(d * d * 45 / (math.pi * narrow)) + 1.0


def mellin_of_e(f: AdelicTestFn, s: complex, tolerance: float = 1e-12) -> complex:
    """int_0^oo E(f)(x) x^{s - 1/2} dx / x; below x = 1 through E(f) = E(f^)(1/x)."""
    transform = f.fourier()
    top = _log_window(f)
    shift = complex(s) - 0.5

    def integrand(y: float, part: int) -> float:
        value = _e_complex(f, math.exp(y)) if y >= 0 else _e_complex(transform, math.exp(-y))
        z = value * np.exp(shift * y)
        return float(z.real if part == 0 else z.imag)

    total = 0j
    for lo, hi in ((-top, 0.0), (0.0, top)):
        re, err_re = integrate.quad(integrand, lo, hi, args=(0,), epsabs=tolerance, limit=400)
        im, err_im = integrate.quad(integrand, lo, hi, args=(1,), epsabs=tolerance, limit=400)
        if err_re + err_im > 1e4 * tolerance:
            raise QuadratureError(f"Mellin integral of E(f) at s={s} stalled", err_re + err_im)
        total += complex(re, im)
    return total


def completed_l(s: complex) -> complex:
    """pi^{-s/2} Gamma(s/2) zeta(s)."""
    s = complex(s)
    return complex(np.pi ** (-s / 2) * special.gamma(s / 2) * zeta(s))


def delta_prime(f: AdelicTestFn, s: complex) -> complex:
    """Product of the normalized local integrals of f."""
    total = f.archimedean.local_delta(s)
    for p, g in f.finite.items():
        total *= homogeneous_delta_prime(Place.finite(p), s, g)
    return total


def mellin_vs_L(  # noqa: N802
    f: AdelicTestFn, s_points: Sequence[complex], s_star: float = 0.5
) -> MellinReport:
    """Mellin transform of E(f) over c L(s) Delta'_s(f), with c calibrated at s_star."""
    if not f.in_s0:
        raise DomainError("the Mellin identity is stated for f in S(A)_0")
    for s in [s_star, *s_points]:
        if not 0 < complex(s).real < 1:
            raise DomainError(f"s = {s} is outside the critical strip")

    def ratio(s: complex) -> tuple[complex, complex]:
        m = mellin_of_e(f, s)
        reference = completed_l(s) * delta_prime(f, s)
        if abs(reference) < 1e-300:
            raise DomainError(f"L(s) Delta'_s vanishes at s = {s}")
        return m, m / reference

    _, c = ratio(s_star)
    mellins, ratios, deviations = [], [], []
    for s in s_points:
        m, r = ratio(complex(s))
        mellins.append((m.real, m.imag))
        ratios.append(((r / c).real, (r / c).imag))
        deviations.append(abs(r / c - 1))
    deviation = max(deviations, default=0.0)
    logger.info(f"Mellin constant c = {c:.12g} at s* = {s_star}; deviation {deviation:.2e}")
    return MellinReport(
        s_star=s_star,
        constant=(c.real, c.imag),
        s_points=[(complex(s).real, complex(s).imag) for s in s_points],
        mellin=mellins,
        ratios=ratios,
        deviations=deviations,
        max_deviation=deviation,
    )


def decay_report(f: AdelicTestFn, exponents: Sequence[float] = (1.0, 2.0, 3.0)) -> DecayReport:
    """-d log|E| / d|log lambda| between successive exponents, for lambda -> oo and lambda -> 0.

    On S(A)_0 the small-lambda side is read off E(f^)(1/lambda).
    """
    transform = f.fourier() if f.in_s0 else None

    def value(lam: float) -> complex:
        if lam < 1 and transform is not None:
            return _e_complex(transform, 1 / lam)
        return _e_complex(f, lam)

    def slopes(sign: int) -> list[float]:
        logs = [math.log(max(abs(value(math.exp(sign * t))), 1e-300)) for t in exponents]
        return [
            -(b - a) / (t2 - t1)
            for (a, t1), (b, t2) in zip(
                zip(logs, exponents, strict=True), zip(logs[1:], exponents[1:], strict=True)
            )
        ]

    large, small = slopes(1), slopes(-1)
    return DecayReport(
        exponents=list(exponents), large=large, small=small, min_slope=min(large + small)
    )
