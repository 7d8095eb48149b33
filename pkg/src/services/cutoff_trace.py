"""Cutoff traces from the symbol formula.

Trace = int_{|u| <= Lambda^2} g^(u) (2 log' Lambda - log|u|) du with the symbol
g(lambda) = h(1/(lambda + 1)) / |lambda + 1|. The p-adic trace is an exact
finite sum; the real trace uses log-weight quadrature in u; the S-local trace
sums factorized local pieces over the S-units q.
"""

from __future__ import annotations

import bisect
import itertools
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
from pydantic import BaseModel
from scipy import integrate

from ..config import settings
from ..errors import ConvergenceError, DomainError, TruncationError
from .local_field import (
    Domain,
    LogLinearNumber,
    Place,
    PlaceKind,
    padic_fourier,
    valuation,
)
from .principal_value import pv_finite, pv_finite_char, pv_real
from .test_functions import FiniteCharacter, LocallyConstantFn, RadialTestFn

logger = logging.getLogger(__name__)

SATURATION_LIMIT = 2.0**40
FFT_CHECK_CELLS = 2**16


class QTerm(BaseModel):
    """Contribution of one S-unit q."""

    q: str
    value: float
    mass: float


class TraceReport(BaseModel):
    """Computed cutoff trace against 2 h(1) log' Lambda + sum of principal values."""

    place: str
    lam: float
    n: int | None = None
    n0: int | None = None
    computed: float
    predicted: float
    residual: float
    error: float = 0.0
    exact: bool = False
    computed_exact: LogLinearNumber | None = None
    predicted_exact: LogLinearNumber | None = None
    residual_exact: LogLinearNumber | None = None
    transform_check: float | None = None
    breakdown: list[QTerm] = []
    fundamental_domain: str | None = None
    slice_residual: float | None = None
    mass_identity: float | None = None
    pv_terms: dict[str, float] = {}
    place_terms: dict[str, float] = {}
    place_residuals: dict[str, float] = {}
    tail_bound: float | None = None


# Symbols


@dataclass(frozen=True)
class RealSymbol:
    """g(lambda) = h(1/(lambda + 1)) / |lambda + 1| for compactly supported radial h."""

    h: RadialTestFn
    intervals: tuple[tuple[float, float], ...]

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        shifted = np.abs(lam + 1)
        with np.errstate(divide="ignore"):
            safe = np.where(shifted > 0, shifted, 1.0)
            out = np.where(shifted > 0, self.h.at_module(1 / safe) / safe, 0.0)
        return float(out) if out.ndim == 0 else out

    def fourier_cos(self, u: float, tolerance: float) -> tuple[float, float]:
        """Re g^(u) = int g(lambda) cos(2 pi u lambda) d lambda."""
        total, error = 0.0, 0.0
        for a, b in self.intervals:
            if u == 0:
                value, err = integrate.quad(self, a, b, epsabs=tolerance, limit=400)
            else:
                value, err = integrate.quad(
                    self, a, b, weight="cos", wvar=2 * math.pi * u, epsabs=tolerance, limit=400
                )
            total, error = total + value, error + err
        return total, error


def symbol_g(h: RadialTestFn | LocallyConstantFn) -> RealSymbol | LocallyConstantFn:
    """The trace symbol of h; a locally constant function on Q_p for p-adic h."""
    if isinstance(h, LocallyConstantFn):
        if h.domain is not Domain.MULTIPLICATIVE:
            raise DomainError("symbol_g needs h on Q_p^* (vanishing near 0)")
        p, a, b = h.p, h.support_exponent, h.level
        support = max(b - 1, 0)
        level = max(b + 2 * a, a + 1, 1)

        def evaluate(lam: Fraction):
            shifted = lam + 1
            return h(1 / shifted) * Fraction(p) ** valuation(shifted, p)

        return LocallyConstantFn.tabulate(p, support, level, evaluate, Domain.ADDITIVE)
    if not h.is_compact:
        raise DomainError("symbol_g needs h compactly supported on K^* (away from 0 and oo)")
    if h.y_max <= h.y_min:
        return RealSymbol(h, ())
    near, far = math.exp(-h.y_max), math.exp(-h.y_min)
    intervals = ((-1 - far, -1 - near), (-1 + near, -1 + far))
    return RealSymbol(h, intervals)


# p-adic factor


@dataclass(frozen=True)
class PadicFactor:
    """Partial masses P_j = p^j int_{p^j Z_p} g of a locally constant symbol g.

    P_j = p^j * total for j <= -A and P_j = g(0) for j >= B, so every sum over j
    is finite plus a geometric tail.
    """

    p: int
    support_exponent: int
    level: int
    at_zero: Any
    total: Any
    middle: dict[int, Any] = field(default_factory=dict)

    @classmethod
    def from_symbol(cls, g: LocallyConstantFn) -> PadicFactor:
        p, a, b = g.p, g.support_exponent, g.level
        cell = Fraction(p) ** (-b)
        by_valuation: dict[int, Any] = {}
        for k, v in enumerate(g.values):
            if k == 0 or v == 0:
                continue
            m = valuation(k, p)
            by_valuation[m] = by_valuation.get(m, 0) + v
        total = (g.values[0] + sum(by_valuation.values())) * cell
        middle = {}
        for j in range(-a + 1, b):
            inside = g.values[0] + sum(v for m, v in by_valuation.items() if m >= j + a)
            middle[j] = Fraction(p) ** j * inside * cell
        return cls(p, a, b, g.values[0], total, middle)

    def partial(self, j: int) -> Any:
        if j <= -self.support_exponent:
            return Fraction(self.p) ** j * self.total
        if j >= self.level:
            return self.at_zero
        return self.middle[j]

    def shell_mass(self, j: int) -> Any:
        """int_{|u| = p^j} g^(u) du."""
        return self.partial(j) - self.partial(j - 1)

    def sum_upto(self, top: int) -> Any:
        """sum_{j <= top} P_j."""
        a, b = self.support_exponent, self.level
        geometric = Fraction(self.p) ** min(top, -a) / (1 - Fraction(1, self.p))
        total = self.total * geometric
        for j in range(-a + 1, min(top, b - 1) + 1):
            total += self.middle[j]
        if top >= b:
            total += (top - b + 1) * self.at_zero
        return total

    def first_moment(self) -> Any:
        """sum_j j * shell_mass(j) = B g(0) - sum_{j <= B - 1} P_j."""
        return self.level * self.at_zero - self.sum_upto(self.level - 1)


def _snap(value: Any, p: int, depth: int) -> Fraction | None:
    if isinstance(value, int | Fraction):
        return Fraction(value)
    z = complex(value)
    d = p**depth
    k = round(z.real * d)
    if abs(z.imag) < 1e-9 and abs(z.real * d - k) < 1e-6:
        return Fraction(k, d)
    return None


def _fft_shell_check(g: LocallyConstantFn, factor: PadicFactor) -> float | None:
    """Largest gap between shell masses of the FFT transform and the exact partial sums."""
    if g.cells > FFT_CHECK_CELLS:
        return None
    transform = padic_fourier(g)
    p, a, b = transform.p, transform.support_exponent, transform.level
    cell = float(Fraction(p) ** (-b))
    shells: dict[int, complex] = {}
    for k, w in enumerate(transform.values):
        if k == 0:
            continue
        j = a - valuation(k, p)
        shells[j] = shells.get(j, 0j) + complex(w) * cell
    gaps = [abs(shells.get(j, 0j) - complex(factor.shell_mass(j))) for j in range(-b + 1, a + 1)]
    return max(gaps, default=0.0)


def trace_padic(
    place: Place, h: LocallyConstantFn, n: int, character: FiniteCharacter | None = None
) -> TraceReport:
    """Exact cutoff trace at Lambda = p^n: log p * sum_{j <= 2n} p^j int_{p^j Z_p} g.

    ``character`` marks h = conj(chi) on Z_p^*, whose principal value is known exactly.
    """
    if place.kind is not PlaceKind.FINITE or place.residue_cardinality != h.p:
        raise DomainError(f"function on Q_{h.p} traced at {place}")
    if n < 0:
        raise DomainError("cutoff exponent n must be >= 0")
    p = h.p
    g = symbol_g(h)
    factor = PadicFactor.from_symbol(g)
    n0 = max(0, math.ceil((g.level - 1) / 2))
    raw = factor.sum_upto(2 * n)
    at_one = h(1)
    depth = g.support_exponent + g.level + 4
    check = _fft_shell_check(g, factor)

    snapped, snapped_one = _snap(raw, p, depth), _snap(at_one, p, depth)
    pv_exact = None
    if character is not None:
        pv_exact = pv_finite_char(place, character).exact
    elif h.is_rational:
        pv_exact = pv_finite(place, h.inverted()).exact

    if pv_exact is not None and snapped is not None and snapped_one is not None:
        computed = LogLinearNumber.log(p, snapped)
        predicted = LogLinearNumber.log(p, (2 * n + 1) * snapped_one) + pv_exact
        residual = computed - predicted
        logger.debug(f"trace at {place}, n={n}: {computed} vs {predicted}")
        return TraceReport(
            place=str(place),
            lam=float(p) ** n,
            n=n,
            n0=n0,
            computed=float(computed),
            predicted=float(predicted),
            residual=float(residual),
            exact=residual.is_zero,
            computed_exact=computed,
            predicted_exact=predicted,
            residual_exact=residual,
            transform_check=check,
        )

    value = complex(raw).real * math.log(p)
    pv_value = pv_finite(place, h.inverted())
    prediction = (2 * n + 1) * math.log(p) * complex(at_one).real + pv_value.value
    return TraceReport(
        place=str(place),
        lam=float(p) ** n,
        n=n,
        n0=n0,
        computed=value,
        predicted=prediction,
        residual=value - prediction,
        error=1e-12 * max(1.0, abs(value)),
        transform_check=check,
    )


def trace_padic_character(place: Place, character: FiniteCharacter, n: int) -> TraceReport:
    """Twisted local trace for h = conj(chi) on Z_p^*: (2n + 1) log p - f log p, exact."""
    if character.conductor_exponent == 0:
        raise DomainError("use trace_padic for the unramified case")
    h = LocallyConstantFn.shell(place.residue_cardinality, 0, 1, character.conjugate())
    return trace_padic(place, h, n, character)


# Real factor


class RealMoments:
    """A(T) = int_{|u| <= T} g^ and B(T) = int_{|u| <= T} g^ log|u| for a real symbol.

    Cumulative on a doubling grid until both stop moving; beyond the saturation
    point T_sat the limits are returned.
    """

    def __init__(self, symbol: RealSymbol, tolerance: float | None = None):
        self.symbol = symbol
        self.tolerance = settings.quad_tolerance if tolerance is None else tolerance
        self.points = [0.0]
        self.values: list[tuple[float, float]] = [(0.0, 0.0)]
        self.error = 0.0
        self.t_sat = math.inf
        self._saturate()

    def _re_hat(self, u: float) -> float:
        value, err = self.symbol.fourier_cos(u, self.tolerance * 1e-2)
        return value

    def _piece(self, lo: float, hi: float) -> tuple[float, float, float]:
        if hi <= lo:
            return 0.0, 0.0, 0.0
        a, err_a = integrate.quad(self._re_hat, lo, hi, epsabs=self.tolerance, limit=2000)
        if lo == 0:
            b, err_b = integrate.quad(
                self._re_hat, 0.0, hi, weight="alg-loga", wvar=(0.0, 0.0),
                epsabs=self.tolerance, limit=2000,
            )
        else:
            b, err_b = integrate.quad(
                lambda u: self._re_hat(u) * math.log(u), lo, hi,
                epsabs=self.tolerance, limit=2000,
            )
        # g real: g^(-u) = conj g^(u), so only 2 Re g^ survives on [-T, T]
        return 2 * a, 2 * b, 2 * (err_a + err_b)

    def _saturate(self) -> None:
        if not self.symbol.intervals:
            self.t_sat = 0.0
            return
        t = 1.0
        while t <= SATURATION_LIMIT:
            lo = self.points[-1]
            da, db, err = self._piece(lo, t)
            a0, b0 = self.values[-1]
            self.points.append(t)
            self.values.append((a0 + da, b0 + db))
            self.error += err
            sample = max(abs(self._re_hat(u)) for u in np.linspace(lo, t, 17))
            if lo > 0 and abs(da) + abs(db) < self.tolerance and sample * t * (
                1 + math.log(t)
            ) < self.tolerance:
                self.t_sat = t
                logger.debug(f"real moments saturated at T={t:g}")
                return
            t *= 2
        raise ConvergenceError(f"Fourier moments of the symbol did not settle by T={t:g}")

    @property
    def limits(self) -> tuple[float, float]:
        return self.values[-1]

    def at(self, t: float) -> tuple[float, float]:
        if t >= self.t_sat:
            return self.limits
        i = bisect.bisect_right(self.points, t) - 1
        da, db, err = self._piece(self.points[i], t)
        a0, b0 = self.values[i]
        self.error += err
        return a0 + da, b0 + db

    def weighted(self, t: float) -> float:
        """int_{|u| <= T} g^(u) (log T - log|u|) du."""
        if t <= 0:
            return 0.0
        a, b = self.at(t)
        return a * math.log(t) - b


def trace_real(h: RadialTestFn, lam: float, tolerance: float | None = None) -> TraceReport:
    """Cutoff trace at R against 2 h(1) log Lambda + pv_real(u -> h(1/u))."""
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    if lam < 1:
        raise DomainError("Lambda must be >= 1")
    symbol = symbol_g(h)
    if not isinstance(symbol, RealSymbol):
        raise DomainError("trace_real needs a radial test function")
    moments = RealMoments(symbol, tolerance)
    computed = moments.weighted(lam * lam)
    pv = pv_real(h.inverted(), tolerance) if symbol.intervals else None
    at_one = h.value_at_one()
    predicted = 2 * at_one * math.log(lam) + (pv.value if pv else 0.0)
    error = moments.error + (pv.error if pv else 0.0)
    logger.debug(f"trace at R, Lambda={lam:g}: {computed} vs {predicted}")
    return TraceReport(
        place="R",
        lam=lam,
        computed=computed,
        predicted=predicted,
        residual=computed - predicted,
        error=error,
        pv_terms={"R": pv.value if pv else 0.0},
    )


def trace_real_ladder(
    h: RadialTestFn, lams: list[float], tolerance: float | None = None
) -> list[TraceReport]:
    """trace_real over a Lambda ladder, sharing one set of Fourier moments."""
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    symbol = symbol_g(h)
    moments = RealMoments(symbol, tolerance)
    pv = pv_real(h.inverted(), tolerance) if symbol.intervals else None
    at_one = h.value_at_one()
    reports = []
    for lam in lams:
        computed = moments.weighted(lam * lam)
        predicted = 2 * at_one * math.log(lam) + (pv.value if pv else 0.0)
        reports.append(
            TraceReport(
                place="R",
                lam=lam,
                computed=computed,
                predicted=predicted,
                residual=computed - predicted,
                error=moments.error + (pv.error if pv else 0.0),
                pv_terms={"R": pv.value if pv else 0.0},
            )
        )
    return reports


# S-local trace


@dataclass(frozen=True)
class SLocalConfig:
    """S = {oo} plus at most two primes; f = f_oo (x) prod_p f_p, O_S^* = +-prod p^Z."""

    f_real: RadialTestFn
    f_finite: dict[int, LocallyConstantFn] = field(default_factory=dict)
    radius: int = 12

    def __post_init__(self):
        if len(self.f_finite) > 2:
            raise DomainError("S-local traces support at most two finite primes")
        for p, f in self.f_finite.items():
            if f.p != p or f.domain is not Domain.MULTIPLICATIVE:
                raise DomainError(f"finite factor at {p} must be a function on Q_{p}^*")
        if not self.f_real.is_compact:
            raise DomainError("the real factor must be compactly supported on R^*")

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(sorted(self.f_finite))

    @property
    def prime(self) -> int | None:
        return self.primes[0] if self.primes else None

    def exponents(self, ring: int) -> Iterator[tuple[int, ...]]:
        """Exponent vectors k with max |k_i| = ring."""
        span = range(-ring, ring + 1)
        for k in itertools.product(span, repeat=len(self.primes)):
            if max(map(abs, k), default=0) == ring:
                yield k

    def unit(self, k: tuple[int, ...]) -> Fraction:
        powers = (Fraction(p) ** e for p, e in zip(self.primes, k, strict=True))
        return math.prod(powers, start=Fraction(1))

    def units(self, ring: int) -> Iterator[Fraction]:
        """S-units q = +-prod p^k_p with max |k_p| = ring (just +-1 when S = {oo})."""
        for k in self.exponents(ring):
            q = self.unit(k)
            yield q
            yield -q

    def sup_module(self, k: tuple[int, ...]) -> float:
        """Sup_{v in S} |q|_v for q = +-prod p^k_p."""
        real = math.fsum(e * math.log(p) for p, e in zip(self.primes, k, strict=True))
        logs = [real] + [-e * math.log(p) for p, e in zip(self.primes, k, strict=True)]
        return math.exp(max(logs))

    def window_ring(self) -> int:
        """Ring bound on the S-units q with f_w(q) != 0 at every place but one.

        Outside it every per-place weight of h = sum_q f(q .) vanishes, so the remaining
        I_q only carry the cutoff remainder.
        """
        if not self.primes:
            return 0
        logs = {p: math.log(p) for p in self.primes}
        # f_p(q) != 0 needs v_p(q) in [-A, B - 1]
        reach = {
            p: max(abs(f.support_exponent), abs(f.level - 1)) for p, f in self.f_finite.items()
        }
        span = max(abs(self.f_real.y_min), abs(self.f_real.y_max))
        ring = max(reach.values())
        for p in self.primes:
            others = math.fsum(reach[r] * logs[r] for r in self.primes if r != p)
            ring = max(ring, math.floor((span + others) / logs[p]))
        return ring

    def tail_sum(self, ring: int, depth: int = 40) -> float:
        """sum over rings beyond ``ring`` of 1 / Sup_S |q|_v, both signs."""
        if not self.primes:
            return 0.0
        if len(self.primes) == 1:
            p = self.primes[0]
            return 4 * float(p) ** (-ring) / (p - 1)
        total = math.fsum(
            2 / self.sup_module(k)
            for r in range(ring + 1, ring + depth + 1)
            for k in self.exponents(r)
        )
        # Sup_S |q|_v >= p_min^(r / 2) on ring r, which has 8 r exponent vectors
        x = self.primes[0] ** -0.5
        top = ring + depth + 1
        return total + 16 * x**top * (top / (1 - x) + x / (1 - x) ** 2)

    def describe(self) -> str:
        if not self.primes:
            return "S = {oo}"
        return "S = {" + ", ".join(map(str, self.primes)) + ", oo}"


def slice_weight(slice_name: str, module: float, lam: float, p: int | None) -> float:
    """rho^-1 measure of {x in D : |u| / Lambda <= |x| <= Lambda} for a fundamental domain D.

    "unit-finite": D = {|x_p| = 1 for p in S} x R_+ (a single tile).
    "interval-real": D = {x_oo in [1, p)} x Q_p^* for the smallest p in S (with |x_p'| = 1 at
    any second prime), tiled over the shells of Q_p.
    """
    lo, hi = math.log(module) - math.log(lam), math.log(lam)
    if hi <= lo:
        return 0.0
    if slice_name == "unit-finite" or p is None:
        return hi - lo
    if slice_name == "interval-real":
        step = math.log(p)
        total = 0.0
        # |x| = x_oo p^-k, so log x_oo in [lo + k step, hi + k step] meets [0, step)
        for k in range(math.floor(-hi / step) - 1, math.ceil(-lo / step) + 2):
            a, b = max(lo + k * step, 0.0), min(hi + k * step, step)
            total += max(b - a, 0.0)
        return total
    raise DomainError(f"Unknown fundamental domain slice: {slice_name}")


def _slice_residual(slice_name: str, lam: float, p: int | None) -> float:
    worst = 0.0
    for t in np.linspace(0.05, 12.0, 40):
        module = lam * lam * math.exp(-t)
        exact = 2 * math.log(lam) - math.log(module)
        worst = max(worst, abs(slice_weight(slice_name, module, lam, p) - exact))
    return worst


@dataclass
class _QPieces:
    value: float
    real_mass: float
    finite_mass: float
    places: dict[str, float]


def _q_term(
    config: SLocalConfig,
    q: Fraction,
    lam: float,
    tolerance: float,
    cache: dict[Fraction, RealMoments],
) -> _QPieces:
    """I_q for one S-unit, split into its log-weighted pieces per place.

    With shell masses M_j at each prime, I_q = sum_j prod_p M_{j_p} W(Lambda^2 prod p^-j_p)
    where W(T) = A(T) log T - B(T) is the real weighted moment.
    """
    if abs(q) not in cache:
        f_real = config.f_real.dilate(1 / abs(float(q)))
        cache[abs(q)] = RealMoments(symbol_g(f_real), tolerance)
    moments = cache[abs(q)]
    a_inf, b_inf = moments.limits
    log_l2 = 2 * math.log(lam)
    primes = config.primes
    factors = [PadicFactor.from_symbol(symbol_g(config.f_finite[p].dilate(q))) for p in primes]
    m0 = [complex(f.at_zero).real for f in factors]
    m1 = [complex(f.first_moment()).real for f in factors]
    steps = [math.log(p) for p in primes]
    mass = math.prod(m0)

    # saturated part: every shell treated as T_j >= T_sat, in closed form
    places = {"R": -mass * b_inf}
    for i, p in enumerate(primes):
        rest = math.prod(m0[:i] + m0[i + 1 :])
        places[f"Q_{p}"] = -a_inf * steps[i] * m1[i] * rest
    lead = a_inf * mass * log_l2

    # unsaturated shells: sum_p j_p log p > log(Lambda^2 / T_sat)
    correction = 0.0
    if moments.t_sat > 0 and math.isfinite(moments.t_sat):
        threshold = log_l2 - math.log(moments.t_sat)
        tops = [f.level for f in factors]
        ranges = []
        for i in range(len(primes)):
            others = math.fsum(t * s for k, (t, s) in enumerate(zip(tops, steps)) if k != i)
            ranges.append(range(math.floor((threshold - others) / steps[i]) + 1, tops[i] + 1))
        for shells in itertools.product(*ranges):
            level = math.fsum(j * s for j, s in zip(shells, steps, strict=True))
            if level <= threshold:
                continue
            weight = math.prod(
                complex(f.shell_mass(j)).real for f, j in zip(factors, shells, strict=True)
            )
            if weight == 0:
                continue
            t = lam * lam * math.exp(-level)
            correction += weight * (moments.weighted(t) - (a_inf * math.log(t) - b_inf))
    places["R"] += correction
    value = lead + math.fsum(places.values())
    return _QPieces(value, a_inf, mass, places)


def trace_slocal(
    config: SLocalConfig,
    lam: float,
    tolerance: float = 1e-8,
    fundamental_domain: str = "unit-finite",
) -> TraceReport:
    """sum_q I_q over S-units against 2 h(1) log Lambda + sum_{v in S} int' h_v(u^-1) / |1 - u|.

    h_v is the restriction of h = sum_q f(q .) to the place v. Every ring up to the support
    window is summed; past it the rings continue until the envelope
    C / Sup_S |q|_v, calibrated on the newest ring, bounds the rest below the tolerance.
    """
    if lam < 1:
        raise DomainError("Lambda must be >= 1")
    p = config.prime
    window = config.window_ring()
    terms: list[QTerm] = []
    pieces: list[_QPieces] = []
    moments: dict[Fraction, RealMoments] = {}
    ring, tail = 0, 0.0
    while True:
        envelope = 0.0
        for k in config.exponents(ring):
            base = config.unit(k)
            for q in (base, -base):
                piece = _q_term(config, q, lam, tolerance * 1e-2, moments)
                pieces.append(piece)
                terms.append(
                    QTerm(q=str(q), value=piece.value, mass=piece.real_mass * piece.finite_mass)
                )
                envelope = max(envelope, abs(piece.value) * config.sup_module(k))
        tail = envelope * config.tail_sum(ring)
        if not config.primes or (ring > window and tail < tolerance):
            break
        ring += 1
        if ring > config.radius:
            raise TruncationError(
                f"S-unit tail past ring {ring - 1} is still bounded only by {tail:.2e}",
                required=max(config.radius + 4, window + 2),
            )
    logger.debug(f"{config.describe()}: {len(pieces)} S-units, window {window}, tail {tail:.2e}")
    computed = math.fsum(piece.value for piece in pieces)

    # identity sum_q int g^_q = h(1) = sum_q f(q)
    units = [q for r in range(ring + 1) for q in config.units(r)]
    at_one = math.fsum(_f_at(config, q) for q in units)
    mass_identity = abs(math.fsum(piece.real_mass * piece.finite_mass for piece in pieces) - at_one)

    pv_terms = _slocal_principal_values(config, units, tolerance)
    predicted = 2 * at_one * math.log(lam) + math.fsum(pv_terms.values())
    place_terms = {v: math.fsum(piece.places[v] for piece in pieces) for v in pv_terms}
    return TraceReport(
        place=config.describe(),
        lam=lam,
        computed=computed,
        predicted=predicted,
        residual=computed - predicted,
        error=tolerance + tail,
        breakdown=terms,
        fundamental_domain=fundamental_domain,
        slice_residual=_slice_residual(fundamental_domain, lam, p),
        mass_identity=mass_identity,
        pv_terms=pv_terms,
        place_terms=place_terms,
        place_residuals={v: place_terms[v] - pv_terms[v] for v in pv_terms},
        tail_bound=tail,
    )


def _finite_weight(config: SLocalConfig, q: Fraction, skip: int | None = None) -> float:
    """prod_{p in S, p != skip} f_p(q)."""
    return math.prod(
        (complex(f(q)).real for p, f in config.f_finite.items() if p != skip), start=1.0
    )


def _f_at(config: SLocalConfig, q: Fraction) -> float:
    return float(config.f_real(float(q))) * _finite_weight(config, q)


def _slocal_principal_values(
    config: SLocalConfig, units: list[Fraction], tolerance: float
) -> dict[str, float]:
    """Per-place principal values of u -> h_v(1/u)."""
    f_real = config.f_real
    active = [(float(q), w) for q in units if (w := _finite_weight(config, q)) != 0]

    def h_real(u: float) -> float:
        return sum(w * float(f_real(q * u)) for q, w in active)

    def h_real_inverted(u: float) -> float:
        return h_real(1 / u) if u != 0 else 0.0

    if active and f_real.y_max > f_real.y_min:
        shifts = [-math.log(abs(q)) for q, _ in active]
        window = (
            min(shifts) + f_real.y_min,
            max(shifts) + f_real.y_max,
        )
        inverted_window = (-window[1], -window[0])
        real_pv = pv_real(
            h_real_inverted, tolerance, value_at_one=h_real(1.0), window=inverted_window
        ).value
    else:
        real_pv = 0.0
    out = {"R": real_pv}
    for p, f_p in config.f_finite.items():
        h_p = None
        for q in units:
            c = float(f_real(float(q))) * _finite_weight(config, q, skip=p)
            if c != 0:
                term = f_p.dilate(q) * c
                h_p = term if h_p is None else h_p + term
        out[f"Q_{p}"] = 0.0 if h_p is None else pv_finite(Place.finite(p), h_p.inverted()).value
    return out
