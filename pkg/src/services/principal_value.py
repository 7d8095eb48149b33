"""Principal-value functionals int' f(u) / |1 - u| d*u at every place of Q.

Conventions: d*u = du / (2|u|) on R^*, d*z = dx dy / (pi |z|^2) on C^*, and
unit mass (or log p) on Z_p^* at a finite prime. The additive character is
the normalized one (trivial on Z_p, or exp(-2 pi i x) at infinity); other
characters are reached with ``pv_character_shift``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from fractions import Fraction
from typing import Any

import numpy as np
from pydantic import BaseModel
from scipy import integrate, special

from ..config import settings
from ..errors import DomainError, PrincipalValueError, QuadratureError
from .local_field import (
    Domain,
    HaarNormalization,
    LogLinearNumber,
    Place,
    PlaceKind,
    Rational,
    alpha0,
    valuation,
)
from .test_functions import FiniteCharacter, LocallyConstantFn, RadialTestFn

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
LOG_2PI = math.log(2 * math.pi)

# Real constant lambda and complex constant lambda' added to the regularized limit.
REAL_CONSTANT = LOG_2PI + EULER_GAMMA
COMPLEX_CONSTANT = 2 * (LOG_2PI + EULER_GAMMA)

NEAR_RADIUS = 0.5


class PVResult(BaseModel):
    """A regularized principal value at one place."""

    place: str
    value: float
    imag: float = 0.0
    exact: LogLinearNumber | None = None
    error: float = 0.0
    value_at_one: float
    value_at_one_imag: float = 0.0
    value_at_one_exact: str | None = None
    character: str | None = None
    regularization: str
    epsilon_trace: list[tuple[float, float]] = []


class UnitShellReport(BaseModel):
    """The two pieces of the pairing <log|x|, Fourier(1_{|y - 1| = 1})> at a prime."""

    p: int
    character_piece: LogLinearNumber
    integer_piece: LogLinearNumber
    total: LogLinearNumber


class PairingReport(BaseModel):
    """<-log|u|_v, Gaussian> by quadrature against its closed form."""

    place: str
    value: float
    closed_form: float
    error: float


def _richardson_limit(step_ratio: float, values: list[float]) -> float:
    n_steps = len(values)
    if n_steps == 1:
        return values[0]
    last_level = values
    this_level: list[float] = []
    for m in range(1, n_steps):
        this_level = []
        for i in range(n_steps - m):
            mult = step_ratio**m
            factor = 1.0 / (mult - 1.0)
            low = last_level[i]
            high = last_level[i + 1]
            this_level.append(factor * (mult * high - low))
        last_level = this_level
    return this_level[0]


def _quad(
    func: Callable[[float], float],
    a: float,
    b: float,
    tolerance: float,
    points: list[float] | None = None,
) -> tuple[float, float]:
    if not a < b:
        return 0.0, 0.0
    inner = None
    if points and math.isfinite(a) and math.isfinite(b):
        inner = [x for x in points if a < x < b] or None
    value, error = integrate.quad(
        func,
        a,
        b,
        epsabs=tolerance,
        epsrel=tolerance,
        limit=500,
        points=inner,
    )
    if not math.isfinite(value) or error > max(1e4 * tolerance, 1e-7):
        raise QuadratureError(
            f"principal-value quadrature on [{a}, {b}] stalled at error {error:.2e}", error
        )
    return value, error


def _prepare(
    f: Any, value_at_one: float | None, window: tuple[float, float] | None, tolerance: float
) -> tuple[Callable[[float], float], float, float, float]:
    """Scalar integrand, f(1) and a log-module window outside which f vanishes or is negligible."""
    if isinstance(f, RadialTestFn):
        if window is None:
            lo, hi, _ = f.integration_window(0.0, tolerance)
            window = (lo, hi)
        if value_at_one is None:
            value_at_one = f.value_at_one()
    lo, hi = window if window is not None else (-math.inf, math.inf)

    def func(u: float) -> float:
        return float(f(u))

    if value_at_one is None:
        value_at_one = func(1.0)
    return func, float(value_at_one), lo, hi


def _ladder(start: int | None, stop: int | None) -> list[int]:
    start = settings.pv_ladder_start if start is None else start
    stop = settings.pv_ladder_stop if stop is None else stop
    if stop - start < 3:
        raise DomainError("the extrapolation ladder needs at least four rungs")
    return list(range(start, stop + 1))


def _extrapolate(
    steps: list[float], values: list[float], order: int
) -> tuple[float, float, list[tuple[float, float]]]:
    """Richardson limit over a halving ladder, error from the last two extrapolants."""
    extrapolants = [
        _richardson_limit(2.0, values[k - order + 1 : k + 1])
        for k in range(order - 1, len(values))
    ]
    limit = extrapolants[-1]
    spread = abs(extrapolants[-1] - extrapolants[-2])
    trace = list(zip(steps, values, strict=True))
    return limit, spread, trace


# Finite places


def pv_finite(
    place: Place,
    f: LocallyConstantFn,
    normalization: HaarNormalization = HaarNormalization.LOG_SCALE_MODULATED,
    level: int | None = None,
) -> PVResult:
    """int' f(u) / |1 - u| d*u on Q_p^*, exact.

    f = f(1) 1_{Z_p^*} + g with g vanishing near 1; the unit-shell part is 0
    under the normalized character and the g part is a finite cell sum.
    ``level`` asserts that f is constant on 1 + p^level Z_p.
    """
    if place.kind is not PlaceKind.FINITE:
        raise DomainError(f"pv_finite needs a finite place, got {place}")
    p = place.residue_cardinality
    if f.p != p:
        raise DomainError(f"function on Q_{f.p} evaluated at {place}")
    if f.domain is not Domain.MULTIPLICATIVE:
        raise DomainError("pv_finite needs a function on Q_p^*")
    if level is not None and not f.constant_on(1, level):
        raise PrincipalValueError(
            f"f is not constant on the ball 1 + {p}^{level} Z_{p}; refine the level"
        )

    at_one = f(1)
    g = f - LocallyConstantFn.units(p, at_one)
    g = g.refine(max(g.support_exponent, 0), max(g.level, 1))
    a, b = g.support_exponent, g.level
    cell = Fraction(p) ** (-b)
    units_mass = 1 - Fraction(1, p)
    scale = Fraction(p) ** (-a)
    total: Any = Fraction(0)
    for k, v in enumerate(g.values):
        if k == 0 or v == 0:
            continue
        centre = k * scale
        distance = 1 - centre
        if distance == 0 or valuation(distance, p) >= b:
            raise PrincipalValueError(
                f"g does not vanish on the ball 1 + {p}^{b} Z_{p} around the singularity"
            )
        inverse_norm = Fraction(p) ** valuation(centre, p)
        total += v * cell * inverse_norm / units_mass * Fraction(p) ** valuation(distance, p)

    logged = normalization is HaarNormalization.LOG_SCALE_MODULATED
    if isinstance(total, Fraction):
        exact = LogLinearNumber.log(p, total) if logged else LogLinearNumber.rational(total)
        value, imag = float(exact), 0.0
    else:
        z = complex(total) * (math.log(p) if logged else 1.0)
        exact, value, imag = None, z.real, z.imag
    logger.debug(f"pv_finite at {place}: {exact if exact is not None else value}")
    return PVResult(
        place=str(place),
        value=value,
        imag=imag,
        exact=exact,
        value_at_one=complex(at_one).real,
        value_at_one_imag=complex(at_one).imag,
        value_at_one_exact=str(at_one) if isinstance(at_one, Fraction) else None,
        regularization=f"shell sum, unit shell 0, normalization {normalization}",
    )


def pv_finite_radial(
    place: Place,
    shells: dict[int, Any],
    normalization: HaarNormalization = HaarNormalization.LOG_SCALE_MODULATED,
) -> PVResult:
    """pv_finite for f = sum_m c_m 1_{v(u) = m} without tabulating a grid.

    The unit shell carries 0, the shell v(u) = m > 0 has |1 - u| = 1 and the
    shell v(u) = m < 0 has |1 - u| = p^-m.
    """
    if place.kind is not PlaceKind.FINITE:
        raise DomainError(f"pv_finite_radial needs a finite place, got {place}")
    p = place.residue_cardinality
    at_one = shells.get(0, 0)
    exact_inputs = all(isinstance(c, int | Fraction) for c in shells.values())
    if exact_inputs:
        total = sum(
            (Fraction(c) * (1 if m > 0 else Fraction(p) ** m)
             for m, c in sorted(shells.items()) if m != 0),
            Fraction(0),
        )
        logged = normalization is HaarNormalization.LOG_SCALE_MODULATED
        exact = LogLinearNumber.log(p, total) if logged else LogLinearNumber.rational(total)
        value = float(exact)
    else:
        parts = [float(c) * (1.0 if m > 0 else float(p) ** m)
                 for m, c in sorted(shells.items()) if m != 0 and c != 0]
        scale = math.log(p) if normalization is HaarNormalization.LOG_SCALE_MODULATED else 1.0
        exact, value = None, scale * math.fsum(parts)
    return PVResult(
        place=str(place),
        value=value,
        exact=exact,
        value_at_one=float(at_one),
        value_at_one_exact=str(Fraction(at_one)) if exact_inputs else None,
        regularization=f"radial shell sum, unit shell 0, normalization {normalization}",
    )


def pv_finite_char(
    place: Place,
    character: FiniteCharacter,
    normalization: HaarNormalization = HaarNormalization.LOG_SCALE_MODULATED,
    extra_levels: int = 1,
) -> PVResult:
    """int' chi(u) / |1 - u| d*u over Z_p^* for a ramified chi; equals -f log p.

    Summed over the cosets of 1 + p^F Z_p with F = f + extra_levels, grouped by
    j = v(1 - u); the regularized unit-shell term vanishes so only chi - 1 is summed.
    """
    if place.kind is not PlaceKind.FINITE or place.residue_cardinality != character.p:
        raise DomainError(f"{character.describe()} does not live at {place}")
    f = character.conductor_exponent
    if f == 0:
        raise PrincipalValueError("character is unramified; use pv_finite on its restriction")
    p = character.p
    depth = f + extra_levels
    modulus = p**depth
    sums = [0j] * depth
    counts = [0] * depth
    for k in range(1, modulus):
        if k % p == 0 or k == 1:
            continue
        j = valuation(1 - k, p)
        sums[j] += character(k)
        counts[j] += 1

    total = Fraction(0)
    weight = Fraction(1, modulus) / (1 - Fraction(1, p))
    for j in range(depth):
        s = sums[j]
        whole = round(s.real)
        if abs(s - whole) > 1e-9:
            raise PrincipalValueError(f"coset sum at v(1 - u) = {j} is not an integer: {s}")
        total += (whole - counts[j]) * Fraction(p) ** j * weight

    logged = normalization is HaarNormalization.LOG_SCALE_MODULATED
    exact = LogLinearNumber.log(p, total) if logged else LogLinearNumber.rational(total)
    if total != -f:
        raise PrincipalValueError(f"coset sum {total} disagrees with the conductor value {-f}")
    logger.debug(f"pv_finite_char {character.describe()}: {exact}")
    return PVResult(
        place=str(place),
        value=float(exact),
        exact=exact,
        value_at_one=1.0,
        value_at_one_exact="1",
        character=character.describe(),
        regularization=f"coset sums modulo {p}^{depth}",
    )


def unit_shell_regularization(p: int) -> UnitShellReport:
    """Pieces of <log|x|, Fourier(1_Y)>, Y = {|y - 1| = 1}, whose vanishing gives pv(1_{Z_p^*}) = 0.

    A = -(1/p) int_{p^-1 Z_p^*} alpha0(x) log p dx, B = (1 - 1/p) int_{Z_p} log|x| dx.
    """
    character_sum = sum(alpha0(Fraction(k, p), p) for k in range(1, p))
    whole = round(character_sum.real)
    if abs(character_sum - whole) > 1e-9:
        raise PrincipalValueError(f"root-of-unity sum is not an integer: {character_sum}")
    character_piece = LogLinearNumber.log(p, Fraction(-whole, p))
    # int_{Z_p} log|x| dx = -log p * sum_n n p^-n (1 - 1/p) = -log p / (p - 1)
    integer_piece = LogLinearNumber.log(p, -(1 - Fraction(1, p)) * Fraction(1, p - 1))
    return UnitShellReport(
        p=p,
        character_piece=character_piece,
        integer_piece=integer_piece,
        total=character_piece + integer_piece,
    )


# Archimedean places


def pv_real(
    f: Callable[[float], float] | RadialTestFn,
    tolerance: float | None = None,
    *,
    value_at_one: float | None = None,
    window: tuple[float, float] | None = None,
    ladder: tuple[int, int] | None = None,
) -> PVResult:
    """lambda f(1) + lim_eps [int_{|1-u| >= eps} f(u) / |1-u| d*u + f(1) log eps] on R^*.

    ``window`` bounds log|u| where f is supported (or negligible); test
    functions supply their own.
    """
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    func, at_one, lo, hi = _prepare(f, value_at_one, window, tolerance)
    delta = NEAR_RADIUS
    errors = 0.0

    def negative(y: float) -> float:
        x = math.exp(y)
        return func(-x) / (2 * (1 + x))

    def positive(y: float) -> float:
        x = math.exp(y)
        return func(x) / (2 * abs(1 - x))

    def folded(t: float) -> float:
        return func(1 + t) / (2 * (1 + t)) + func(1 - t) / (2 * (1 - t)) - at_one

    def near(t: float) -> float:
        return folded(t) / t

    value, err = _quad(negative, lo, hi, tolerance)
    fixed, errors = value, errors + err
    for a, b in ((lo, min(hi, math.log(1 - delta))), (max(lo, math.log(1 + delta)), hi)):
        value, err = _quad(positive, a, b, tolerance)
        fixed, errors = fixed + value, errors + err
    fixed += at_one * math.log(delta)

    ks = _ladder(*(ladder or (None, None)))
    steps = [2.0**-k for k in ks]
    running, err = _quad(near, steps[0], delta, tolerance)
    errors += err
    values = [running]
    for coarse, fine in zip(steps, steps[1:], strict=False):
        piece, err = _quad(near, fine, coarse, tolerance)
        running += piece
        errors += err
        values.append(running)

    limit, spread, trace = _extrapolate(steps, values, order=3)
    result = REAL_CONSTANT * at_one + fixed + limit
    logger.debug(f"pv_real ladder spread {spread:.2e}, quadrature error {errors:.2e}")
    return PVResult(
        place="R",
        value=result,
        error=spread + errors,
        value_at_one=at_one,
        regularization="eps-ladder with Richardson extrapolation, lambda = log 2pi + gamma",
        epsilon_trace=[(eps, REAL_CONSTANT * at_one + fixed + v) for eps, v in trace],
    )


def _fiber_near(func: Callable[[float], float], s: float) -> Callable[[float], float]:
    """Integrand over x in (-1, 1), r = 1 + s x, of the circle-averaged kernel restricted to
    |1 - r e^{i theta}| >= s, times the radial measure 2 dr / r."""

    def integrand(x: float) -> float:
        r = 1 + s * x
        q = s * s * (1 - x * x) / (2 * r)
        tan_half = math.sqrt(max(q, 0.0) / (2 - q))
        y = tan_half * (1 + r) / s
        ax = abs(x)
        core = 1 / y if ax == 0 else math.atan2(ax, y) / ax
        kernel = (2 / math.pi) * core / (2 + s * x)
        return func(r * r) * kernel * 2 / r

    return integrand


def pv_complex(
    f: Callable[[float], float] | RadialTestFn,
    tolerance: float | None = None,
    *,
    value_at_one: float | None = None,
    window: tuple[float, float] | None = None,
    ladder: tuple[int, int] | None = None,
) -> PVResult:
    """Radial principal value on C^*, f given as a function of nu = |z|_C.

    The circle average of 1/|1 - z|_C is 1/|1 - nu|; inside |1 - z| < s the
    average is taken over the part of the circle outside the excised disc. The
    ladder runs over s = sqrt(eps) and the limit is shifted by lambda' f(1).
    """
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    func, at_one, lo, hi = _prepare(f, value_at_one, window, tolerance)
    delta = NEAR_RADIUS
    errors = 0.0

    def outer(y: float) -> float:
        nu = math.exp(y)
        return func(nu) / abs(1 - nu)

    def middle(t: float) -> float:
        plus = 2 * func((1 + t) ** 2) / ((1 + t) * (2 + t))
        minus = 2 * func((1 - t) ** 2) / ((1 - t) * (2 - t))
        return (plus + minus - 2 * at_one) / t

    fixed = 2 * at_one * math.log(delta)
    for a, b in (
        (lo, min(hi, 2 * math.log(1 - delta))),
        (max(lo, 2 * math.log(1 + delta)), hi),
    ):
        value, err = _quad(outer, a, b, tolerance)
        fixed, errors = fixed + value, errors + err

    ks = _ladder(*(ladder or (None, None)))
    steps = [2.0**-k for k in ks]
    running, err = _quad(middle, steps[0], delta, tolerance)
    errors += err
    values = []
    for i, s in enumerate(steps):
        if i:
            piece, err = _quad(middle, s, steps[i - 1], tolerance)
            running += piece
            errors += err
        disc, err = _quad(_fiber_near(func, s), -1.0, 1.0, tolerance, points=[0.0])
        errors += err
        values.append(running + disc)

    limit, spread, trace = _extrapolate(steps, values, order=4)
    result = COMPLEX_CONSTANT * at_one + fixed + limit
    logger.debug(f"pv_complex ladder spread {spread:.2e}, quadrature error {errors:.2e}")
    return PVResult(
        place="C",
        value=result,
        error=spread + errors,
        value_at_one=at_one,
        regularization="s-ladder (eps = s^2) with fiber averaging, lambda' = 2(log 2pi + gamma)",
        epsilon_trace=[(s * s, COMPLEX_CONSTANT * at_one + fixed + v) for s, v in trace],
    )


def pv_weil(
    place: Place,
    f: Callable[[float], float] | RadialTestFn,
    tolerance: float | None = None,
    *,
    value_at_one: float | None = None,
    window: tuple[float, float] | None = None,
) -> PVResult:
    """Weil's prescription at an archimedean place.

    psi(nu) integrates f(u) / |1 - u| over the fiber |u| = nu, c = lim psi f1 at
    nu = 1, and the t -> oo limit of int (1 - f0^2t) psi d*nu - 2c log t is taken
    in closed form: 2c (gamma + 2 log 2) + int (psi - c / f1) d*nu.
    """
    if not place.is_archimedean:
        raise DomainError("pv_weil is defined at archimedean places; use pv_finite")
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    func, at_one, lo, hi = _prepare(f, value_at_one, window, tolerance)

    if place.kind is PlaceKind.REAL:
        c = at_one / 2

        def psi(y: float) -> float:
            nu = math.exp(y)
            return 0.5 * (func(nu) / abs(1 - nu) + func(-nu) / (1 + nu))
    else:
        c = at_one

        def psi(y: float) -> float:
            nu = math.exp(y)
            return func(nu) / abs(1 - nu)

    def regular(y: float) -> float:
        return psi(y) - c / (2 * math.sinh(abs(y) / 2))

    total, errors = 0.0, 0.0
    if c == 0:
        for a, b in ((lo, min(hi, 0.0)), (max(lo, 0.0), hi)):
            value, err = _quad(psi, a, b, tolerance)
            total, errors = total + value, errors + err
    else:
        if not lo < 0 < hi:
            raise DomainError("f(1) != 0 but the supplied window excludes |u| = 1")
        for a, b in ((lo, 0.0), (0.0, hi)):
            value, err = _quad(regular, a, b, tolerance)
            total, errors = total + value, errors + err
        # tails: -c int_Y^oo dy / (2 sinh(y/2)) = c log tanh(Y/4)
        for edge in (lo, hi):
            if math.isfinite(edge):
                total += c * math.log(math.tanh(abs(edge) / 4))
    result = 2 * c * (LOG_2PI + EULER_GAMMA + 2 * math.log(2)) + total
    logger.debug(f"pv_weil at {place}: c={c}, regular part {total}")
    return PVResult(
        place=str(place),
        value=result,
        error=errors,
        value_at_one=at_one,
        regularization="Weil PF0 with f0 cutoff, limit in closed form via digamma",
    )


# Shifts and pairings


def pv_character_shift(base: PVResult, shift: Rational | float | complex) -> PVResult:
    """Change of additive character alpha(x) = alpha0(shift x): adds log|shift|_v f(1)."""
    if shift == 0:
        raise DomainError("character shift must be invertible")
    place = Place.parse(base.place)
    if place.kind is PlaceKind.FINITE:
        p = place.residue_cardinality
        v = valuation(Fraction(shift), p)
        if base.exact is not None and base.value_at_one_exact is not None:
            exact = base.exact + LogLinearNumber.log(p, -v * Fraction(base.value_at_one_exact))
            return base.model_copy(update={"exact": exact, "value": float(exact)})
        log_module = -v * math.log(p)
    elif place.kind is PlaceKind.REAL:
        log_module = math.log(abs(complex(shift)))
    else:
        log_module = 2 * math.log(abs(complex(shift)))
    return base.model_copy(update={"value": base.value + log_module * base.value_at_one})


def log_distribution_pairing(place: Place, tolerance: float | None = None) -> PairingReport:
    """<-log|u|_v, e^{-pi u^2}> on R (du) and <-log|z|_C, e^{-2 pi |z|^2}> on C (2 dx dy)."""
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    if place.kind is PlaceKind.REAL:
        closed = 0.5 * math.log(math.pi) + EULER_GAMMA / 2 + math.log(2)

        def integrand(x: float) -> float:
            return -2 * math.log(x) * math.exp(-math.pi * x * x)
    elif place.kind is PlaceKind.COMPLEX:
        closed = LOG_2PI + EULER_GAMMA

        def integrand(w: float) -> float:
            # polar coordinates with w = |z|^2
            return -2 * math.pi * math.log(w) * math.exp(-2 * math.pi * w)
    else:
        raise DomainError("the log pairing is computed at archimedean places")
    head, err_head = _quad(integrand, 0.0, 1.0, tolerance)
    tail, err_tail = _quad(integrand, 1.0, math.inf, tolerance)
    value = head + tail
    return PairingReport(
        place=str(place), value=value, closed_form=closed, error=err_head + err_tail
    )


def reference_constant(place: Place) -> float:
    """Values at the reference test functions: log pi + gamma (R), 2(log 2pi + gamma) (C)."""
    if place.kind is PlaceKind.REAL:
        return math.log(math.pi) + EULER_GAMMA
    if place.kind is PlaceKind.COMPLEX:
        return COMPLEX_CONSTANT
    raise DomainError("reference constants are archimedean")


def digamma_half_shift(t: float) -> float:
    """psi(t + 1/2) - psi(1/2) - log t, which tends to gamma + 2 log 2."""
    return float(special.digamma(t + 0.5) - special.digamma(0.5) - math.log(t))
