"""Both sides of the explicit formula over Q with the trivial character.

spectral: h^(0) + h^(1) - sum_rho h^(rho)
geometric: sum_v int' h(u^-1) / |1 - u| d*u   (log|d| h(1) = 0 over Q)
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from typing import Any

import numpy as np
from pydantic import BaseModel
from scipy import integrate

from ..config import settings
from ..errors import DomainError, TruncationError
from .local_field import Place
from .principal_value import PVResult, pv_finite_radial, pv_real
from .test_functions import RadialTestFn, mellin
from .zeta_zeros import ZeroList, find_zeros

logger = logging.getLogger(__name__)

CHEBYSHEV_UPPER = 1.04
MAX_PRIME_CUTOFF = 10**7


class Term(BaseModel):
    """One contribution to either side, for plotting."""

    side: str
    kind: str
    label: str
    value: float


class SpectralSide(BaseModel):
    """h^(0) + h^(1) minus the zero sum up to e_max."""

    value: float
    poles: float
    zero_sum: float
    zeros_used: int
    e_max: float
    tail_bound: float
    quadrature_error: float
    terms: list[Term]


class GeometricSide(BaseModel):
    """Archimedean principal value plus prime-power shell sums."""

    value: float
    archimedean: PVResult
    finite: float
    log_discriminant: float = 0.0
    prime_cutoff: int
    tail_bound: float
    terms: list[Term]


class FormulaReport(BaseModel):
    """Spectral side against geometric side for one test function."""

    h: dict[str, Any]
    spectral: SpectralSide
    geometric: GeometricSide
    discrepancy: float
    bound: float
    tolerance: float
    passed: bool


class DilationReport(BaseModel):
    """The identity re-run on h(. / lambda) with the Mellin scaling checked at the first zero."""

    lam: float
    base: FormulaReport
    dilated: FormulaReport
    scaling_residual: float


def primes_up_to(n: int) -> np.ndarray:
    """Sieve of Eratosthenes."""
    if n < 2:
        return np.array([], dtype=np.int64)
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for k in range(2, math.isqrt(n) + 1):
        if sieve[k]:
            sieve[k * k :: k] = False
    return np.nonzero(sieve)[0]


def _zero_count_bound(t: float) -> float:
    """Upper bound for N(t), t >= e."""
    x = t / (2 * math.pi)
    return x * math.log(max(x, 1.0)) + 0.4 * math.log(t) + 3.5


def _zero_count_bound_slope(t: float) -> float:
    x = t / (2 * math.pi)
    return (math.log(max(x, 1.0)) + 1) / (2 * math.pi) + 0.4 / t


def mellin_decay_bound(h: RadialTestFn, sigma: float) -> Callable[[float], float]:
    """t -> bound on |h^(sigma + i t)|, nonincreasing for t >= 1."""
    if h.is_compact and h.y_max <= h.y_min:
        return lambda t: 0.0
    if not h.is_compact and h.envelopes:
        envelopes = h.envelopes
        return lambda t: sum(e.mellin_modulus_bound(sigma, t) for e in envelopes)
    if h.is_compact and h.smoothness == "C-infinity":
        # two integrations by parts: |h^| <= ||(phi e^{sigma y})''||_1 / t^2
        y = np.linspace(h.y_min, h.y_max, 8001)
        weighted = np.asarray(h.profile(y), dtype=float) * np.exp(sigma * y)
        second = np.gradient(np.gradient(weighted, y), y)
        constant = 1.1 * float(integrate.trapezoid(np.abs(second), y))
        return lambda t: constant / (t * t)
    return lambda t: math.inf


def zero_tail_bound(h: RadialTestFn, e_max: float) -> float:
    """Bound for sum over gamma > e_max of |h^(1/2 + i gamma)| + |h^(1/2 - i gamma)|.

    Summation by parts against N(t) <= B(t): F(T) B(T) + int_T^oo F B' dt.
    """
    decay = mellin_decay_bound(h, 0.5)
    t0 = max(e_max, math.e)
    head = decay(t0)
    if not math.isfinite(head):
        return math.inf
    if head == 0:
        return 0.0
    rest, _ = integrate.quad(lambda t: decay(t) * _zero_count_bound_slope(t), t0, math.inf)
    return 2 * (head * _zero_count_bound(t0) + rest)


def _mellin_value(h: RadialTestFn, rho: complex, tolerance: float) -> tuple[complex, float]:
    if h.mellin_closed_form is not None:
        return complex(h.mellin_closed_form(rho)), 0.0
    result = mellin(h, rho, tolerance)
    return result.value, result.error


def spectral_side(
    h: RadialTestFn,
    zeros: ZeroList,
    tolerance: float | None = None,
    *,
    strip_assumption: bool = True,
) -> SpectralSide:
    """h^(0) + h^(1) - sum_j [h^(1/2 + i gamma_j) + h^(1/2 - i gamma_j)].

    ``strip_assumption`` declares that every nontrivial zero below e_max lies on the
    critical line, which the zero count of the list certifies.
    """
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    if not strip_assumption:
        raise DomainError("off-line zeros are not represented by a critical-line zero list")
    tail = zero_tail_bound(h, zeros.e_max)
    if tail > tolerance:
        required = zeros.e_max
        while zero_tail_bound(h, required) > tolerance and required < 1e6:
            required *= 2
        raise TruncationError(
            f"zero-sum tail {tail:.2e} above {tolerance:.1e}; raise E_max to about {required:g}",
            required=required,
        )
    at_zero, err0 = _mellin_value(h, 0.0, tolerance)
    at_one, err1 = _mellin_value(h, 1.0, tolerance)
    poles = (at_zero + at_one).real
    terms = [
        Term(side="spectral", kind="pole", label="h^(0)", value=at_zero.real),
        Term(side="spectral", kind="pole", label="h^(1)", value=at_one.real),
    ]
    errors = err0 + err1
    contributions = []
    for gamma in zeros.ordinates:
        up, e_up = _mellin_value(h, complex(0.5, gamma), tolerance)
        down, e_down = _mellin_value(h, complex(0.5, -gamma), tolerance)
        value = (up + down).real
        errors += e_up + e_down
        contributions.append(value)
        terms.append(Term(side="spectral", kind="zero", label=f"{gamma:.9f}", value=-value))
    zero_sum = math.fsum(contributions)
    logger.debug(f"spectral side: poles {poles}, zero sum {zero_sum} over {len(zeros)} zeros")
    return SpectralSide(
        value=poles - zero_sum,
        poles=poles,
        zero_sum=zero_sum,
        zeros_used=len(zeros),
        e_max=zeros.e_max,
        tail_bound=tail,
        quadrature_error=errors,
        terms=terms,
    )


def _sup_beyond(h: RadialTestFn, y: float, reflect: bool) -> float:
    """sup of |profile| over [y, oo) (or over (-oo, -y] when reflect)."""
    if h.is_compact:
        lo, hi = (-h.y_max, -h.y_min) if reflect else (h.y_min, h.y_max)
        if y > hi:
            return 0.0
        grid = np.linspace(max(y, lo), hi, 2001)
        values = np.abs(np.asarray(h.profile(-grid if reflect else grid), dtype=float))
        return 1.05 * float(np.max(values))
    total = 0.0
    for e in h.envelopes:
        centre = -e.center if reflect else e.center
        gap = max(y - centre, 0.0)
        total += e.amplitude * math.exp(-(gap**2) / (2 * e.width**2))
    return total


def prime_tail_bound(h: RadialTestFn, cutoff: int) -> float:
    """Bound on sum over prime powers n > cutoff of Lambda(n) [|h(n)| + |h(1/n)| / n].

    H(t) = sup_{x >= t} of the bracket is nonincreasing; with theta(x) >= x (1 - 1/log x)
    for x >= 41 and psi(x) <= 1.04 x, summation by parts gives
    (1.04 - lower) P H(P) + 1.04 int_P^oo H.
    """
    if h.is_compact and math.log(max(cutoff, 2)) > max(h.y_max, -h.y_min):
        return 0.0

    def envelope(y: float) -> float:
        return _sup_beyond(h, y, False) + _sup_beyond(h, y, True) * math.exp(-y)

    y0 = math.log(cutoff)
    lower = 1 - 1 / y0 if cutoff >= 41 else 0.0
    upper = max(h.y_max, -h.y_min) if h.is_compact else math.inf
    integral, _ = integrate.quad(lambda y: envelope(y) * math.exp(y), y0, upper, limit=200)
    return (CHEBYSHEV_UPPER - lower) * cutoff * envelope(y0) + CHEBYSHEV_UPPER * integral


def required_prime_cutoff(h: RadialTestFn, tolerance: float) -> int:
    """Smallest power-of-two cutoff whose certified prime tail is below tolerance."""
    if h.is_compact:
        reach = max(h.y_max, -h.y_min)
        return max(2, math.ceil(math.exp(reach)) + 1)
    cutoff = 2
    while prime_tail_bound(h, cutoff) > tolerance:
        cutoff *= 2
        if cutoff > MAX_PRIME_CUTOFF:
            raise TruncationError(
                f"no prime cutoff below {MAX_PRIME_CUTOFF:g} reaches {tolerance:.1e}",
                required=cutoff,
            )
    return cutoff


def geometric_side(
    h: RadialTestFn, prime_cutoff: int, tolerance: float | None = None
) -> GeometricSide:
    """Archimedean principal value of u -> h(1/u) plus, for each p <= cutoff, the shell sum
    log p sum_m [h(p^m) + h(p^-m) p^-m] through the radial finite principal value."""
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    tail = prime_tail_bound(h, prime_cutoff)
    if tail > tolerance:
        required = required_prime_cutoff(h, tolerance)
        raise TruncationError(
            f"prime tail {tail:.2e} above {tolerance:.1e}; need a cutoff of about {required}",
            required=required,
        )
    inverse = h.inverted()
    archimedean = pv_real(inverse, tolerance)
    terms = [Term(side="geometric", kind="archimedean", label="R", value=archimedean.value)]

    lo, hi, _ = inverse.integration_window(0.0, tolerance)
    reach = max(abs(lo), abs(hi))
    finite_parts = []
    for p in primes_up_to(prime_cutoff):
        p = int(p)
        top = int(reach / math.log(p)) + 1
        shells = {m: inverse.at_module(float(p) ** -m) for m in range(-top, top + 1)}
        contribution = pv_finite_radial(Place.finite(p), shells)
        if contribution.value == 0:
            continue
        finite_parts.append(contribution.value)
        terms.append(
            Term(side="geometric", kind="prime", label=str(p), value=contribution.value)
        )
    finite = math.fsum(finite_parts)
    logger.debug(f"geometric side: archimedean {archimedean.value}, finite {finite}")
    return GeometricSide(
        value=archimedean.value + finite,
        archimedean=archimedean,
        finite=finite,
        prime_cutoff=prime_cutoff,
        tail_bound=tail,
        terms=terms,
    )


def compare(
    h: RadialTestFn,
    e_max: float,
    prime_cutoff: int,
    tolerance: float = 1e-6,
    zeros: ZeroList | None = None,
) -> FormulaReport:
    """Discrepancy spectral - geometric; passes within the combined bounds plus tolerance."""
    if zeros is None or zeros.e_max < e_max:
        zeros = find_zeros(e_max)
    elif zeros.e_max > e_max:
        zeros = zeros.truncated(e_max)
    spectral = spectral_side(h, zeros, tolerance)
    geometric = geometric_side(h, prime_cutoff, tolerance)
    discrepancy = spectral.value - geometric.value
    bound = (
        spectral.tail_bound
        + spectral.quadrature_error
        + geometric.tail_bound
        + geometric.archimedean.error
    )
    passed = abs(discrepancy) <= bound + tolerance
    logger.info(f"explicit formula for {h.descriptor}: discrepancy {discrepancy:.3e}")
    return FormulaReport(
        h=h.descriptor,
        spectral=spectral,
        geometric=geometric,
        discrepancy=discrepancy,
        bound=bound,
        tolerance=tolerance,
        passed=passed,
    )


def dilation_instance(
    h: RadialTestFn,
    lam: float,
    e_max: float,
    prime_cutoff: int,
    tolerance: float = 1e-6,
    zeros: ZeroList | None = None,
) -> DilationReport:
    """Second instance of the identity on h(. / lam), where h^ picks up lam^rho."""
    if lam <= 0:
        raise DomainError("dilation factor must be positive")
    if zeros is None or zeros.e_max < e_max:
        zeros = find_zeros(e_max)
    dilated = h.dilate(lam)
    rho = complex(0.5, zeros.ordinates[0]) if len(zeros) else complex(0.5, 14.0)
    direct = mellin(dilated, rho, tolerance).value
    scaled = lam**rho * _mellin_value(h, rho, tolerance)[0]
    return DilationReport(
        lam=lam,
        base=compare(h, e_max, prime_cutoff, tolerance, zeros),
        dilated=compare(dilated, e_max, prime_cutoff, tolerance, zeros),
        scaling_residual=abs(direct - scaled),
    )


def contribution_rows(report: FormulaReport) -> list[dict[str, Any]]:
    """Flat per-term rows (side, kind, label, value) for CSV export."""
    return [t.model_dump() for t in report.spectral.terms + report.geometric.terms]
