"""Places of Q, exact p-adic arithmetic, Haar conventions and local Fourier analysis.

Finite-place quantities are kept exact (``fractions.Fraction`` and
``LogLinearNumber``); floats only appear at archimedean places and in
transforms whose values leave the rationals.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Any

import numpy as np
from pydantic import BaseModel
from pydantic_core import core_schema
from scipy import integrate, special

from ..config import settings
from ..errors import DomainError, PrecisionError, QuadratureError

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # pragma: no cover - Python 3.10 compatibility
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str.__str__(self)

        def __format__(self, format_spec: str) -> str:
            return str.__format__(str(self), format_spec)

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()

if TYPE_CHECKING:
    from .test_functions import LocallyConstantFn

logger = logging.getLogger(__name__)

Rational = int | Fraction


def is_prime(n: int) -> bool:
    """Deterministic trial-division primality test (desk-scale moduli only)."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def prime_factors(n: int) -> list[int]:
    """Distinct prime factors of a positive integer, ascending."""
    factors = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            factors.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        factors.append(n)
    return factors


def valuation(x: Rational, p: int) -> int:
    """p-adic valuation of a nonzero rational."""
    x = Fraction(x)
    if x == 0:
        raise DomainError("valuation of 0 is +infinity")
    v = 0
    num, den = x.numerator, x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


def residue(x: Rational, p: int, exponent: int) -> int:
    """Image of a p-integral rational in Z/p^exponent."""
    x = Fraction(x)
    modulus = p**exponent
    if exponent <= 0:
        return 0
    if x.denominator % p == 0:
        raise DomainError(f"{x} is not {p}-integral")
    return x.numerator * pow(x.denominator, -1, modulus) % modulus


def fractional_part(x: Rational, p: int) -> Fraction:
    """p-adic fractional part {x}_p in [0, 1) with denominator a power of p."""
    x = Fraction(x)
    if x == 0:
        return Fraction(0)
    k = max(0, -valuation(x, p))
    if k == 0:
        return Fraction(0)
    return Fraction(residue(x * p**k, p, k), p**k)


def alpha0(x: Rational, p: int) -> complex:
    """Normalized additive character exp(2 pi i {x}_p), trivial on Z_p."""
    return complex(np.exp(2j * np.pi * float(fractional_part(x, p))))


class PlaceKind(StrEnum):
    """Kinds of completions of Q."""

    REAL = "real"
    COMPLEX = "complex"
    FINITE = "finite"


@dataclass(frozen=True)
class Place:
    """A completion of Q (or C, kept for the complex principal-value constants)."""

    kind: PlaceKind
    p: int | None = None

    def __post_init__(self):
        if self.kind is PlaceKind.FINITE:
            if self.p is None or not is_prime(self.p):
                raise DomainError(f"Finite place needs a prime, got {self.p}")
        elif self.p is not None:
            raise DomainError(f"{self.kind} place takes no prime")

    @classmethod
    def real(cls) -> Place:
        return cls(PlaceKind.REAL)

    @classmethod
    def complex(cls) -> Place:
        return cls(PlaceKind.COMPLEX)

    @classmethod
    def finite(cls, p: int) -> Place:
        return cls(PlaceKind.FINITE, p)

    @classmethod
    def parse(cls, text: str) -> Place:
        """Parse "real", "inf", "complex" or a prime such as "2" / "Q_2"."""
        key = text.strip().lower()
        if key in {"real", "r", "inf", "infinity"}:
            return cls.real()
        if key in {"complex", "c"}:
            return cls.complex()
        key = key.removeprefix("q_").removeprefix("p=")
        try:
            return cls.finite(int(key))
        except ValueError as e:
            raise DomainError(f"Unknown place: {text!r}") from e

    @property
    def is_archimedean(self) -> bool:
        return self.kind is not PlaceKind.FINITE

    @property
    def residue_cardinality(self) -> int:
        if self.p is None:
            raise DomainError("Residue cardinality is undefined at archimedean places")
        return self.p

    @property
    def module_exponent(self) -> int:
        return 2 if self.kind is PlaceKind.COMPLEX else 1

    def __str__(self) -> str:
        if self.kind is PlaceKind.FINITE:
            return f"Q_{self.p}"
        return "R" if self.kind is PlaceKind.REAL else "C"


@dataclass(frozen=True)
class PAdicNumber:
    """Finite-precision p-adic number p^valuation * unit, unit known mod p^precision.

    ``precision == 0`` encodes a value only known to lie in p^valuation Z_p.
    """

    p: int
    valuation: int
    unit: int
    precision: int
    is_zero: bool = False

    def __post_init__(self):
        if self.is_zero:
            return
        if self.precision < 0:
            raise PrecisionError("negative precision")
        if self.precision > 0:
            if self.unit % self.p == 0:
                raise DomainError(f"unit {self.unit} is divisible by {self.p}")
            object.__setattr__(self, "unit", self.unit % self.p**self.precision)

    @classmethod
    def zero(cls, p: int) -> PAdicNumber:
        return cls(p, 0, 0, 0, is_zero=True)

    @classmethod
    def big_o(cls, p: int, valuation: int) -> PAdicNumber:
        """A value known only modulo p^valuation."""
        return cls(p, valuation, 0, 0)

    @classmethod
    def from_rational(cls, x: Rational, p: int, precision: int | None = None) -> PAdicNumber:
        precision = settings.padic_precision if precision is None else precision
        x = Fraction(x)
        if x == 0:
            return cls.zero(p)
        v = valuation(x, p)
        u = x / Fraction(p) ** v
        return cls(p, v, residue(u, p, precision), precision)

    @property
    def is_indeterminate(self) -> bool:
        return not self.is_zero and self.precision == 0

    @property
    def absolute_precision(self) -> int:
        return self.valuation + self.precision

    @property
    def norm(self) -> Fraction:
        if self.is_zero:
            return Fraction(0)
        if self.is_indeterminate:
            raise PrecisionError(
                f"valuation indeterminate: value known only modulo {self.p}^{self.valuation}"
            )
        return Fraction(self.p) ** (-self.valuation)

    def to_fraction(self) -> Fraction:
        """Rational representative unit * p^valuation with 0 < unit < p^precision."""
        if self.is_zero:
            return Fraction(0)
        return self.unit * Fraction(self.p) ** self.valuation

    def _coerce(self, other: Any) -> PAdicNumber:
        if isinstance(other, PAdicNumber):
            if other.p != self.p:
                raise DomainError(f"cannot combine {self.p}-adic and {other.p}-adic numbers")
            return other
        if isinstance(other, int | Fraction):
            cap = self.precision if not self.is_zero else settings.padic_precision
            return PAdicNumber.from_rational(other, self.p, max(cap, 1))
        return NotImplemented

    def __neg__(self) -> PAdicNumber:
        if self.is_zero or self.is_indeterminate:
            return self
        return dataclasses.replace(self, unit=-self.unit)

    def __mul__(self, other: Any) -> PAdicNumber:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero or other.is_zero:
            return PAdicNumber.zero(self.p)
        precision = min(self.precision, other.precision)
        unit = self.unit * other.unit if precision else 0
        return PAdicNumber(self.p, self.valuation + other.valuation, unit, precision)

    __rmul__ = __mul__

    def inverse(self) -> PAdicNumber:
        if self.is_zero:
            raise DomainError("0 has no inverse")
        if self.is_indeterminate:
            raise PrecisionError("cannot invert a value with no significant digits")
        modulus = self.p**self.precision
        return PAdicNumber(self.p, -self.valuation, pow(self.unit, -1, modulus), self.precision)

    def __truediv__(self, other: Any) -> PAdicNumber:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other: Any) -> PAdicNumber:
        return self._coerce(other) * self.inverse()

    def __add__(self, other: Any) -> PAdicNumber:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        v = min(self.valuation, other.valuation)
        absolute = min(self.absolute_precision, other.absolute_precision)
        digits = absolute - v
        if digits <= 0:
            return PAdicNumber.big_o(self.p, absolute)
        modulus = self.p**digits
        total = (
            self.unit * self.p ** (self.valuation - v)
            + other.unit * self.p ** (other.valuation - v)
        ) % modulus
        if total == 0:
            raise PrecisionError(
                f"cancellation exhausted all digits (value is O({self.p}^{absolute}))"
            )
        shift = 0
        while total % self.p == 0:
            total //= self.p
            shift += 1
        result = PAdicNumber(self.p, v + shift, total, digits - shift)
        floor = min(settings.padic_min_digits, self.precision, other.precision)
        if result.precision < floor:
            raise PrecisionError(
                f"result keeps {result.precision} significant digits, below the floor {floor}"
            )
        return result

    __radd__ = __add__

    def __sub__(self, other: Any) -> PAdicNumber:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other: Any) -> PAdicNumber:
        return self._coerce(other) - self

    def residue_mod(self, exponent: int) -> int:
        """Image in Z/p^exponent; requires an integral value known to that many digits."""
        if self.is_zero:
            return 0
        if self.valuation < 0:
            raise DomainError(f"{self} is not integral")
        if self.absolute_precision < exponent and self.valuation < exponent:
            raise PrecisionError(f"only {self.absolute_precision} digits known, need {exponent}")
        return self.unit * self.p**self.valuation % self.p**exponent

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        if self.is_indeterminate:
            return f"O({self.p}^{self.valuation})"
        return f"{self.unit}*{self.p}^{self.valuation} + O({self.p}^{self.absolute_precision})"


@dataclass(frozen=True)
class PAdicBall:
    """The compact-open ball center + p^radius_exponent Z_p."""

    center: PAdicNumber
    radius_exponent: int

    @classmethod
    def around(cls, x: Rational, p: int, radius_exponent: int) -> PAdicBall:
        precision = max(radius_exponent - valuation(x, p), 1) if Fraction(x) != 0 else 1
        return cls(PAdicNumber.from_rational(x, p, precision), radius_exponent)

    @property
    def p(self) -> int:
        return self.center.p

    @property
    def measure(self) -> Fraction:
        """Additive self-dual Haar measure p^(-r)."""
        return Fraction(self.p) ** (-self.radius_exponent)

    def contains(self, x: Rational | PAdicNumber) -> bool:
        c = self.center
        if not c.is_zero and c.absolute_precision < self.radius_exponent:
            raise PrecisionError(f"ball center known only to {c.absolute_precision} digits")
        x = x.to_fraction() if isinstance(x, PAdicNumber) else Fraction(x)
        diff = x - c.to_fraction()
        return diff == 0 or valuation(diff, self.p) >= self.radius_exponent

    def relation(self, other: PAdicBall) -> str:
        """One of "equal", "contains", "inside", "disjoint"; balls never partially overlap."""
        if self.radius_exponent <= other.radius_exponent:
            if not self.contains(other.center):
                return "disjoint"
            return "equal" if self.radius_exponent == other.radius_exponent else "contains"
        flipped = other.relation(self)
        return {"contains": "inside"}.get(flipped, flipped)

    def __str__(self) -> str:
        return f"{self.center.to_fraction()} + {self.p}^{self.radius_exponent} Z_{self.p}"


@dataclass(frozen=True)
class LogLinearNumber:
    """Exact value r0 + sum_p c_p log p + a*euler_gamma + b*log(2 pi) with rational coefficients."""

    constant: Fraction = Fraction(0)
    terms: tuple[tuple[int, Fraction], ...] = ()
    euler_gamma: Fraction = Fraction(0)
    log_2pi: Fraction = Fraction(0)

    def __post_init__(self):
        merged: dict[int, Fraction] = {}
        for p, c in self.terms:
            if not is_prime(p):
                raise DomainError(f"log-term base must be prime, got {p}")
            merged[p] = merged.get(p, Fraction(0)) + Fraction(c)
        object.__setattr__(
            self, "terms", tuple(sorted((p, c) for p, c in merged.items() if c != 0))
        )
        object.__setattr__(self, "constant", Fraction(self.constant))
        object.__setattr__(self, "euler_gamma", Fraction(self.euler_gamma))
        object.__setattr__(self, "log_2pi", Fraction(self.log_2pi))

    @classmethod
    def log(cls, p: int, coefficient: Rational = 1) -> LogLinearNumber:
        return cls(terms=((p, Fraction(coefficient)),))

    @classmethod
    def rational(cls, value: Rational) -> LogLinearNumber:
        return cls(constant=Fraction(value))

    @property
    def coefficients(self) -> dict[int, Fraction]:
        return dict(self.terms)

    @property
    def is_zero(self) -> bool:
        return not (self.constant or self.terms or self.euler_gamma or self.log_2pi)

    def __bool__(self) -> bool:
        return not self.is_zero

    def __add__(self, other: Any) -> LogLinearNumber:
        if isinstance(other, int | Fraction):
            other = LogLinearNumber.rational(other)
        if not isinstance(other, LogLinearNumber):
            return NotImplemented
        return LogLinearNumber(
            self.constant + other.constant,
            self.terms + other.terms,
            self.euler_gamma + other.euler_gamma,
            self.log_2pi + other.log_2pi,
        )

    __radd__ = __add__

    def __neg__(self) -> LogLinearNumber:
        return self * -1

    def __sub__(self, other: Any) -> LogLinearNumber:
        return self + (-other)

    def __rsub__(self, other: Any) -> LogLinearNumber:
        return (-self) + other

    def __mul__(self, scalar: Any) -> LogLinearNumber:
        if not isinstance(scalar, int | Fraction):
            return NotImplemented
        s = Fraction(scalar)
        return LogLinearNumber(
            self.constant * s,
            tuple((p, c * s) for p, c in self.terms),
            self.euler_gamma * s,
            self.log_2pi * s,
        )

    __rmul__ = __mul__

    def __float__(self) -> float:
        parts = [float(self.constant)]
        parts += [float(c) * math.log(p) for p, c in self.terms]
        parts.append(float(self.euler_gamma) * float(np.euler_gamma))
        parts.append(float(self.log_2pi) * math.log(2 * math.pi))
        return math.fsum(parts)

    def symbolic(self) -> str:
        """Render e.g. "9*log(2)", "1/2*log(2) - log(3)", "0"."""
        pieces: list[tuple[Fraction, str]] = [(c, f"log({p})") for p, c in self.terms]
        pieces += [(self.euler_gamma, "euler_gamma"), (self.log_2pi, "log(2*pi)")]
        pieces.append((self.constant, ""))
        out = ""
        for c, name in pieces:
            if c == 0:
                continue
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if not name:
                body = str(mag)
            elif mag == 1:
                body = name
            else:
                body = f"{mag}*{name}"
            if not out:
                out = body if sign == "+" else f"-{body}"
            else:
                out += f" {sign} {body}"
        return out or "0"

    def __str__(self) -> str:
        return self.symbolic()

    def to_json(self) -> dict[str, Any]:
        return {
            "symbolic": self.symbolic(),
            "value": float(self),
            "constant": str(self.constant),
            "terms": {str(p): str(c) for p, c in self.terms},
            "euler_gamma": str(self.euler_gamma),
            "log_2pi": str(self.log_2pi),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> LogLinearNumber:
        return cls(
            Fraction(data.get("constant", "0")),
            tuple((int(p), Fraction(c)) for p, c in data.get("terms", {}).items()),
            Fraction(data.get("euler_gamma", "0")),
            Fraction(data.get("log_2pi", "0")),
        )

    @classmethod
    def _validate(cls, value: Any) -> LogLinearNumber:
        if isinstance(value, LogLinearNumber):
            return value
        if isinstance(value, dict) and "symbolic" in value:
            return cls.from_json(value)
        raise ValueError("expected a LogLinearNumber")

    @classmethod
    def __get_pydantic_core_schema__(cls, source_type: Any, handler: Any) -> Any:
        return core_schema.no_info_plain_validator_function(
            cls._validate,
            serialization=core_schema.plain_serializer_function_ser_schema(lambda v: v.to_json()),
        )


class HaarNormalization(StrEnum):
    """Multiplicative Haar measure conventions at a finite place."""

    UNIT_MASS_ON_UNITS = "unit-mass-on-units"
    LOG_SCALE_MODULATED = "log-scale-modulated"


class Domain(StrEnum):
    """Where a locally constant function lives: Q_p or Q_p^*."""

    ADDITIVE = "Qp"
    MULTIPLICATIVE = "Qp*"


def shell_measure(p: int, normalization: HaarNormalization) -> LogLinearNumber:
    """Multiplicative measure of one shell {|u| = p^m}."""
    if normalization is HaarNormalization.LOG_SCALE_MODULATED:
        return LogLinearNumber.log(p)
    return LogLinearNumber.rational(1)


def module_range_measure(
    p: int, n: int, normalization: HaarNormalization = HaarNormalization.LOG_SCALE_MODULATED
) -> LogLinearNumber:
    """Measure of {|u| in [1, p^n]}, a union of n + 1 shells."""
    if n < 0:
        raise DomainError("module range needs n >= 0")
    return shell_measure(p, normalization) * (n + 1)


def module(place: Place, x: Any) -> Fraction | float:
    """Normalized module |x|_v; exact power of p at finite places, z * conj(z) at C."""
    if place.kind is PlaceKind.FINITE:
        p = place.residue_cardinality
        if isinstance(x, PAdicNumber):
            if x.p != p:
                raise DomainError(f"{x.p}-adic number evaluated at {place}")
            return x.norm
        x = Fraction(x)
        if x == 0:
            return Fraction(0)
        return Fraction(p) ** (-valuation(x, p))
    if place.kind is PlaceKind.REAL:
        if isinstance(x, complex) and x.imag != 0:
            raise DomainError(f"{x} is not real")
        return abs(float(x.real if isinstance(x, complex) else x))
    z = complex(x)
    return (z * z.conjugate()).real


def padic_fourier(f: LocallyConstantFn) -> LocallyConstantFn:
    """Exact Fourier transform against alpha0 with the self-dual measure (Z_p has mass 1).

    A function on the grid (A, B) has its transform on the grid (B, A):
    w_j = p^(-B) sum_k v_k exp(2 pi i k j / p^(A+B)).
    """
    p, a, b = f.p, f.support_exponent, f.level
    n = p ** (a + b)
    raw = np.array([complex(v) for v in f.values], dtype=np.complex128)
    transformed = np.fft.ifft(raw) * n * float(Fraction(p) ** (-b))
    values: tuple = tuple(complex(w) for w in transformed)
    if f.is_rational:
        common = math.lcm(*(Fraction(v).denominator for v in f.values))
        denominator_fraction = Fraction(common * p ** max(b, 0))
        snapped = []
        for w in transformed:
            scaled = w * float(denominator_fraction)
            k = round(scaled.real)
            if abs(scaled.imag) > 1e-6 or abs(scaled.real - k) > 1e-6:
                break
            snapped.append(Fraction(k) / denominator_fraction)
        else:
            values = tuple(snapped)
    logger.debug(f"p-adic Fourier transform on grid ({a}, {b}) over {n} cells")
    return dataclasses.replace(
        f, support_exponent=b, level=a, values=values, domain=Domain.ADDITIVE
    )


class LocalZetaReport(BaseModel):
    """Tate local factor computed by summation/quadrature against its closed form."""

    place: str
    s_re: float
    s_im: float
    value_re: float
    value_im: float
    closed_form_re: float
    closed_form_im: float
    terms: int
    tail_bound: float
    discrepancy: float


def local_zeta_integral(
    place: Place, s: complex, tolerance: float | None = None
) -> LocalZetaReport:
    """Tate local factor of the unramified test function at a place.

    Finite p: sum_{n >= 0} p^(-n s) = (1 - p^-s)^-1 with unit mass on units.
    Real: int exp(-pi x^2) |x|^s d*x = pi^(-s/2) Gamma(s/2) / 2 with d*x = dx / 2|x|.
    Complex: int exp(-2 pi |z|^2) |z|_C^s d*z = (2 pi)^(-s) Gamma(s).
    """
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    s = complex(s)
    if s.real <= 0:
        raise DomainError(f"local zeta integral needs Re s > 0, got {s}")

    if place.kind is PlaceKind.FINITE:
        p = place.residue_cardinality
        ratio = complex(p) ** (-s)
        r = abs(ratio)
        terms = max(1, math.ceil(math.log(tolerance * (1 - r)) / math.log(r)))
        value = complex(np.sum(ratio ** np.arange(terms)))
        tail = r**terms / (1 - r)
        closed = 1 / (1 - ratio)
    else:
        if place.kind is PlaceKind.REAL:
            weight, power = math.pi, 2.0
            closed = complex(0.5 * np.pi ** (-s / 2) * special.gamma(s / 2))
        else:
            weight, power = 2 * math.pi, 1.0
            closed = complex((2 * np.pi) ** (-s) * special.gamma(s))

        def integrand(y: float, part: int) -> float:
            # substitution x = e^y, integrand exp(-weight x^power) x^s dy
            z = np.exp(-weight * np.exp(power * y) + s * y)
            return float(z.real if part == 0 else z.imag)

        lower = math.log(tolerance) / s.real - 5.0
        upper = 0.5 * math.log(60.0 / weight) + 2.0
        re, err_re = integrate.quad(integrand, lower, upper, args=(0,), epsabs=tolerance, limit=400)
        im, err_im = integrate.quad(integrand, lower, upper, args=(1,), epsabs=tolerance, limit=400)
        value = complex(re, im)
        tail = err_re + err_im + math.exp(s.real * lower) / s.real
        terms = 0
        if tail > 100 * tolerance:
            raise QuadratureError(f"local zeta quadrature error {tail:.2e}", estimate=tail)

    logger.debug(f"local zeta at {place}, s={s}: {value} (closed {closed})")
    return LocalZetaReport(
        place=str(place),
        s_re=s.real,
        s_im=s.imag,
        value_re=value.real,
        value_im=value.imag,
        closed_form_re=closed.real,
        closed_form_im=closed.imag,
        terms=terms,
        tail_bound=tail,
        discrepancy=abs(value - closed),
    )


def homogeneous_delta_prime(place: Place, s: complex, f: LocallyConstantFn) -> complex:
    """<f, Delta'_s> = int (f(x) - f(x/p)) |x|^s d*x, a finite sum over shells."""
    p = place.residue_cardinality
    shells = f.shell_integrals()
    z = complex(p) ** (-complex(s))
    total = 0j
    previous = 0
    for n in range(-f.support_exponent, f.level + 1):
        current = shells[n]
        total += complex(current - previous) * z**n
        previous = current
    return total


def homogeneous_delta(place: Place, s: complex, f: LocallyConstantFn) -> complex:
    """<f, Delta_s> = int f(x) |x|^s d*x for Re s > 0, constant tail summed in closed form."""
    s = complex(s)
    if s.real <= 0:
        raise DomainError(f"Delta_s needs Re s > 0, got {s}")
    p = place.residue_cardinality
    shells = f.shell_integrals()
    z = complex(p) ** (-s)
    total = sum(complex(shells[n]) * z**n for n in range(-f.support_exponent, f.level))
    tail = complex(shells[f.level]) * z**f.level / (1 - z)
    return total + tail
