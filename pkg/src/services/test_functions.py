"""Test-function spaces: radial functions on K^*, locally constant functions on Q_p, characters."""

from __future__ import annotations

import cmath
import dataclasses
import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, NamedTuple

import numpy as np
from scipy import integrate, special

from ..config import settings
from ..errors import DomainError, QuadratureError
from .local_field import (
    Domain,
    PAdicBall,
    PAdicNumber,
    Rational,
    is_prime,
    prime_factors,
    residue,
    valuation,
)

logger = logging.getLogger(__name__)

Scalar = Fraction | complex | float


class QuadResult(NamedTuple):
    """A quadrature value with its error estimate."""

    value: complex
    error: float


def _normalize(value: Any) -> Scalar:
    if isinstance(value, int | Fraction):
        return Fraction(value)
    if isinstance(value, complex) and value.imag == 0:
        return float(value.real)
    return value


@dataclass(frozen=True)
class FiniteCharacter:
    """Character of (Z/p^f)^* extended by zero off the units; f is the conductor exponent."""

    p: int
    conductor_exponent: int
    table: tuple[tuple[int, complex], ...]

    def __post_init__(self):
        if not is_prime(self.p):
            raise DomainError(f"{self.p} is not prime")
        modulus = self.p**self.conductor_exponent
        values = dict(self.table)
        units = [k for k in range(modulus) if k % self.p or modulus == 1]
        if sorted(values) != units:
            raise DomainError(f"character table must cover (Z/{modulus})^*")
        for a in units:
            for b in units:
                if abs(values[a] * values[b] - values[a * b % modulus]) > 1e-9:
                    raise DomainError(f"table is not multiplicative at ({a}, {b})")
        trivial = all(abs(v - 1) < 1e-9 for v in values.values())
        if trivial != (self.conductor_exponent == 0):
            raise DomainError("a character is trivial exactly when its conductor exponent is 0")
        if self.conductor_exponent > 1 and _trivial_on(
            values, self.p, modulus, self.conductor_exponent - 1
        ):
            raise DomainError("conductor exponent is not minimal")

    @classmethod
    def trivial(cls, p: int) -> FiniteCharacter:
        return cls(p, 0, ((0, 1 + 0j),))

    @classmethod
    def from_values(cls, p: int, exponent: int, values: dict[int, complex]) -> FiniteCharacter:
        """Reduce a character given mod p^exponent to its conductor."""
        modulus = p**exponent
        f = 0
        while f < exponent and not _trivial_on(values, p, modulus, f):
            f += 1
        conductor = p**f
        reduced = {}
        for k, v in values.items():
            reduced.setdefault(k % conductor, v)
        if f == 0:
            reduced = {0: 1 + 0j}
        return cls(p, f, tuple(sorted(reduced.items())))

    @classmethod
    def from_index(cls, p: int, exponent: int, index: int, sign: int = 0) -> FiniteCharacter:
        """Character of (Z/p^e)^* sending a generator to exp(2 pi i index / order).

        For odd p the group is cyclic on a primitive root. For p = 2 it is
        {+-1} x <5>; ``sign`` in {0, 1} picks the value on -1.
        """
        if exponent < 1 or (p == 2 and exponent == 1):
            return cls.trivial(p)
        modulus = p**exponent
        values: dict[int, complex] = {}
        if p == 2:
            order = 2 ** (exponent - 2)
            power = 1
            for n in range(order):
                z = cmath.exp(2j * math.pi * index * n / order)
                values[power % modulus] = z
                values[-power % modulus] = z * (-1) ** sign
                power = power * 5 % modulus
        else:
            g = primitive_root(p, exponent)
            order = (p - 1) * p ** (exponent - 1)
            power = 1
            for n in range(order):
                values[power] = cmath.exp(2j * math.pi * index * n / order)
                power = power * g % modulus
        return cls.from_values(p, exponent, values)

    @property
    def modulus(self) -> int:
        return self.p**self.conductor_exponent

    def __call__(self, u: Rational) -> complex:
        u = Fraction(u)
        if u == 0 or valuation(u, self.p) != 0:
            return 0j
        return dict(self.table)[residue(u, self.p, self.conductor_exponent)]

    def conjugate(self) -> FiniteCharacter:
        return FiniteCharacter(
            self.p, self.conductor_exponent, tuple((k, v.conjugate()) for k, v in self.table)
        )

    def describe(self) -> str:
        return f"chi mod {self.p}^{self.conductor_exponent}"


def _trivial_on(values: dict[int, complex], p: int, modulus: int, level: int) -> bool:
    """Whether the character is 1 on 1 + p^level Z_p (all units when level = 0)."""
    if level == 0:
        return all(abs(v - 1) < 1e-9 for v in values.values())
    return all(abs(values[k] - 1) < 1e-9 for k in range(1, modulus, p**level))


def primitive_root(p: int, exponent: int = 1) -> int:
    """Smallest generator of (Z/p^exponent)^* for odd p."""
    if p == 2:
        raise DomainError("(Z/2^e)^* is not cyclic for e >= 3")
    factors = prime_factors(p - 1)
    g = next(g for g in range(2, p) if all(pow(g, (p - 1) // q, p) != 1 for q in factors))
    if exponent >= 2 and pow(g, p - 1, p * p) == 1:
        g += p
    return g


@dataclass(frozen=True)
class LocallyConstantFn:
    """Function on Q_p supported in p^-A Z_p and constant on cosets of p^B Z_p.

    ``values[k]`` is the value on k p^-A + p^B Z_p for k in [0, p^(A+B)).
    On the multiplicative domain Q_p^* the cell containing 0 must vanish.
    """

    p: int
    support_exponent: int
    level: int
    values: tuple[Scalar, ...]
    domain: Domain = Domain.MULTIPLICATIVE

    def __post_init__(self):
        if self.support_exponent + self.level < 0:
            raise DomainError("grid needs support_exponent + level >= 0")
        object.__setattr__(self, "values", tuple(_normalize(v) for v in self.values))
        if len(self.values) != self.cells:
            raise DomainError(f"expected {self.cells} values, got {len(self.values)}")
        if self.domain is Domain.MULTIPLICATIVE and self.values[0] != 0:
            raise DomainError(
                f"not compactly supported in Q_{self.p}^*: nonzero on the ball "
                f"{self.p}^{self.level} Z_{self.p}"
            )

    # Construction

    @classmethod
    def zero(cls, p: int, domain: Domain = Domain.MULTIPLICATIVE) -> LocallyConstantFn:
        return cls(p, 0, 1, (Fraction(0),) * p, domain)

    @classmethod
    def tabulate(
        cls,
        p: int,
        support_exponent: int,
        level: int,
        evaluate: Callable[[Fraction], Scalar],
        domain: Domain = Domain.MULTIPLICATIVE,
    ) -> LocallyConstantFn:
        """Evaluate a function at each cell representative k p^-A (caller guarantees constancy)."""
        scale = Fraction(p) ** (-support_exponent)
        n = p ** (support_exponent + level)
        skip_zero = domain is Domain.MULTIPLICATIVE
        values = [
            Fraction(0) if (k == 0 and skip_zero) else evaluate(k * scale) for k in range(n)
        ]
        return cls(p, support_exponent, level, tuple(values), domain)

    @classmethod
    def ball_indicator(
        cls,
        p: int,
        center: Rational,
        radius_exponent: int,
        value: Scalar = 1,
        domain: Domain = Domain.ADDITIVE,
    ) -> LocallyConstantFn:
        center = Fraction(center)
        inside = center == 0 or valuation(center, p) >= radius_exponent
        a = -radius_exponent if inside else max(-radius_exponent, -valuation(center, p))
        n = p ** (a + radius_exponent)
        values = [Fraction(0)] * n
        values[0 if inside else residue(center * Fraction(p) ** a, p, a + radius_exponent)] = value
        return cls(p, a, radius_exponent, tuple(values), domain)

    @classmethod
    def units(cls, p: int, value: Scalar = 1) -> LocallyConstantFn:
        """Indicator of Z_p^*."""
        return cls.shell(p, 0, value)

    @classmethod
    def shell(
        cls, p: int, valuation_: int, value: Scalar = 1, character: FiniteCharacter | None = None
    ) -> LocallyConstantFn:
        """value * chi(u / p^m) on the shell {v(u) = m}, i.e. |u| = p^-m."""
        width = max(1, character.conductor_exponent if character else 1)
        n = p**width
        values: list[Scalar] = []
        for k in range(n):
            if k % p == 0:
                values.append(Fraction(0))
            elif character is None:
                values.append(value)
            else:
                values.append(value * character(k))
        return cls(p, -valuation_, valuation_ + width, tuple(values))

    @classmethod
    def radial(cls, p: int, shells: dict[int, Scalar]) -> LocallyConstantFn:
        """sum_m c_m 1_{v(u) = m}."""
        total = cls.zero(p)
        for m, c in sorted(shells.items()):
            total = total + cls.shell(p, m, c)
        return total

    @classmethod
    def from_pieces(
        cls,
        p: int,
        pieces: Iterable[tuple[PAdicBall, Scalar]],
        domain: Domain = Domain.MULTIPLICATIVE,
    ) -> LocallyConstantFn:
        """Build from disjoint balls; overlapping pieces are rejected."""
        pieces = list(pieces)
        for i, (ball, _) in enumerate(pieces):
            for other, _ in pieces[i + 1 :]:
                if ball.relation(other) != "disjoint":
                    raise DomainError(f"pieces overlap: {ball} and {other}")
        total = cls.zero(p, Domain.ADDITIVE)
        for ball, value in pieces:
            total = total + cls.ball_indicator(
                p, ball.center.to_fraction(), ball.radius_exponent, value
            )
        return dataclasses.replace(total, domain=domain)

    # Grid arithmetic

    @property
    def cells(self) -> int:
        return self.p ** (self.support_exponent + self.level)

    @property
    def is_rational(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.values)

    @property
    def is_zero(self) -> bool:
        return all(v == 0 for v in self.values)

    def cell_index(self, x: Rational | PAdicNumber) -> int | None:
        """Index of the cell containing x, or None outside the support."""
        if isinstance(x, PAdicNumber):
            x = x.to_fraction()
        x = Fraction(x)
        if x == 0:
            return 0
        if valuation(x, self.p) < -self.support_exponent:
            return None
        scaled = x * Fraction(self.p) ** self.support_exponent
        return residue(scaled, self.p, self.support_exponent + self.level)

    def __call__(self, x: Rational | PAdicNumber) -> Scalar:
        index = self.cell_index(x)
        return Fraction(0) if index is None else self.values[index]

    def refine(self, support_exponent: int, level: int) -> LocallyConstantFn:
        """Same function on a finer grid (A' >= A, B' >= B)."""
        da = support_exponent - self.support_exponent
        db = level - self.level
        if da < 0 or db < 0:
            raise DomainError("refine can only enlarge the grid")
        if da == 0 and db == 0:
            return self
        n_new = self.p ** (support_exponent + level)
        k = np.arange(n_new, dtype=object)
        step = self.p**da
        old = (k // step) % self.cells
        inside = k % step == 0
        zero = Fraction(0)
        values = tuple(self.values[o] if ok else zero for o, ok in zip(old, inside, strict=True))
        return LocallyConstantFn(self.p, support_exponent, level, values, self.domain)

    def _aligned(self, other: LocallyConstantFn) -> tuple[LocallyConstantFn, LocallyConstantFn]:
        if other.p != self.p:
            raise DomainError(f"cannot combine functions on Q_{self.p} and Q_{other.p}")
        a = max(self.support_exponent, other.support_exponent)
        b = max(self.level, other.level)
        return self.refine(a, b), other.refine(a, b)

    def __add__(self, other: LocallyConstantFn) -> LocallyConstantFn:
        x, y = self._aligned(other)
        domain = Domain.ADDITIVE if Domain.ADDITIVE in (x.domain, y.domain) else x.domain
        values = tuple(_normalize(u + v) for u, v in zip(x.values, y.values, strict=True))
        return LocallyConstantFn(self.p, x.support_exponent, x.level, values, domain)

    def __mul__(self, scalar: Scalar) -> LocallyConstantFn:
        return dataclasses.replace(self, values=tuple(scalar * v for v in self.values))

    __rmul__ = __mul__

    def __neg__(self) -> LocallyConstantFn:
        return self * -1

    def __sub__(self, other: LocallyConstantFn) -> LocallyConstantFn:
        return self + (-other)

    def dilate(self, a: Rational) -> LocallyConstantFn:
        """x -> f(a x)."""
        a = Fraction(a)
        if a == 0:
            raise DomainError("dilation by 0")
        m = valuation(a, self.p)
        unit = residue(a / Fraction(self.p) ** m, self.p, self.support_exponent + self.level)
        n = self.cells
        values = tuple(self.values[unit * k % n] for k in range(n))
        return LocallyConstantFn(
            self.p, self.support_exponent + m, self.level - m, values, self.domain
        )

    def translate(self, b: Rational) -> LocallyConstantFn:
        """x -> f(x - b), as a function on Q_p."""
        b = Fraction(b)
        a = self.support_exponent
        if b != 0:
            a = max(a, -valuation(b, self.p))

        def evaluate(x: Fraction) -> Scalar:
            return self(x - b)

        return LocallyConstantFn.tabulate(self.p, a, self.level, evaluate, Domain.ADDITIVE)

    def reflect(self) -> LocallyConstantFn:
        return self.dilate(-1)

    def inverted(self) -> LocallyConstantFn:
        """u -> f(1/u) on Q_p^*."""
        if self.domain is not Domain.MULTIPLICATIVE:
            raise DomainError("inversion needs a function on Q_p^*")
        a, b = self.support_exponent, self.level
        new_a = max(b - 1, 0)
        new_b = max(b + 2 * a, a + 1, 1)

        def evaluate(x: Fraction) -> Scalar:
            return self(1 / x)

        return LocallyConstantFn.tabulate(self.p, new_a, new_b, evaluate)

    def constant_on(self, center: Rational, radius_exponent: int) -> bool:
        """Whether f is constant on center + p^r Z_p."""
        if radius_exponent >= self.level:
            return True
        ball = PAdicBall.around(center, self.p, radius_exponent)
        target = self(center)
        fine = self.refine(max(self.support_exponent, -radius_exponent), self.level)
        scale = Fraction(self.p) ** (-fine.support_exponent)
        return all(
            v == target for k, v in enumerate(fine.values) if ball.contains(k * scale)
        )

    # Integrals

    def integral(self) -> Scalar:
        """int_{Q_p} f dx with the self-dual measure."""
        return _normalize(sum(self.values, Fraction(0)) * Fraction(self.p) ** (-self.level))

    def shell_integrals(self) -> dict[int, Scalar]:
        """n -> int_{v(x) = n} f d*x with unit mass on units, for n in [-A, B]."""
        p, a, b = self.p, self.support_exponent, self.level
        cell = Fraction(p) ** (-b)
        units_mass = 1 - Fraction(1, p)
        out: dict[int, Scalar] = {n: Fraction(0) for n in range(-a, b)}
        for k, v in enumerate(self.values):
            if k == 0 or v == 0:
                continue
            n = valuation(k, p) - a
            out[n] = out[n] + v * cell * Fraction(p) ** n / units_mass
        out[b] = self.values[0]
        return {n: _normalize(v) for n, v in out.items()}

    def pieces(self) -> list[tuple[PAdicBall, Scalar]]:
        """Disjoint ball decomposition of the support (one ball per nonzero cell)."""
        scale = Fraction(self.p) ** (-self.support_exponent)
        return [
            (PAdicBall.around(k * scale, self.p, self.level), v)
            for k, v in enumerate(self.values)
            if v != 0
        ]

    def describe(self) -> str:
        return (
            f"locally constant on Q_{self.p}{'*' if self.domain is Domain.MULTIPLICATIVE else ''}"
            f" (support p^-{self.support_exponent}, level {self.level})"
        )


@dataclass(frozen=True)
class GaussianEnvelope:
    """|phi(y)| <= amplitude * exp(-(y - center)^2 / (2 width^2))."""

    amplitude: float
    center: float
    width: float

    def mellin_modulus_bound(self, sigma: float, t: float) -> float:
        """Bound on |int envelope(y) e^{(sigma + i t) y} dy| for the matching Gaussian profile."""
        w = self.width
        return (
            self.amplitude
            * math.sqrt(2 * math.pi)
            * w
            * math.exp(sigma * self.center + (sigma**2 - t**2) * w**2 / 2)
        )


@dataclass(frozen=True)
class RadialTestFn:
    """h(u) = profile(log|u|), with compact support in y or a Gaussian decay certificate."""

    profile: Callable[[Any], Any]
    y_min: float = -math.inf
    y_max: float = math.inf
    envelopes: tuple[GaussianEnvelope, ...] = ()
    smoothness: str = "C-infinity"
    mellin_closed_form: Callable[[complex], complex] | None = None
    value_at_one_override: float | None = None
    descriptor: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if math.isinf(self.y_max - self.y_min) and not self.envelopes:
            raise DomainError("unbounded support needs a decay certificate")

    # Families

    @classmethod
    def gaussian_log(
        cls, width: float, center: float = 0.0, amplitude: float = 1.0
    ) -> RadialTestFn:
        """amplitude * exp(-(y - center)^2 / (2 width^2)), y = log|u|."""
        if width <= 0:
            raise DomainError("width must be positive")

        def profile(y):
            return amplitude * np.exp(-((np.asarray(y) - center) ** 2) / (2 * width**2))

        def closed(rho: complex) -> complex:
            return complex(
                amplitude
                * math.sqrt(2 * math.pi)
                * width
                * np.exp(rho * center + rho**2 * width**2 / 2)
            )

        return cls(
            profile,
            envelopes=(GaussianEnvelope(abs(amplitude), center, width),),
            mellin_closed_form=closed,
            descriptor={"family": "gaussian", "width": width, "center": center,
                        "amplitude": amplitude},
        )

    @classmethod
    def bump(cls, y_min: float, y_max: float, amplitude: float = 1.0) -> RadialTestFn:
        """amplitude * e * exp(-1 / (1 - t^2)) with t = y mapped onto [-1, 1]; peak is amplitude."""
        if y_max <= y_min:
            raise DomainError("bump needs y_min < y_max")
        mid = 0.5 * (y_min + y_max)
        half = 0.5 * (y_max - y_min)

        def profile(y):
            t = (np.asarray(y, dtype=float) - mid) / half
            inside = np.abs(t) < 1
            safe = np.where(inside, 1 - t**2, 1.0)
            return np.where(inside, amplitude * np.e * np.exp(-1 / safe), 0.0)

        return cls(
            profile,
            y_min,
            y_max,
            descriptor={"family": "bump", "y_min": y_min, "y_max": y_max, "amplitude": amplitude},
        )

    @classmethod
    def window(cls, y_min: float, y_max: float, amplitude: float = 1.0) -> RadialTestFn:
        """Indicator profile of [y_min, y_max] (piecewise constant)."""

        def profile(y):
            y = np.asarray(y, dtype=float)
            return np.where((y >= y_min) & (y <= y_max), amplitude, 0.0)

        def closed(rho: complex) -> complex:
            if rho == 0:
                return complex(amplitude * (y_max - y_min))
            return complex(amplitude * (np.exp(rho * y_max) - np.exp(rho * y_min)) / rho)

        return cls(
            profile,
            y_min,
            y_max,
            smoothness="piecewise",
            mellin_closed_form=closed,
            descriptor={"family": "window", "y_min": y_min, "y_max": y_max},
        )

    @classmethod
    def zero(cls) -> RadialTestFn:
        def closed(rho: complex) -> complex:
            return 0j

        return cls(lambda y: np.zeros_like(np.asarray(y, dtype=float)), 0.0, 0.0,
                   mellin_closed_form=closed, descriptor={"family": "zero"})

    @classmethod
    def from_parameters(
        cls, family: str, width: float = 1.0, center: float = 0.0, support: float | None = None
    ) -> RadialTestFn:
        """From CLI parameters: gaussian (width, center) or bump/window (center +- support)."""
        if family == "gaussian":
            return cls.gaussian_log(width, center)
        if family in {"bump", "window"}:
            half = support if support is not None else width
            maker = cls.bump if family == "bump" else cls.window
            return maker(center - half, center + half)
        if family == "zero":
            return cls.zero()
        raise DomainError(f"Unknown test-function family: {family}")

    # Algebra

    def combine(self, other: RadialTestFn, a: float = 1.0, b: float = 1.0) -> RadialTestFn:
        """a * self + b * other."""
        p1, p2 = self.profile, other.profile

        def profile(y):
            return a * p1(y) + b * p2(y)

        closed = None
        if self.mellin_closed_form and other.mellin_closed_form:
            c1, c2 = self.mellin_closed_form, other.mellin_closed_form

            def closed(rho: complex) -> complex:
                return a * c1(rho) + b * c2(rho)

        envelopes = tuple(
            dataclasses.replace(e, amplitude=abs(a) * e.amplitude) for e in self.envelopes
        ) + tuple(dataclasses.replace(e, amplitude=abs(b) * e.amplitude) for e in other.envelopes)
        return RadialTestFn(
            profile,
            min(self.y_min, other.y_min),
            max(self.y_max, other.y_max),
            envelopes,
            "C-infinity" if self.smoothness == other.smoothness == "C-infinity" else "piecewise",
            closed,
            descriptor={"family": "combination", "terms": [
                (a, self.descriptor), (b, other.descriptor)]},
        )

    def dilate(self, lam: float) -> RadialTestFn:
        """u -> h(u / lam); Mellin transforms pick up lam^rho."""
        shift = math.log(lam)
        base = self.profile

        def profile(y):
            return base(np.asarray(y) - shift)

        closed = None
        if self.mellin_closed_form:
            c = self.mellin_closed_form

            def closed(rho: complex) -> complex:
                return complex(lam**rho * c(rho))

        return RadialTestFn(
            profile,
            self.y_min + shift,
            self.y_max + shift,
            tuple(dataclasses.replace(e, center=e.center + shift) for e in self.envelopes),
            self.smoothness,
            closed,
            descriptor={"family": "dilate", "lambda": lam, "base": self.descriptor},
        )

    def inverted(self) -> RadialTestFn:
        """u -> h(1/u); the Mellin transform at rho becomes the original at -rho."""
        base = self.profile

        def profile(y):
            return base(-np.asarray(y))

        closed = None
        if self.mellin_closed_form:
            c = self.mellin_closed_form

            def closed(rho: complex) -> complex:
                return c(-rho)

        return RadialTestFn(
            profile,
            -self.y_max,
            -self.y_min,
            tuple(dataclasses.replace(e, center=-e.center) for e in self.envelopes),
            self.smoothness,
            closed,
            self.value_at_one_override,
            descriptor={"family": "inverted", "base": self.descriptor},
        )

    # Evaluation

    @property
    def is_compact(self) -> bool:
        return not math.isinf(self.y_max - self.y_min)

    def at_log(self, y):
        return self.profile(y)

    def at_module(self, m):
        """h at module value m > 0 (scalar or array)."""
        m = np.asarray(m, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(m > 0, self.profile(np.log(np.where(m > 0, m, 1.0))), 0.0)
        return float(out) if out.ndim == 0 else out

    def __call__(self, u):
        return self.at_module(np.abs(np.asarray(u)))

    def value_at_one(self) -> float:
        if self.value_at_one_override is not None:
            return self.value_at_one_override
        return float(self.profile(0.0))

    def envelope_bound(self, y: float) -> float:
        """Pointwise bound on |profile(y)| from the decay certificate."""
        bound = sum(
            e.amplitude * math.exp(-((y - e.center) ** 2) / (2 * e.width**2))
            for e in self.envelopes
        )
        if self.is_compact or not self.envelopes:
            return bound if self.y_min <= y <= self.y_max else 0.0
        return bound

    def integration_window(self, sigma: float, tolerance: float) -> tuple[float, float, float]:
        """Finite y-window for int profile(y) e^{sigma y} dy plus a bound on the neglected tails."""
        if self.is_compact:
            return self.y_min, self.y_max, 0.0
        lo, hi, tail = math.inf, -math.inf, 0.0
        for e in self.envelopes:
            k = 8.0
            while True:
                a = e.center + sigma * e.width**2
                left, right = a - k * e.width, a + k * e.width
                # int_{|y - a| > k w} of the shifted Gaussian
                mass = (
                    e.amplitude
                    * math.sqrt(2 * math.pi)
                    * e.width
                    * math.exp(sigma * e.center + sigma**2 * e.width**2 / 2)
                    * special.erfc(k / math.sqrt(2))
                )
                if mass < tolerance / (10 * len(self.envelopes)) or k > 60:
                    break
                k += 2.0
            lo, hi, tail = min(lo, left), max(hi, right), tail + mass
        return max(lo, self.y_min), min(hi, self.y_max), tail


def mellin(h: RadialTestFn, rho: complex, tolerance: float | None = None) -> QuadResult:
    """int_0^oo h(x) x^rho dx/x by adaptive quadrature in y = log x."""
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    rho = complex(rho)
    sigma, t = rho.real, rho.imag
    if h.is_compact and h.y_max <= h.y_min:
        return QuadResult(0j, 0.0)
    lo, hi, tail = h.integration_window(sigma, tolerance)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError(f"Mellin integral diverges at rho={rho} for {h.descriptor}")
    points = _breakpoints(h, lo, hi)

    def weighted(y: float) -> float:
        return float(h.profile(y)) * math.exp(sigma * y)

    limit = 400 + int(abs(t) * (hi - lo))
    if t == 0:
        re, err = integrate.quad(weighted, lo, hi, epsabs=tolerance, epsrel=0, limit=limit,
                                 points=points)
        im, err_im = 0.0, 0.0
    else:
        re, err = integrate.quad(weighted, lo, hi, weight="cos", wvar=t, epsabs=tolerance,
                                 limit=limit)
        im, err_im = integrate.quad(weighted, lo, hi, weight="sin", wvar=t, epsabs=tolerance,
                                    limit=limit)
    error = err + err_im + tail
    if error > max(1e3 * tolerance, 1e-8):
        raise QuadratureError(f"Mellin quadrature at rho={rho} reached only {error:.2e}", error)
    return QuadResult(complex(re, im), error)


def _breakpoints(h: RadialTestFn, lo: float, hi: float) -> list[float] | None:
    pts = [e.center for e in h.envelopes if lo < e.center < hi]
    pts += [y for y in (h.y_min, h.y_max) if lo < y < hi]
    return sorted(pts) or None


def fourier_real(
    f: Callable[[float], float],
    support: tuple[float, float],
    decay_scale: float | None = None,
    tolerance: float | None = None,
) -> Callable[[float], QuadResult]:
    """x -> int f(y) exp(-2 pi i x y) dy by quadrature, with its error estimate.

    ``support`` may be infinite only when ``decay_scale`` gives the length beyond
    which f is negligible (f(y) << exp(-(y/decay_scale)^2)); the dropped tails are
    counted in the error.
    """
    tolerance = settings.quad_tolerance if tolerance is None else tolerance
    a, b = support
    tail = 0.0
    if math.isinf(a) or math.isinf(b):
        if decay_scale is None:
            raise DomainError("unbounded support needs a decay certificate")
        cut = decay_scale * math.sqrt(-math.log(tolerance) + 8)
        a, b = max(a, -cut), min(b, cut)
        # int_{|y| > cut} exp(-(y / s)^2) dy <= s exp(-(cut / s)^2)
        tail = decay_scale * tolerance * math.exp(-8)

    def transform(x: float) -> QuadResult:
        omega = 2 * math.pi * x
        if omega == 0:
            re, err_re = integrate.quad(f, a, b, epsabs=tolerance, limit=400)
            im, err_im = 0.0, 0.0
        else:
            re, err_re = integrate.quad(
                f, a, b, weight="cos", wvar=omega, epsabs=tolerance, limit=400
            )
            im, err_im = integrate.quad(
                f, a, b, weight="sin", wvar=omega, epsabs=tolerance, limit=400
            )
        if err_re + err_im > 1e3 * tolerance:
            raise QuadratureError(f"Fourier quadrature at {x} reached {err_re + err_im:.2e}")
        return QuadResult(complex(re, -im), err_re + err_im + tail)

    return transform


def reference_f0_f1_f2(nu: float) -> tuple[float, float, float]:
    """f0 = min(sqrt(nu), 1/sqrt(nu)), f1 = 1/f0 - f0, f2 = sqrt(nu) f0."""
    if nu <= 0:
        raise DomainError(f"reference functions need nu > 0, got {nu}")
    f0 = min(math.sqrt(nu), 1 / math.sqrt(nu))
    return f0, 1 / f0 - f0, math.sqrt(nu) * f0


def f0(nu):
    """Vectorized f0 for quadrature integrands."""
    nu = np.asarray(nu, dtype=float)
    root = np.sqrt(nu)
    return np.minimum(root, 1 / root)
