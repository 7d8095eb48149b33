"""Riemann zeta, the Hardy Z function, critical-line zeros and the zero-counting functions."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import mpmath
import numpy as np
from pydantic import BaseModel, model_validator
from scipy import optimize, special

from ..config import settings
from ..errors import DomainError, ZeroCountMismatch

logger = logging.getLogger(__name__)

METHOD = "euler-maclaurin"
MAX_HEIGHT = 1.0e4
MAX_ZERO_HEIGHT = 1.0e3
EM_TERMS = 20

_BERNOULLI = special.bernoulli(2 * EM_TERMS + 2)
_EM_COEFFICIENTS = [
    float(_BERNOULLI[2 * k]) / math.factorial(2 * k) for k in range(1, EM_TERMS + 2)
]


class ZeroList(BaseModel):
    """Ordinates 0 < gamma_1 < gamma_2 < ... of critical-line zeros below e_max."""

    ordinates: list[float]
    brackets: list[float]
    method: str = METHOD
    e_max: float
    tolerance: float

    @model_validator(mode="after")
    def _check_order(self) -> ZeroList:
        if len(self.ordinates) != len(self.brackets):
            raise ValueError("every ordinate needs a bracket width")
        if any(b <= a for a, b in zip(self.ordinates, self.ordinates[1:], strict=False)):
            raise ValueError("ordinates must be strictly increasing")
        if self.ordinates and (self.ordinates[0] <= 0 or self.ordinates[-1] >= self.e_max):
            raise ValueError("ordinates must lie in (0, e_max)")
        return self

    def __len__(self) -> int:
        return len(self.ordinates)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ordinates, dtype=float)

    def count_below(self, e: float) -> int:
        if e > self.e_max:
            raise DomainError(f"zero list covers (0, {self.e_max}), asked for {e}")
        return int(np.searchsorted(self.as_array(), e))

    def truncated(self, e_max: float) -> ZeroList:
        n = self.count_below(e_max)
        return ZeroList(
            ordinates=self.ordinates[:n],
            brackets=self.brackets[:n],
            method=self.method,
            e_max=e_max,
            tolerance=self.tolerance,
        )


class CountingReport(BaseModel):
    """Exact zero count against its smooth and oscillatory parts."""

    e: float
    n_exact: int
    smooth: float
    oscillatory: float
    residual: float


# Evaluation


def zeta_with_bound(s: complex) -> tuple[complex, float]:
    """Euler-Maclaurin value of zeta(s) and the size of the first omitted correction."""
    s = complex(s)
    if s == 1:
        raise DomainError("zeta has a pole at s = 1")
    if abs(s.imag) > MAX_HEIGHT:
        raise DomainError(f"|Im s| = {abs(s.imag)} exceeds the supported range {MAX_HEIGHT:g}")
    if s.real < 0:
        reflected, bound = zeta_with_bound(1 - s)
        factor = 2**s * np.pi ** (s - 1) * np.sin(np.pi * s / 2) * special.gamma(1 - s)
        return complex(factor * reflected), float(abs(factor) * bound)

    n_terms = int(abs(s.imag) / math.pi) + 20
    n = np.arange(1, n_terms, dtype=float)
    head = np.sum(np.exp(-s * np.log(n)))
    big = float(n_terms)
    value = head + big ** (1 - s) / (s - 1) + big ** (-s) / 2
    rising = s
    power = big ** (-s - 1)
    term = 0j
    for k in range(1, EM_TERMS + 2):
        term = _EM_COEFFICIENTS[k - 1] * rising * power
        if k <= EM_TERMS:
            value += term
        rising *= (s + 2 * k - 1) * (s + 2 * k)
        power /= big * big
    return complex(value), float(abs(term))


def zeta(s: complex) -> complex:
    """zeta(s) for s != 1, |Im s| <= 1e4."""
    return zeta_with_bound(s)[0]


def zeta_reference(s: complex, dps: int = 30) -> complex:
    """Arbitrary-precision cross-check through mpmath."""
    with mpmath.workdps(dps):
        return complex(mpmath.zeta(mpmath.mpc(complex(s))))


def completed_zeta(s: complex) -> complex:
    """xi(s) = s (s - 1) pi^(-s/2) Gamma(s/2) zeta(s) / 2, symmetric under s -> 1 - s."""
    s = complex(s)
    return complex(0.5 * s * (s - 1) * np.pi ** (-s / 2) * special.gamma(s / 2) * zeta(s))


def riemann_siegel_theta(t):
    """theta(t) = Im log Gamma(1/4 + i t / 2) - (t / 2) log pi, scalar or array."""
    t = np.asarray(t, dtype=float)
    out = np.imag(special.loggamma(0.25 + 0.5j * t)) - 0.5 * t * math.log(math.pi)
    return float(out) if out.ndim == 0 else out


def hardy_z(t: float) -> float:
    """Z(t) = exp(i theta(t)) zeta(1/2 + i t), real for real t."""
    return (np.exp(1j * riemann_siegel_theta(t)) * zeta(complex(0.5, t))).real


def argument_variation(t: float, samples: int = 256) -> float:
    """Continuous arg zeta along 2 -> 2 + i t -> 1/2 + i t, starting from 0."""
    # Re zeta(2 + i t) > 0 everywhere, so the vertical leg is the principal argument
    start = np.angle(zeta(complex(2.0, t)))
    while True:
        sigmas = np.linspace(2.0, 0.5, samples)
        values = np.array([zeta(complex(sigma, t)) for sigma in sigmas])
        phases = np.unwrap(np.angle(values))
        if np.max(np.abs(np.diff(phases))) < math.pi / 4 or samples > 8192:
            break
        samples *= 2
    return float(start + phases[-1] - phases[0])


def argument_count(t: float) -> int:
    """N(t) = theta(t) / pi + 1 + S(t) rounded, from the argument principle."""
    if t <= 0:
        return 0
    estimate = riemann_siegel_theta(t) / math.pi + 1 + argument_variation(t) / math.pi
    count = round(estimate)
    if abs(estimate - count) > 0.25:
        raise DomainError(f"argument count at {t} is not near an integer ({estimate:.3f})")
    return max(count, 0)


# Zero search


def _cache_path(e_max: float, tolerance: float, cache_dir: Path | None) -> Path:
    directory = Path(cache_dir or settings.cache_dir)
    return directory / f"zeros-{METHOD}-tol{tolerance:g}-E{e_max:g}.csv"


def save_zero_list(zeros: ZeroList, cache_dir: Path | None = None) -> Path:
    """Write a zero list as CSV (ordinate, bracket) with a method/tolerance header."""
    path = _cache_path(zeros.e_max, zeros.tolerance, cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([zeros.as_array(), np.asarray(zeros.brackets, dtype=float)])
    header = f"method={zeros.method},tolerance={zeros.tolerance!r},e_max={zeros.e_max!r}"
    np.savetxt(path, data.reshape(-1, 2), delimiter=",", fmt="%.17g", header=header)
    logger.info(f"Cached {len(zeros)} zeros below {zeros.e_max:g} in {path}")
    return path


def cached_heights(cache_dir: Path | None = None) -> list[float]:
    """Heights E_max of the zero lists cached with the current method, ascending."""
    directory = Path(cache_dir or settings.cache_dir)
    heights = []
    for path in directory.glob(f"zeros-{METHOD}-tol*-E*.csv"):
        with path.open() as handle:
            header = handle.readline().lstrip("# ").strip()
        meta = dict(item.split("=", 1) for item in header.split(","))
        heights.append(float(meta["e_max"]))
    return sorted(heights)


def load_zero_list(
    e_max: float, tolerance: float | None = None, cache_dir: Path | None = None
) -> ZeroList | None:
    """A cached list covering e_max with the same method and tolerance, truncated to e_max."""
    tolerance = settings.zero_bracket_tolerance if tolerance is None else tolerance
    directory = Path(cache_dir or settings.cache_dir)
    if not directory.is_dir():
        return None
    for path in sorted(directory.glob(f"zeros-{METHOD}-tol{tolerance:g}-E*.csv")):
        with path.open() as handle:
            header = handle.readline().lstrip("# ").strip()
        meta = dict(item.split("=", 1) for item in header.split(","))
        if meta.get("method") != METHOD or float(meta["tolerance"]) != tolerance:
            continue
        cached_max = float(meta["e_max"])
        if cached_max < e_max:
            continue
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        zeros = ZeroList(
            ordinates=[float(x) for x in data[:, 0]] if data.size else [],
            brackets=[float(x) for x in data[:, 1]] if data.size else [],
            e_max=cached_max,
            tolerance=tolerance,
        )
        logger.info(f"Loaded zeros below {e_max:g} from {path}")
        return zeros.truncated(e_max)
    return None


def _sign_changes(grid: np.ndarray, values: np.ndarray) -> list[tuple[float, float]]:
    signs = np.sign(values)
    idx = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    return [(float(grid[i]), float(grid[i + 1])) for i in idx]


def find_zeros(
    e_max: float,
    tolerance: float | None = None,
    *,
    use_cache: bool = True,
    cache_dir: Path | None = None,
    max_refinements: int = 5,
) -> ZeroList:
    """All critical-line zero ordinates below e_max via sign changes of Z(t).

    The scan grid is halved until the sign-change count equals the
    argument-principle count N(e_max); each zero is then refined to ``tolerance``.
    """
    tolerance = settings.zero_bracket_tolerance if tolerance is None else tolerance
    if e_max > MAX_ZERO_HEIGHT:
        raise DomainError(f"zero search is limited to E <= {MAX_ZERO_HEIGHT:g}")
    if use_cache:
        cached = load_zero_list(e_max, tolerance, cache_dir)
        if cached is not None:
            return cached

    expected = argument_count(e_max)
    # mean gap 2 pi / log(t / 2 pi); start with about ten samples per gap at the top
    step = min(0.5, 2 * math.pi / max(math.log(max(e_max, 2 * math.pi) / (2 * math.pi)), 1) / 10)
    brackets: list[tuple[float, float]] = []
    for attempt in range(max_refinements + 1):
        grid = np.arange(1.0, e_max, step)
        grid = np.append(grid, e_max)
        values = np.array([hardy_z(t) for t in grid])
        brackets = _sign_changes(grid, values)
        logger.debug(f"scan step {step:.4f}: {len(brackets)} sign changes, expected {expected}")
        if len(brackets) == expected:
            break
        step /= 2
    else:
        raise ZeroCountMismatch(
            f"found {len(brackets)} sign changes below {e_max:g} but N(E) = {expected}",
            found=len(brackets),
            expected=expected,
        )

    ordinates = [
        float(optimize.brentq(hardy_z, a, b, xtol=tolerance, rtol=4 * np.finfo(float).eps))
        for a, b in brackets
    ]
    zeros = ZeroList(
        ordinates=ordinates,
        brackets=[tolerance] * len(ordinates),
        e_max=e_max,
        tolerance=tolerance,
    )
    logger.info(f"Found {len(zeros)} zeros below {e_max:g} after {attempt + 1} scan(s)")
    if use_cache:
        save_zero_list(zeros, cache_dir)
    return zeros


def counting_functions(e: float, zeros: ZeroList | None = None) -> CountingReport:
    """N(E) from the zero list, the smooth part <N(E)> and the oscillatory part S(E)."""
    if e <= 0:
        raise DomainError("counting functions need E > 0")
    if zeros is None or zeros.e_max < e:
        zeros = find_zeros(e)
    ordinates = zeros.as_array()
    if ordinates.size and np.min(np.abs(ordinates - e)) < 1e3 * zeros.tolerance:
        raise DomainError(f"E = {e} lies within a zero bracket")
    n_exact = zeros.count_below(e)
    x = e / (2 * math.pi)
    smooth = x * (math.log(x) - 1) + 7 / 8
    oscillatory = argument_variation(e) / math.pi
    residual = n_exact - (smooth + oscillatory)
    if round(smooth + oscillatory) != n_exact:
        raise ZeroCountMismatch(
            f"<N> + N_osc = {smooth + oscillatory:.3f} does not round to N = {n_exact}",
            found=n_exact,
            expected=round(smooth + oscillatory),
        )
    return CountingReport(
        e=e, n_exact=n_exact, smooth=smooth, oscillatory=oscillatory, residual=residual
    )
