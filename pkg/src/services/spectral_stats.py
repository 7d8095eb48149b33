"""Semiclassical counting, zero unfolding, pair correlation and the shift-model limit."""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel
from scipy import integrate, stats

from ..errors import DomainError
from .zeta_zeros import ZeroList

logger = logging.getLogger(__name__)

SPACING_TOLERANCE = 0.05
MIN_SPACING_SAMPLE = 10
MIN_PAIR_ZEROS = 300
LIKELIHOOD_MARGIN = math.log(10)


class AreaReport(BaseModel):
    """Area of D'_+ = {0 <= P, Q <= Lambda, PQ <= E / 2 pi} under dP dQ, computed two ways."""

    e: float
    lam: float
    closed_form: float
    numerical: float
    error: float
    pre_rescaling: float
    pre_rescaling_numerical: float


class UnfoldedZeros(BaseModel):
    """x_j = <N(gamma_j)> for each zero ordinate."""

    ordinates: list[float]
    x: list[float]
    mean_spacing: float

    def __len__(self) -> int:
        return len(self.x)


class PairCorrelationReport(BaseModel):
    """Histogram of positive differences x_i - x_j against 1 - (sin pi u / pi u)^2."""

    edges: list[float]
    density: list[float]
    reference: list[float]
    l2_deviation: float
    base_points: int
    pair_count: int
    expected_pairs: float
    log_likelihood_ratio: float
    prefers_gue: bool


class ShiftModelReport(BaseModel):
    """Trace((S_N - E_N) V(f)) over an N ladder against sum_z int P_z f^."""

    ladder: list[int]
    traces_real: list[float]
    traces_imag: list[float]
    limit_real: float
    limit_imag: float
    deviations: list[float]
    converging: bool


# Semiclassical counting


def semiclassical_closed_form(e: float, lam: float) -> float:
    """(2E / 2 pi) log Lambda - (E / 2 pi)(log(E / 2 pi) - 1)."""
    a = e / (2 * math.pi)
    return 2 * a * math.log(lam) - a * (math.log(a) - 1)


def semiclassical_area(e: float, lam: float, tolerance: float = 1e-10) -> AreaReport:
    """Closed form and direct two-dimensional area of D'_+, plus the e^{ix}-convention value."""
    if e <= 0 or lam <= 0:
        raise DomainError("semiclassical area needs E > 0 and Lambda > 0")
    a = e / (2 * math.pi)
    if a > lam * lam:
        raise DomainError(
            f"E / 2 pi = {a:.4g} exceeds Lambda^2 = {lam * lam:.4g}: hyperbola misses the square"
        )
    numerical, error = integrate.dblquad(
        lambda p, q: 1.0, 0.0, lam, 0.0, lambda q: min(lam, a / q) if q > 0 else lam,
        epsabs=tolerance,
    )
    # dp dq / 2 pi over {p, q <= Lambda, pq <= E}
    pre, _ = integrate.quad(
        lambda q: min(lam, e / q) / (2 * math.pi), 0.0, lam, points=[e / lam], epsabs=tolerance
    )
    return AreaReport(
        e=e,
        lam=lam,
        closed_form=semiclassical_closed_form(e, lam),
        numerical=numerical,
        error=error,
        pre_rescaling=a + 2 * a * math.log(lam) - a * math.log(e),
        pre_rescaling_numerical=pre,
    )


def monte_carlo_area(e: float, lam: float, samples: int = 2**20, seed: int = 0) -> float:
    """Scrambled-Sobol estimate of the area of D'_+."""
    if e <= 0 or lam <= 0:
        raise DomainError("semiclassical area needs E > 0 and Lambda > 0")
    sampler = stats.qmc.Sobol(d=2, scramble=True, seed=seed)
    points = sampler.random_base2(int(math.ceil(math.log2(samples)))) * lam
    inside = points[:, 0] * points[:, 1] <= e / (2 * math.pi)
    return float(lam * lam * np.mean(inside))


# Unfolding and pair correlation


def smooth_count(e):
    """<N(E)> = (E / 2 pi)(log(E / 2 pi) - 1) + 7/8."""
    x = np.asarray(e, dtype=float) / (2 * math.pi)
    out = x * (np.log(x) - 1) + 7 / 8
    return float(out) if out.ndim == 0 else out


def unfold(zeros: ZeroList | Sequence[float]) -> UnfoldedZeros:
    """Map ordinates to x_j = <N(gamma_j)>; the mean spacing must be 1 within 5%."""
    ordinates = zeros.as_array() if isinstance(zeros, ZeroList) else np.asarray(zeros, float)
    if ordinates.size == 0:
        raise DomainError("cannot unfold an empty zero list")
    x = smooth_count(ordinates)
    x = np.atleast_1d(x)
    spacing = float((x[-1] - x[0]) / (len(x) - 1)) if len(x) > 1 else 1.0
    if len(x) >= MIN_SPACING_SAMPLE and abs(spacing - 1) > SPACING_TOLERANCE:
        raise DomainError(
            f"unfolded mean spacing {spacing:.3f} is not 1: the zero list looks miscounted"
        )
    return UnfoldedZeros(
        ordinates=[float(v) for v in ordinates], x=[float(v) for v in x], mean_spacing=spacing
    )


def gue_pair_density(u):
    """1 - (sin(pi u) / (pi u))^2."""
    return 1 - np.sinc(np.asarray(u, dtype=float)) ** 2


def pair_correlation(
    unfolded: UnfoldedZeros,
    u_max: float = 2.0,
    bins: int = 20,
    min_zeros: int = MIN_PAIR_ZEROS,
) -> PairCorrelationReport:
    """Empirical pair density on (0, u_max] from base points x_j <= x_max - u_max."""
    x = np.asarray(unfolded.x)
    if len(x) < min_zeros:
        raise DomainError(f"pair correlation needs at least {min_zeros} zeros, got {len(x)}")
    base = x[x <= x[-1] - u_max]
    differences = []
    for j, xj in enumerate(base):
        later = x[j + 1 :]
        differences.append(later[later - xj <= u_max] - xj)
    diffs = np.concatenate(differences) if differences else np.array([])
    diffs = diffs[diffs > 0]
    edges = np.linspace(0.0, u_max, bins + 1)
    counts, _ = np.histogram(diffs, bins=edges)
    width = edges[1] - edges[0]
    density = counts / (len(base) * width)
    reference = np.array(
        [integrate.quad(gue_pair_density, a, b)[0] / (b - a) for a, b in zip(edges, edges[1:])]
    )
    l2 = math.sqrt(float(np.sum((density - reference) ** 2) * width / u_max))

    mass, _ = integrate.quad(gue_pair_density, 0.0, u_max)
    gue = np.log(np.maximum(gue_pair_density(diffs), 1e-300) / mass)
    uniform = -math.log(u_max)
    llr = float(np.sum(gue - uniform))
    logger.info(f"pair correlation over {len(base)} base points: L2 {l2:.3f}, LLR {llr:.1f}")
    return PairCorrelationReport(
        edges=[float(v) for v in edges],
        density=[float(v) for v in density],
        reference=[float(v) for v in reference],
        l2_deviation=l2,
        base_points=len(base),
        pair_count=int(diffs.size),
        expected_pairs=len(base) * mass,
        log_likelihood_ratio=llr,
        prefers_gue=llr > LIKELIHOOD_MARGIN,
    )


# Shift model


def _gram_schmidt(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning the columns of ``vectors`` (two passes)."""
    basis: list[np.ndarray] = []
    for v in vectors.T:
        w = v / np.linalg.norm(v)
        for _ in range(2):
            for q in basis:
                w = w - np.vdot(q, w) * q
        norm = np.linalg.norm(w)
        if norm < 1e-12:
            raise DomainError("spanning vectors are linearly dependent")
        basis.append(w / norm)
    return np.column_stack(basis)


def _spanning_vectors(points: Counter, n: int) -> np.ndarray:
    """eta_{z,j}(k) = k^j conj(z)^k on k in [-n, n], one Jordan chain per repeated z."""
    k = np.arange(-n, n + 1, dtype=float)
    columns = []
    for z, multiplicity in points.items():
        log_z = np.log(np.conj(z))
        exponent = k * log_z.real
        magnitude = np.exp(exponent - exponent.max())
        phase = np.exp(1j * k * log_z.imag)
        for j in range(multiplicity):
            columns.append(k**j * magnitude * phase)
    return np.column_stack(columns)


def _shift_trace(basis: np.ndarray, f: dict[int, complex]) -> complex:
    size = basis.shape[0]
    total = 0j
    for shift, c in f.items():
        if abs(shift) >= size:
            continue
        if shift >= 0:
            term = np.sum(basis[: size - shift] * np.conj(basis[shift:]))
        else:
            term = np.sum(basis[-shift:] * np.conj(basis[: size + shift]))
        total += c * term
    return complex(total)


def poisson_pairing(z: complex, f: dict[int, complex]) -> complex:
    """int_0^{2 pi} P_z f^ du / 2 pi, f^(u) = sum_k f(k) e^{iku}; a Dirac mass for |z| = 1."""
    r = abs(z)

    def fhat(u: float) -> complex:
        return sum(c * complex(math.cos(k * u), math.sin(k * u)) for k, c in f.items())

    if math.isclose(r, 1.0, abs_tol=1e-14):
        return fhat(math.atan2(z.imag, z.real))

    def kernel(u: float) -> float:
        return abs(1 - r * r) / abs(complex(math.cos(u), math.sin(u)) - z) ** 2

    re, _ = integrate.quad(lambda u: kernel(u) * fhat(u).real, 0, 2 * math.pi, limit=400)
    im, _ = integrate.quad(lambda u: kernel(u) * fhat(u).imag, 0, 2 * math.pi, limit=400)
    return complex(re, im) / (2 * math.pi)


def shift_model_limit(
    points: Sequence[complex], f: dict[int, complex], ladder: Sequence[int] = (8, 16, 32, 64)
) -> ShiftModelReport:
    """Trace of V(f) = sum_k f(k) V^k compressed to the span of the eta_z, against Poisson.

    E_N = {xi : sum_n xi(n) z^n = 0 for z in F}, so S_N - E_N is spanned by
    eta_z(n) = conj(z)^n (with Jordan chains for repeated points).
    """
    if not points:
        raise DomainError("the point set F is empty")
    if any(z == 0 for z in points):
        raise DomainError("F must lie in C^*")
    if len(ladder) < 2:
        raise DomainError("the N ladder needs at least two rungs")
    grouped = Counter(complex(round(z.real, 12), round(z.imag, 12)) for z in map(complex, points))
    f = {int(k): complex(c) for k, c in f.items()}
    limit = sum(m * poisson_pairing(z, f) for z, m in grouped.items())
    traces = []
    for n in ladder:
        if 2 * n + 1 <= sum(grouped.values()):
            raise DomainError(f"window [-{n}, {n}] is too small for {len(points)} points")
        basis = _gram_schmidt(_spanning_vectors(grouped, n))
        traces.append(_shift_trace(basis, f))
    deviations = [abs(t - limit) for t in traces]
    tail = deviations[-3:]
    converging = all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))
    return ShiftModelReport(
        ladder=list(ladder),
        traces_real=[t.real for t in traces],
        traces_imag=[t.imag for t in traces],
        limit_real=limit.real,
        limit_imag=limit.imag,
        deviations=deviations,
        converging=converging,
    )
