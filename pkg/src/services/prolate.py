"""Prolate operator H_Lambda, the bandlimiting spectrum and the sine-kernel gap probability.

With x = Lambda t the operator -d((Lambda^2 - x^2) d) + (2 pi Lambda x)^2 on
[-Lambda, Lambda] becomes -d((1 - t^2) d) + c^2 t^2 on [-1, 1], c = 2 pi Lambda^2,
which is tridiagonal per parity in normalized Legendre polynomials.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.polynomial import legendre
from pydantic import BaseModel, Field
from scipy import linalg, special

from ..errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

MIN_DIM = 64
LAMBDA_RANGE = (0.5, 4.0)
PLUNGE_BAND = (0.05, 0.95)
RATIO_SLACK = 0.5


class ProlateSpectrum(BaseModel):
    """Eigenvalues chi_n of H_Lambda (ascending) and lambda_n of the bandlimiting operator."""

    lam: float
    bandwidth: float
    dim: int
    chi: list[float]
    eigenvalues: list[float]
    parity: list[int]
    shift: float = 0.0
    tolerance: float = 1e-10
    commutation_residual: float = 0.0
    orthonormality_error: float = 0.0
    coefficients: list[list[float]] = Field(default=[], exclude=True)

    @property
    def converged(self) -> bool:
        """The dim -> 2 dim eigenvalue shift stayed within tolerance."""
        return self.shift <= self.tolerance

    def count_above(self, threshold: float) -> int:
        return sum(1 for v in self.eigenvalues if v > threshold)

    def plunge_width(self) -> int:
        lo, hi = PLUNGE_BAND
        return sum(1 for v in self.eigenvalues if lo < v < hi)

    def rows(self) -> list[dict[str, float]]:
        return [
            {"n": n, "chi": chi, "lambda": lam}
            for n, (chi, lam) in enumerate(zip(self.chi, self.eigenvalues, strict=True))
        ]


class PlungeReport(BaseModel):
    """Plunge widths over a Lambda ladder with the fit a + b log Lambda."""

    lams: list[float]
    widths: list[int]
    intercept: float
    slope: float
    residuals: list[float]
    ratios: list[float]
    ratio_bounds: list[float]
    ratios_ok: bool


class GapReport(BaseModel):
    """E(n, s) from the product prod (1 - z lambda_j(s)) expanded at z = 1."""

    s: float
    bandwidth: float
    probabilities: list[float]
    total: float
    eigenvalues: list[float]


class AngleReport(BaseModel):
    """sin(Theta) = |P1 - P2| for two lines in C^2."""

    sin_theta_norm: float
    sin_theta_lines: float
    difference: float


# Discretization


def _recurrence(k: np.ndarray) -> np.ndarray:
    """a_k = k / sqrt(4k^2 - 1): t Pbar_k = a_{k+1} Pbar_{k+1} + a_k Pbar_{k-1}."""
    k = np.asarray(k, dtype=float)
    return np.where(k > 0, k / np.sqrt(np.maximum(4 * k * k - 1, 1.0)), 0.0)


def _tridiagonal(c: float, parity: int, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = parity + 2 * np.arange(size)
    a_k, a_k1, a_k2 = _recurrence(k), _recurrence(k + 1), _recurrence(k + 2)
    diagonal = k * (k + 1) + c * c * (a_k**2 + a_k1**2)
    off = c * c * (a_k1 * a_k2)[:-1]
    return k, diagonal, off


def _bandlimit_form(c: float, k: np.ndarray, nodes: int) -> np.ndarray:
    """B with K = (4/pi) B diag(w) B^T, B[k, m] = sqrt(k + 1/2) (-1)^floor(k/2) j_k(omega_m)."""
    x, w = legendre.leggauss(nodes)
    omega = 0.5 * c * (x + 1)
    weights = 0.5 * c * w
    signs = np.where((k // 2) % 2 == 0, 1.0, -1.0)
    basis = special.spherical_jn(k[:, None], omega[None, :])
    return (np.sqrt(k + 0.5) * signs)[:, None] * basis * np.sqrt(weights)[None, :]


def _parity_block(c: float, parity: int, size: int) -> dict[str, np.ndarray]:
    k, diagonal, off = _tridiagonal(c, parity, size)
    chi, vectors = linalg.eigh_tridiagonal(diagonal, off)
    nodes = 2 * size + int(2 * c) + 32
    b = _bandlimit_form(c, k, nodes)
    amplitudes = vectors.T @ b
    lam = (4 / math.pi) * np.sum(amplitudes**2, axis=1)
    kernel = (4 / math.pi) * (b @ b.T)
    h = np.diag(diagonal) + np.diag(off, 1) + np.diag(off, -1)
    kd = kernel @ vectors
    commutator = h @ kd - kd * chi[None, :]
    residual = np.linalg.norm(commutator, axis=0)
    return {"k": k, "chi": chi, "lam": lam, "vectors": vectors, "residual": residual}


def _spectrum(c: float, dim: int, even_only: bool = False) -> dict[str, np.ndarray]:
    """Merged per-parity spectra, ordered by chi, for a basis of ``dim`` Legendre polynomials."""
    parities = (0,) if even_only else (0, 1)
    blocks = [(p, _parity_block(c, p, (dim + 1 - p) // 2)) for p in parities]
    chi = np.concatenate([b["chi"] for _, b in blocks])
    lam = np.concatenate([b["lam"] for _, b in blocks])
    parity = np.concatenate([np.full(len(b["chi"]), p) for p, b in blocks])
    residual = np.concatenate([b["residual"] for _, b in blocks])
    coefficients = []
    for p, b in blocks:
        for column in b["vectors"].T:
            full = np.zeros(dim)
            full[b["k"]] = column
            coefficients.append(full)
    order = np.argsort(chi)
    return {
        "chi": chi[order],
        "lam": np.clip(lam[order], 0.0, 1.0),
        "parity": parity[order],
        "residual": residual[order],
        "coefficients": np.asarray(coefficients)[order],
    }


def default_dim(c: float) -> int:
    return max(MIN_DIM, int(1.5 * c) + MIN_DIM)


def solve_bandwidth(
    c: float, dim: int | None = None, tolerance: float = 1e-10, even_only: bool = False
) -> ProlateSpectrum:
    """Spectrum at bandwidth c, with the dim -> 2 dim convergence check on resolved n."""
    dim = default_dim(c) if dim is None else dim
    if dim < MIN_DIM:
        raise DomainError(f"basis dimension must be >= {MIN_DIM}")
    coarse = _spectrum(c, dim, even_only)
    fine = _spectrum(c, 2 * dim, even_only)
    resolved = len(coarse["chi"]) // 2
    shift = float(
        max(
            np.max(np.abs(coarse["lam"][:resolved] - fine["lam"][:resolved])),
            np.max(
                np.abs(coarse["chi"][:resolved] - fine["chi"][:resolved])
                / np.maximum(fine["chi"][:resolved], 1.0)
            ),
        )
    )
    if shift > tolerance:
        raise ConvergenceError(
            f"prolate spectrum at c={c:.4g} moved by {shift:.2e} from dim {dim} to {2 * dim}"
        )
    vectors = coarse["coefficients"][:resolved]
    gram = vectors @ vectors.T
    lam = c / (2 * math.pi)
    logger.debug(f"prolate c={c:.4g}, dim={dim}: shift {shift:.2e}")
    return ProlateSpectrum(
        lam=math.sqrt(lam) if lam > 0 else 0.0,
        bandwidth=c,
        dim=dim,
        chi=[float(v) for v in coarse["chi"][:resolved]],
        eigenvalues=[float(v) for v in coarse["lam"][:resolved]],
        parity=[int(v) for v in coarse["parity"][:resolved]],
        shift=shift,
        tolerance=tolerance,
        commutation_residual=float(np.max(coarse["residual"][:resolved])),
        orthonormality_error=float(np.max(np.abs(gram - np.eye(resolved)))),
        coefficients=[list(map(float, v)) for v in vectors],
    )


def solve_hlambda(lam: float, dim: int | None = None, even_only: bool = False) -> ProlateSpectrum:
    """Legendre-Galerkin spectrum of H_Lambda on [-Lambda, Lambda]."""
    lo, hi = LAMBDA_RANGE
    if not lo <= lam <= hi:
        raise DomainError(f"Lambda must lie in [{lo}, {hi}], got {lam}")
    c = 2 * math.pi * lam * lam
    spectrum = solve_bandwidth(c, dim, even_only=even_only)
    spectrum.lam = lam
    return spectrum


def eigenfunction(spectrum: ProlateSpectrum, n: int, x):
    """psi_n(x) on [-Lambda, Lambda], normalized in L^2."""
    lam = spectrum.lam
    coefficients = np.asarray(spectrum.coefficients[n])
    k = np.arange(len(coefficients))
    x = np.asarray(x, dtype=float)
    t = x / lam
    values = legendre.legval(t, coefficients * np.sqrt(k + 0.5)) / math.sqrt(lam)
    return np.where(np.abs(t) <= 1, values, 0.0)


def plunge_width(spectra: list[ProlateSpectrum]) -> PlungeReport:
    """Width #{n : 0.05 < lambda_n < 0.95} over a Lambda ladder, fitted to a + b log Lambda."""
    if len(spectra) < 3:
        raise DomainError("plunge_width needs at least three values of Lambda")
    if not all(s.converged for s in spectra):
        raise ConvergenceError("plunge_width received a non-converged spectrum")
    ordered = sorted(spectra, key=lambda s: s.lam)
    lams = np.array([s.lam for s in ordered])
    widths = np.array([s.plunge_width() for s in ordered], dtype=float)
    slope, intercept = np.polyfit(np.log(lams), widths, 1)
    residuals = widths - (intercept + slope * np.log(lams))
    ratios, bounds = [], []
    for i in range(len(lams) - 1):
        l1, l2, w1, w2 = lams[i], lams[i + 1], widths[i], widths[i + 1]
        ratios.append(float(w2 / w1) if w1 else math.inf)
        # log Lambda vanishes at Lambda = 1; there only sublinear growth in Lambda^2 is asked
        bounds.append(math.log(l2) / math.log(l1) + RATIO_SLACK if l1 > 1 else (l2 / l1) ** 2)
    return PlungeReport(
        lams=[float(v) for v in lams],
        widths=[int(v) for v in widths],
        intercept=float(intercept),
        slope=float(slope),
        residuals=[float(v) for v in residuals],
        ratios=ratios,
        ratio_bounds=bounds,
        ratios_ok=all(r <= b for r, b in zip(ratios, bounds, strict=True)) and min(widths) >= 1,
    )


# Gap probabilities


def gap_probability(s: float, n_max: int = 2, cutoff: float = 1e-14) -> GapReport:
    """E(n, s) for n <= n_max from the eigenvalues of the sine kernel on an interval of length s."""
    if s < 0 or s > 2:
        raise DomainError("gap probabilities are computed for 0 <= s <= 2")
    if s == 0:
        return GapReport(
            s=0.0, bandwidth=0.0, probabilities=[1.0] + [0.0] * n_max, total=1.0, eigenvalues=[]
        )
    c = math.pi * s / 2
    spectrum = solve_bandwidth(c)
    eigenvalues = np.asarray(spectrum.eigenvalues)
    if eigenvalues[-1] > cutoff:
        raise ConvergenceError(
            f"product over lambda_j(s) not converged: last retained {eigenvalues[-1]:.2e}"
        )
    kept = eigenvalues[eigenvalues > cutoff * 1e-2]
    generating = np.array([1.0])
    for v in kept:
        generating = np.polynomial.polynomial.polymul(generating, [1 - v, v])
    probabilities = [float(generating[n]) if n < len(generating) else 0.0 for n in range(n_max + 1)]
    return GapReport(
        s=s,
        bandwidth=c,
        probabilities=probabilities,
        total=math.fsum(probabilities),
        eigenvalues=[float(v) for v in kept],
    )


def gap_probability_E0(s: float) -> float:  # noqa: N802
    """E(0, s) = prod_j (1 - lambda_j(s))."""
    return gap_probability(s, n_max=0).probabilities[0]


def _nystrom_matrix(a: float, b: float, nodes: int) -> np.ndarray:
    x, w = legendre.leggauss(nodes)
    x, w = b * x, b * w
    diff = x[:, None] - x[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        kernel = np.where(diff == 0, a / math.pi, np.sin(a * diff) / (math.pi * diff))
    root = np.sqrt(w)
    return root[:, None] * kernel * root[None, :]


def nystrom_gap_probability(a: float, b: float, nodes: int | None = None) -> float:
    """det(I - K), K(x, y) = sin(a (x - y)) / (pi (x - y)) on [-b, b], by Nystrom."""
    nodes = nodes or 40 + int(2 * a * b)
    matrix = _nystrom_matrix(a, b, nodes)
    return float(np.linalg.det(np.eye(nodes) - matrix))


def kernel_eigenvalues(a: float, b: float, nodes: int | None = None) -> np.ndarray:
    """Eigenvalues of sin(a (x - y)) / (pi (x - y)) on [-b, b], descending."""
    nodes = nodes or 60 + int(4 * a * b)
    return np.sort(linalg.eigvalsh(_nystrom_matrix(a, b, nodes)))[::-1]


def rescaling_gap(first: tuple[float, float], second: tuple[float, float], count: int = 8) -> float:
    """Largest difference of the leading eigenvalues for two (a, b) with the same product."""
    a1, b1 = first
    a2, b2 = second
    if not math.isclose(a1 * b1, a2 * b2, rel_tol=1e-12):
        raise DomainError("rescaling check needs a b = a' b'")
    e1, e2 = kernel_eigenvalues(a1, b1), kernel_eigenvalues(a2, b2)
    return float(np.max(np.abs(e1[:count] - e2[:count])))


def angle_operator_check(v1, v2) -> AngleReport:
    """Angle between two lines in C^2: sin(Theta) from |P1 - P2| and from the vectors."""
    v1 = np.asarray(v1, dtype=complex)
    v2 = np.asarray(v2, dtype=complex)
    if v1.shape != (2,) or v2.shape != (2,):
        raise DomainError("angle_operator_check takes two vectors in C^2")
    v1, v2 = v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2)
    p1, p2 = np.outer(v1, v1.conj()), np.outer(v2, v2.conj())
    norm = float(np.linalg.norm(p1 - p2, ord=2))
    cos = min(1.0, abs(np.vdot(v1, v2)))
    lines = math.sqrt(max(0.0, 1 - cos * cos))
    return AngleReport(sin_theta_norm=norm, sin_theta_lines=lines, difference=abs(norm - lines))
