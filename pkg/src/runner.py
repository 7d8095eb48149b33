"""Experiment runner: validated configs, an operation registry, run records and suites."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .config import settings
from .errors import AdeleTraceError, ConfigError
from .services import (
    adelic_summation,
    cutoff_trace,
    explicit_formula,
    local_field,
    principal_value,
    prolate,
    spectral_stats,
    test_functions,
    zeta_zeros,
)
from .services.local_field import LogLinearNumber, Place, PlaceKind
from .services.test_functions import FiniteCharacter, LocallyConstantFn, RadialTestFn, f0

logger = logging.getLogger(__name__)

Pair = tuple[float, float]

REFERENCE_WINDOW = (-30.0, 30.0)


def _pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _complex(pair: Pair) -> complex:
    return complex(pair[0], pair[1])


def _dump(model: BaseModel) -> dict[str, Any]:
    return model.model_dump(mode="json")


# Parameter models


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CharacterSpec(_Params):
    """Character of (Z/p^conductor)^* sending a generator to exp(2 pi i index / order)."""

    p: int = 3
    conductor: int = 1
    index: int = 1
    sign: int = 0

    def build(self) -> FiniteCharacter:
        return FiniteCharacter.from_index(self.p, self.conductor, self.index, self.sign)


class LocalFunctionSpec(_Params):
    """sum_m c_m 1_{v(u) = m} (optionally twisted), or the ball indicator 1_{p^ball Z_p}."""

    p: int = 2
    shells: dict[int, str] = Field(default_factory=lambda: {0: "1"})
    ball: int | None = None
    character: CharacterSpec | None = None

    def build(self, p: int | None = None) -> LocallyConstantFn:
        p = self.p if p is None else p
        if self.ball is not None:
            return LocallyConstantFn.ball_indicator(p, 0, self.ball)
        if self.character is not None:
            chi = self.character.build()
            if chi.p != p:
                raise ConfigError(f"character is mod {chi.p}, function lives on Q_{p}", "p")
            total = LocallyConstantFn.zero(p)
            for m, c in sorted(self.shells.items()):
                total = total + LocallyConstantFn.shell(p, m, Fraction(c), chi)
            return total
        return LocallyConstantFn.radial(p, {m: Fraction(c) for m, c in self.shells.items()})


class RadialFunctionSpec(_Params):
    """Radial test function on R^*: gaussian (width, center) or bump/window (center +- support)."""

    family: Literal["gaussian", "bump", "window", "zero"] = "gaussian"
    width: float = 1.0
    center: float = 0.0
    support: float | None = None

    def build(self) -> RadialTestFn:
        return RadialTestFn.from_parameters(self.family, self.width, self.center, self.support)


class LocalParams(_Params):
    op: Literal[
        "module", "padic_fourier", "local_zeta_integral", "homogeneous_delta_prime"
    ] = "module"
    place: str = "2"
    x: str = "12"
    s: Pair = (2.0, 0.0)
    function: LocalFunctionSpec = Field(default_factory=LocalFunctionSpec)


class ProfileParams(_Params):
    op: Literal["mellin", "fourier_real", "reference_f0_f1_f2"] = "mellin"
    function: RadialFunctionSpec = Field(default_factory=RadialFunctionSpec)
    rho: Pair = (0.5, 14.134725141734695)
    width: float = 1.0
    points: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0, 2.0])
    nus: list[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0])


class PVParams(_Params):
    op: Literal[
        "pv_finite",
        "pv_finite_char",
        "pv_real",
        "pv_complex",
        "pv_weil",
        "pv_character_shift",
        "unit_shell_regularization",
        "log_distribution_pairing",
    ] = "pv_finite"
    place: str = "R"
    function: LocalFunctionSpec = Field(default_factory=LocalFunctionSpec)
    primes: list[int] | None = None
    characters: list[CharacterSpec] = Field(default_factory=lambda: [CharacterSpec()])
    real: RadialFunctionSpec | None = None
    shift: str = "1/2"
    expected: float | None = None


class ZerosParams(_Params):
    op: Literal["zeta", "find_zeros", "counting_functions"] = "zeta"
    s: Pair = (0.5, 14.134725141734695)
    e_max: float = 100.0
    expected_count: int | None = None
    energies: list[float] = Field(default_factory=lambda: [50.0, 100.0, 200.0])


class FormulaParams(_Params):
    op: Literal["spectral_side", "geometric_side", "compare", "dilation_instance"] = "compare"
    functions: list[RadialFunctionSpec] = Field(default_factory=lambda: [RadialFunctionSpec()])
    e_max: float = 200.0
    prime_cutoff: int | None = None
    lam: float = 2.0


class TraceParams(_Params):
    op: Literal[
        "symbol_g", "trace_padic", "trace_padic_character", "trace_real", "trace_slocal"
    ] = "trace_padic"
    target: Literal["finite", "real"] = "finite"
    function: LocalFunctionSpec = Field(default_factory=LocalFunctionSpec)
    n: list[int] = Field(default_factory=lambda: [4])
    character: CharacterSpec = Field(default_factory=CharacterSpec)
    real: RadialFunctionSpec = Field(
        default_factory=lambda: RadialFunctionSpec(family="bump", support=0.5)
    )
    lams: list[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    finite: list[LocalFunctionSpec] = Field(default_factory=list)
    lam: float = 4.0
    fundamental_domain: Literal["unit-finite", "interval-real"] = "unit-finite"
    points: list[float] = Field(default_factory=lambda: [-2.0, -1.5, -0.5, 0.0])


class ProlateParams(_Params):
    op: Literal[
        "solve_hlambda",
        "plunge_width",
        "gap_probability_E0",
        "nystrom_gap_probability",
        "angle_operator_check",
    ] = "solve_hlambda"
    lams: list[float] = Field(default_factory=lambda: [1.0, 1.5, 2.0])
    dim: int | None = None
    s: float = 1.0
    a: float = math.pi
    b: float = 0.5
    v1: list[Pair] = Field(default_factory=lambda: [(1.0, 0.0), (0.0, 0.0)])
    v2: list[Pair] = Field(default_factory=lambda: [(1.0, 0.0), (1.0, 0.0)])


class StatsParams(_Params):
    op: Literal[
        "semiclassical_area",
        "monte_carlo_area",
        "unfold",
        "pair_correlation",
        "shift_model_limit",
    ] = "semiclassical_area"
    e: float = 2 * math.pi
    lam: float = math.e
    samples: int = 2**20
    e_max: float = 1000.0
    u_max: float = 2.0
    bins: int = 20
    l2_limit: float = 0.15
    points: list[Pair] = Field(default_factory=lambda: [(0.9, 0.0)])
    coefficients: dict[int, Pair] = Field(default_factory=lambda: {1: (1.0, 0.0)})
    ladder: list[int] = Field(default_factory=lambda: [250, 500, 1000, 2000])


class AdelicParams(_Params):
    op: Literal["e_map", "functional_equation_check", "mellin_vs_L", "decay_report"] = "e_map"
    amplitudes: list[float] | None = None
    widths: list[float] | None = None
    finite: dict[int, LocalFunctionSpec] = Field(default_factory=dict)
    lams: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    expected: list[float] | None = None
    grid: list[float] = Field(default_factory=lambda: [float(v) for v in np.geomspace(0.25, 4, 9)])
    require_s0: bool = True
    s_points: list[Pair] = Field(default_factory=lambda: [(0.3, 0.0), (0.5, 2.0), (0.7, -1.0)])
    zeros: int = 1
    zero_tolerance: float = 1e-5

    def build(self) -> adelic_summation.AdelicTestFn:
        if self.amplitudes is None and self.widths is None:
            archimedean = adelic_summation.GaussianSeries.s0_example()
        elif self.amplitudes is None or self.widths is None:
            raise ConfigError("amplitudes and widths go together", "amplitudes")
        else:
            archimedean = adelic_summation.GaussianSeries.combination(self.amplitudes, self.widths)
        finite = {p: spec.build(p) for p, spec in self.finite.items()}
        return adelic_summation.AdelicTestFn(archimedean, finite)


PARAMETERS: dict[str, type[_Params]] = {
    "local": LocalParams,
    "test-fn": ProfileParams,
    "pv": PVParams,
    "zeros": ZerosParams,
    "explicit-formula": FormulaParams,
    "trace": TraceParams,
    "prolate": ProlateParams,
    "stats": StatsParams,
    "adelic": AdelicParams,
}

SERVICES = {
    "local": local_field,
    "test-fn": test_functions,
    "pv": principal_value,
    "zeros": zeta_zeros,
    "explicit-formula": explicit_formula,
    "trace": cutoff_trace,
    "prolate": prolate,
    "stats": spectral_stats,
    "adelic": adelic_summation,
}


# Configs and records


def _config_error(error: ValidationError, prefix: str | None = None) -> ConfigError:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"])
    if prefix:
        key = f"{prefix}.{key}" if key else prefix
    return ConfigError(f"invalid config key {key!r}: {first['msg']}", key=key)


class ExperimentConfig(BaseModel):
    """One experiment: a subcommand, its parameters, a tolerance and an output directory."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    subcommand: str
    params: dict[str, Any] = Field(default_factory=dict)
    tolerance: float = 1e-6
    output_dir: Path | None = None
    seed: int = 0
    name: str | None = None

    @classmethod
    def from_mapping(cls, data: Any) -> ExperimentConfig:
        """Validate a raw mapping; parameter defaults are filled in so the file is complete."""
        try:
            config = cls.model_validate(data)
        except ValidationError as e:
            raise _config_error(e) from e
        model = PARAMETERS.get(config.subcommand)
        if model is None:
            raise ConfigError(f"unknown subcommand {config.subcommand!r}", key="subcommand")
        try:
            typed = model.model_validate(config.params)
        except ValidationError as e:
            raise _config_error(e, prefix="params") from e
        return config.model_copy(update={"params": _dump(typed)})

    @classmethod
    def load(cls, path: Path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e.msg}", key=None) from e
        return cls.from_mapping(data)

    def typed_params(self) -> _Params:
        return PARAMETERS[self.subcommand].model_validate(self.params)

    @property
    def op(self) -> str:
        return self.params.get("op") or PARAMETERS[self.subcommand]().op

    @property
    def label(self) -> str:
        return self.name or f"{self.subcommand}-{self.op}"

    def to_json(self) -> str:
        return json.dumps(_dump(self), indent=2, sort_keys=True) + "\n"

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    def digest(self) -> str:
        """sha256 of the canonical JSON, output location excluded."""
        canonical = json.dumps(
            _dump(self) | {"output_dir": None}, sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canonical.encode()).hexdigest()


class RunRecord(BaseModel):
    """Outcome of one experiment."""

    name: str
    subcommand: str
    op: str
    config_hash: str
    version: str
    wall_time: float
    tolerance: float
    passed: bool
    payload: dict[str, Any]
    error: str | None = None
    rows: list[dict[str, Any]] = Field(default=[], exclude=True)

    def payload_json(self) -> str:
        return json.dumps(self.payload, sort_keys=True)


class Outcome(NamedTuple):
    payload: dict[str, Any]
    passed: bool
    rows: list[dict[str, Any]] = []


Handler = Callable[[Any, ExperimentConfig], Outcome]

_OPERATIONS: dict[tuple[str, str], Handler] = {}


def operation(subcommand: str, op: str) -> Callable[[Handler], Handler]:
    """Register a handler for ``adele-trace <subcommand>`` with ``params.op = op``."""

    def register(handler: Handler) -> Handler:
        if not hasattr(SERVICES[subcommand], op):
            raise RuntimeError(f"{SERVICES[subcommand].__name__} has no operation {op}")
        _OPERATIONS[(subcommand, op)] = handler
        return handler

    return register


def list_operations() -> dict[str, str]:
    """service.operation -> "subcommand op"."""
    out = {}
    for subcommand, op in sorted(_OPERATIONS):
        service = SERVICES[subcommand].__name__.rsplit(".", 1)[-1]
        out[f"{service}.{op}"] = f"{subcommand} {op}"
    return out


# local


@operation("local", "module")
def _module(params: LocalParams, config: ExperimentConfig) -> Outcome:
    place = Place.parse(params.place)
    if place.kind is PlaceKind.FINITE:
        x: Any = Fraction(params.x)
    elif place.kind is PlaceKind.COMPLEX:
        x = complex(params.x.replace(" ", ""))
    else:
        x = float(params.x)
    value = local_field.module(place, x)
    return Outcome({"place": str(place), "x": params.x, "module": str(value)}, True)


@operation("local", "padic_fourier")
def _padic_fourier(params: LocalParams, config: ExperimentConfig) -> Outcome:
    f = params.function.build()
    transform = local_field.padic_fourier(f)
    back = local_field.padic_fourier(transform)
    target = f.reflect()
    residual = max(
        abs(complex(a) - complex(b)) for a, b in zip(back.values, target.values, strict=True)
    )
    rows = [{"cell": k, "value": str(v)} for k, v in enumerate(transform.values)]
    payload = {
        "function": f.describe(),
        "grid": [transform.support_exponent, transform.level],
        "values": [str(v) for v in transform.values],
        "inversion_residual": residual,
    }
    return Outcome(payload, residual < config.tolerance, rows)


@operation("local", "local_zeta_integral")
def _local_zeta(params: LocalParams, config: ExperimentConfig) -> Outcome:
    report = local_field.local_zeta_integral(Place.parse(params.place), _complex(params.s))
    return Outcome(_dump(report), report.discrepancy < config.tolerance)


@operation("local", "homogeneous_delta_prime")
def _delta_prime(params: LocalParams, config: ExperimentConfig) -> Outcome:
    f = params.function.build()
    place = Place.finite(f.p)
    s = _complex(params.s)
    value = local_field.homogeneous_delta_prime(place, s, f)
    via_delta = (1 - complex(f.p) ** (-s)) * local_field.homogeneous_delta(place, s, f)
    residual = abs(value - via_delta)
    payload = {
        "function": f.describe(),
        "s": list(params.s),
        "value": _pair(value),
        "via_delta": _pair(via_delta),
        "residual": residual,
    }
    return Outcome(payload, residual < config.tolerance)


# test-fn


@operation("test-fn", "mellin")
def _mellin(params: ProfileParams, config: ExperimentConfig) -> Outcome:
    h = params.function.build()
    rho = _complex(params.rho)
    result = test_functions.mellin(h, rho)
    payload: dict[str, Any] = {
        "function": h.descriptor,
        "rho": list(params.rho),
        "value": _pair(result.value),
        "error": result.error,
    }
    if h.mellin_closed_form is None:
        return Outcome(payload, result.error < config.tolerance)
    closed = h.mellin_closed_form(rho)
    payload["closed_form"] = _pair(closed)
    payload["residual"] = abs(result.value - closed)
    return Outcome(payload, payload["residual"] < config.tolerance)


@operation("test-fn", "fourier_real")
def _fourier_real(params: ProfileParams, config: ExperimentConfig) -> Outcome:
    b = params.width

    def gaussian(y: float) -> float:
        return math.exp(-math.pi * b * y * y)

    transform = test_functions.fourier_real(
        gaussian, (-math.inf, math.inf), decay_scale=1 / math.sqrt(math.pi * b)
    )
    rows = []
    for xi in params.points:
        value, error = transform(xi)
        expected = math.exp(-math.pi * xi * xi / b) / math.sqrt(b)
        rows.append(
            {"xi": xi, "re": value.real, "im": value.imag, "error": error, "expected": expected}
        )
    worst = max(abs(complex(r["re"], r["im"]) - r["expected"]) for r in rows)
    estimate = max(r["error"] for r in rows)
    payload = {"width": b, "max_error": worst, "max_estimate": estimate, "points": rows}
    return Outcome(payload, worst < config.tolerance and estimate < config.tolerance, rows)


@operation("test-fn", "reference_f0_f1_f2")
def _reference(params: ProfileParams, config: ExperimentConfig) -> Outcome:
    rows = []
    for nu in params.nus:
        v0, v1, v2 = test_functions.reference_f0_f1_f2(nu)
        mirror = test_functions.reference_f0_f1_f2(1 / nu)[0]
        rows.append({"nu": nu, "f0": v0, "f1": v1, "f2": v2, "symmetry": abs(v0 - mirror)})
    worst = max(r["symmetry"] for r in rows)
    return Outcome({"values": rows, "symmetry_residual": worst}, worst < config.tolerance, rows)


# pv


def _reference_real(u: float) -> float:
    nu = abs(u)
    return math.sqrt(nu) * float(f0(nu)) ** 3


def _reference_complex(nu: float) -> float:
    return math.sqrt(nu) * float(f0(nu))


def _pv_row(result: principal_value.PVResult, **extra: Any) -> dict[str, Any]:
    exact = result.exact.symbolic() if result.exact is not None else None
    return extra | {"place": result.place, "value": result.value, "exact": exact}


@operation("pv", "pv_finite")
def _pv_finite(params: PVParams, config: ExperimentConfig) -> Outcome:
    rows, results = [], []
    for p in params.primes or [params.function.p]:
        result = principal_value.pv_finite(Place.finite(p), params.function.build(p))
        results.append(_dump(result))
        rows.append(_pv_row(result, p=p))
    passed = params.expected is None or all(
        abs(r["value"] - params.expected) < config.tolerance for r in rows
    )
    return Outcome({"results": results}, passed, rows)


@operation("pv", "pv_finite_char")
def _pv_finite_char(params: PVParams, config: ExperimentConfig) -> Outcome:
    rows, results, passed = [], [], True
    for spec in params.characters:
        chi = spec.build()
        result = principal_value.pv_finite_char(Place.finite(chi.p), chi)
        expected = LogLinearNumber.log(chi.p, -chi.conductor_exponent)
        exact = result.exact is not None and (result.exact - expected).is_zero
        passed = passed and exact
        results.append(_dump(result))
        rows.append(_pv_row(result, character=chi.describe(), expected=expected.symbolic()))
    return Outcome({"results": results}, passed, rows)


def _archimedean_pv(
    params: PVParams, place: Place
) -> tuple[principal_value.PVResult, float | None]:
    """pv at R or C on the configured function, with its known value if any."""
    real = place.kind is PlaceKind.REAL
    compute = principal_value.pv_real if real else principal_value.pv_complex
    if params.real is not None:
        return compute(params.real.build()), params.expected
    func = _reference_real if real else _reference_complex
    result = compute(func, value_at_one=1.0, window=REFERENCE_WINDOW)
    return result, principal_value.reference_constant(place)


def _pv_outcome(
    result: principal_value.PVResult, expected: float | None, config: ExperimentConfig
) -> Outcome:
    payload = _dump(result) | {"expected": expected}
    if expected is None:
        return Outcome(payload, result.error < config.tolerance)
    payload["residual"] = abs(result.value - expected)
    rows = [{"epsilon": eps, "value": v} for eps, v in result.epsilon_trace]
    return Outcome(payload, payload["residual"] < config.tolerance, rows)


@operation("pv", "pv_real")
def _pv_real(params: PVParams, config: ExperimentConfig) -> Outcome:
    return _pv_outcome(*_archimedean_pv(params, Place.real()), config)


@operation("pv", "pv_complex")
def _pv_complex(params: PVParams, config: ExperimentConfig) -> Outcome:
    return _pv_outcome(*_archimedean_pv(params, Place.complex()), config)


@operation("pv", "pv_weil")
def _pv_weil(params: PVParams, config: ExperimentConfig) -> Outcome:
    place = Place.parse(params.place)
    if not place.is_archimedean:
        raise ConfigError("pv_weil runs at R or C", key="params.place")
    base, _ = _archimedean_pv(params, place)
    if params.real is not None:
        weil = principal_value.pv_weil(place, params.real.build())
    else:
        func = _reference_real if place.kind is PlaceKind.REAL else _reference_complex
        weil = principal_value.pv_weil(place, func, value_at_one=1.0, window=REFERENCE_WINDOW)
    difference = abs(weil.value - base.value)
    payload = {"weil": _dump(weil), "principal_value": _dump(base), "difference": difference}
    return Outcome(payload, difference < config.tolerance)


@operation("pv", "pv_character_shift")
def _pv_shift(params: PVParams, config: ExperimentConfig) -> Outcome:
    f = params.function.build()
    base = principal_value.pv_finite(Place.finite(f.p), f)
    shift = Fraction(params.shift)
    shifted = principal_value.pv_character_shift(base, shift)
    log_module = -local_field.valuation(shift, f.p) * math.log(f.p)
    expected = base.value + log_module * base.value_at_one
    residual = abs(shifted.value - expected)
    payload = {"base": _dump(base), "shifted": _dump(shifted), "residual": residual}
    return Outcome(payload, residual < config.tolerance)


@operation("pv", "unit_shell_regularization")
def _unit_shell(params: PVParams, config: ExperimentConfig) -> Outcome:
    reports = [
        principal_value.unit_shell_regularization(p) for p in params.primes or [params.function.p]
    ]
    rows = [
        {
            "p": r.p,
            "character_piece": r.character_piece.symbolic(),
            "integer_piece": r.integer_piece.symbolic(),
            "total": r.total.symbolic(),
        }
        for r in reports
    ]
    passed = all(r.total.is_zero for r in reports)
    return Outcome({"reports": [_dump(r) for r in reports]}, passed, rows)


@operation("pv", "log_distribution_pairing")
def _log_pairing(params: PVParams, config: ExperimentConfig) -> Outcome:
    reports = [
        principal_value.log_distribution_pairing(place)
        for place in (Place.real(), Place.complex())
    ]
    passed = all(abs(r.value - r.closed_form) < config.tolerance for r in reports)
    return Outcome({"reports": [_dump(r) for r in reports]}, passed, [_dump(r) for r in reports])


# zeros


@operation("zeros", "zeta")
def _zeta(params: ZerosParams, config: ExperimentConfig) -> Outcome:
    s = _complex(params.s)
    value, bound = zeta_zeros.zeta_with_bound(s)
    reference = zeta_zeros.zeta_reference(s)
    residual = abs(value - reference)
    payload = {
        "s": list(params.s),
        "value": _pair(value),
        "reference": _pair(reference),
        "bound": bound,
        "residual": residual,
    }
    return Outcome(payload, residual < config.tolerance * max(1.0, abs(reference)))


@operation("zeros", "find_zeros")
def _find_zeros(params: ZerosParams, config: ExperimentConfig) -> Outcome:
    zeros = zeta_zeros.find_zeros(params.e_max)
    rows = [
        {"n": n, "gamma": g, "bracket": b}
        for n, (g, b) in enumerate(zip(zeros.ordinates, zeros.brackets, strict=True), start=1)
    ]
    payload = {
        "e_max": zeros.e_max,
        "count": len(zeros),
        "method": zeros.method,
        "tolerance": zeros.tolerance,
        "first": zeros.ordinates[:10],
    }
    passed = params.expected_count is None or len(zeros) == params.expected_count
    return Outcome(payload, passed, rows)


@operation("zeros", "counting_functions")
def _counting(params: ZerosParams, config: ExperimentConfig) -> Outcome:
    zeros = zeta_zeros.find_zeros(max(params.energies) + 1.0)
    reports = [zeta_zeros.counting_functions(e, zeros) for e in params.energies]
    rows = [_dump(r) for r in reports]
    return Outcome({"reports": rows}, True, rows)


# explicit-formula


def _cutoff(h: RadialTestFn, params: FormulaParams, config: ExperimentConfig) -> int:
    if params.prime_cutoff is not None:
        return params.prime_cutoff
    return explicit_formula.required_prime_cutoff(h, config.tolerance / 10)


@operation("explicit-formula", "spectral_side")
def _spectral(params: FormulaParams, config: ExperimentConfig) -> Outcome:
    zeros = zeta_zeros.find_zeros(params.e_max)
    sides = [explicit_formula.spectral_side(spec.build(), zeros) for spec in params.functions]
    rows = [t.model_dump() for side in sides for t in side.terms]
    return Outcome({"sides": [_dump(s) for s in sides]}, True, rows)


@operation("explicit-formula", "geometric_side")
def _geometric(params: FormulaParams, config: ExperimentConfig) -> Outcome:
    sides = []
    for spec in params.functions:
        h = spec.build()
        sides.append(explicit_formula.geometric_side(h, _cutoff(h, params, config)))
    rows = [t.model_dump() for side in sides for t in side.terms]
    return Outcome({"sides": [_dump(s) for s in sides]}, True, rows)


@operation("explicit-formula", "compare")
def _compare(params: FormulaParams, config: ExperimentConfig) -> Outcome:
    zeros = zeta_zeros.find_zeros(params.e_max)
    reports, rows = [], []
    for spec in params.functions:
        h = spec.build()
        report = explicit_formula.compare(
            h, params.e_max, _cutoff(h, params, config), config.tolerance, zeros
        )
        reports.append(report)
        rows.extend(
            row | {"width": spec.width} for row in explicit_formula.contribution_rows(report)
        )
    payload = {
        "reports": [_dump(r) for r in reports],
        "discrepancies": [r.discrepancy for r in reports],
    }
    return Outcome(payload, all(r.passed for r in reports), rows)


@operation("explicit-formula", "dilation_instance")
def _dilation(params: FormulaParams, config: ExperimentConfig) -> Outcome:
    zeros = zeta_zeros.find_zeros(params.e_max)
    reports = []
    for spec in params.functions:
        h = spec.build()
        reports.append(
            explicit_formula.dilation_instance(
                h,
                params.lam,
                params.e_max,
                _cutoff(h.dilate(params.lam), params, config),
                config.tolerance,
                zeros,
            )
        )
    passed = all(
        r.base.passed and r.dilated.passed and r.scaling_residual < config.tolerance
        for r in reports
    )
    return Outcome({"reports": [_dump(r) for r in reports]}, passed)


# trace


def _trace_row(report: cutoff_trace.TraceReport) -> dict[str, Any]:
    row = {
        "lam": report.lam,
        "n": report.n,
        "computed": report.computed,
        "predicted": report.predicted,
        "residual": report.residual,
    }
    if report.residual_exact is not None:
        row["residual_exact"] = report.residual_exact.symbolic()
    return row


def _trace_exact(report: cutoff_trace.TraceReport, tolerance: float) -> bool:
    if report.n is not None and report.n0 is not None and report.n < report.n0:
        return True
    if report.residual_exact is not None:
        return report.residual_exact.is_zero
    return abs(report.residual) < tolerance


@operation("trace", "symbol_g")
def _symbol(params: TraceParams, config: ExperimentConfig) -> Outcome:
    if params.target == "finite":
        g = cutoff_trace.symbol_g(params.function.build())
        payload = {
            "function": g.describe(),
            "grid": [g.support_exponent, g.level],
            "values": [str(v) for v in g.values],
        }
        rows = [{"cell": k, "value": str(v)} for k, v in enumerate(g.values)]
        return Outcome(payload, True, rows)
    symbol = cutoff_trace.symbol_g(params.real.build())
    rows = [{"lambda": x, "g": float(symbol(x))} for x in params.points]
    payload = {"intervals": [list(i) for i in symbol.intervals], "samples": rows}
    return Outcome(payload, True, rows)


@operation("trace", "trace_padic")
def _trace_padic(params: TraceParams, config: ExperimentConfig) -> Outcome:
    h = params.function.build()
    place = Place.finite(h.p)
    reports = [cutoff_trace.trace_padic(place, h, n) for n in params.n]
    passed = all(_trace_exact(r, config.tolerance) for r in reports)
    payload = {"reports": [_dump(r) for r in reports]}
    return Outcome(payload, passed, [_trace_row(r) for r in reports])


@operation("trace", "trace_padic_character")
def _trace_character(params: TraceParams, config: ExperimentConfig) -> Outcome:
    chi = params.character.build()
    place = Place.finite(chi.p)
    reports = [cutoff_trace.trace_padic_character(place, chi, n) for n in params.n]
    passed = all(_trace_exact(r, config.tolerance) for r in reports)
    payload = {"reports": [_dump(r) for r in reports]}
    return Outcome(payload, passed, [_trace_row(r) for r in reports])


@operation("trace", "trace_real")
def _trace_real(params: TraceParams, config: ExperimentConfig) -> Outcome:
    h = params.real.build()
    reports = cutoff_trace.trace_real_ladder(h, params.lams)
    residuals = [abs(r.residual) for r in reports]
    passed = residuals[-1] < config.tolerance and residuals[-1] <= residuals[0]
    payload = {"function": h.descriptor, "reports": [_dump(r) for r in reports]}
    return Outcome(payload, passed, [_trace_row(r) for r in reports])


@operation("trace", "trace_slocal")
def _trace_slocal(params: TraceParams, config: ExperimentConfig) -> Outcome:
    finite = {spec.p: spec.build() for spec in params.finite}
    if len(finite) < len(params.finite):
        raise ConfigError("one finite factor per prime", "finite")
    setup = cutoff_trace.SLocalConfig(params.real.build(), finite)
    report = cutoff_trace.trace_slocal(
        setup, params.lam, config.tolerance, params.fundamental_domain
    )
    finite_places = [r for v, r in report.place_residuals.items() if v != "R"]
    passed = (
        abs(report.residual) < config.tolerance
        and (report.mass_identity or 0.0) < 1e-8
        and all(abs(r) < config.tolerance for r in finite_places)
    )
    rows = [t.model_dump() for t in report.breakdown]
    return Outcome(_dump(report), passed, rows)


# prolate


@operation("prolate", "solve_hlambda")
def _solve_hlambda(params: ProlateParams, config: ExperimentConfig) -> Outcome:
    spectra = [prolate.solve_hlambda(lam, params.dim) for lam in params.lams]
    checks, rows = [], []
    for s in spectra:
        count = s.count_above(0.5)
        target = round(4 * s.lam * s.lam)
        ok = (
            abs(count - target) <= 2
            and (s.lam < 1 or s.eigenvalues[0] > 0.99)
            and s.commutation_residual < max(config.tolerance, 1e-6)
        )
        checks.append({"lam": s.lam, "count_above_half": count, "target": target, "ok": ok})
        rows.extend(row | {"Lambda": s.lam} for row in s.rows())
    payload = {"spectra": [_dump(s) for s in spectra], "checks": checks}
    return Outcome(payload, all(c["ok"] for c in checks), rows)


@operation("prolate", "plunge_width")
def _plunge(params: ProlateParams, config: ExperimentConfig) -> Outcome:
    report = prolate.plunge_width([prolate.solve_hlambda(lam, params.dim) for lam in params.lams])
    rows = [{"Lambda": lam, "width": w} for lam, w in zip(report.lams, report.widths, strict=True)]
    return Outcome(_dump(report), report.ratios_ok, rows)


@operation("prolate", "gap_probability_E0")
def _gap(params: ProlateParams, config: ExperimentConfig) -> Outcome:
    report = prolate.gap_probability(params.s)
    e0 = prolate.gap_probability_E0(params.s)
    oracle = prolate.nystrom_gap_probability(math.pi, params.s / 2)
    payload = _dump(report) | {"E0": e0, "nystrom": oracle, "difference": abs(e0 - oracle)}
    return Outcome(payload, abs(e0 - oracle) < config.tolerance)


@operation("prolate", "nystrom_gap_probability")
def _nystrom(params: ProlateParams, config: ExperimentConfig) -> Outcome:
    value = prolate.nystrom_gap_probability(params.a, params.b)
    gap = prolate.rescaling_gap((params.a, params.b), (params.a / 2, 2 * params.b))
    payload = {"a": params.a, "b": params.b, "determinant": value, "rescaling_gap": gap}
    return Outcome(payload, gap < config.tolerance)


@operation("prolate", "angle_operator_check")
def _angle(params: ProlateParams, config: ExperimentConfig) -> Outcome:
    v1 = [_complex(z) for z in params.v1]
    v2 = [_complex(z) for z in params.v2]
    report = prolate.angle_operator_check(v1, v2)
    return Outcome(_dump(report), report.difference < config.tolerance)


# stats


@operation("stats", "semiclassical_area")
def _area(params: StatsParams, config: ExperimentConfig) -> Outcome:
    report = spectral_stats.semiclassical_area(params.e, params.lam)
    return Outcome(_dump(report), abs(report.closed_form - report.numerical) < config.tolerance)


@operation("stats", "monte_carlo_area")
def _monte_carlo(params: StatsParams, config: ExperimentConfig) -> Outcome:
    estimate = spectral_stats.monte_carlo_area(params.e, params.lam, params.samples, config.seed)
    closed = spectral_stats.semiclassical_closed_form(params.e, params.lam)
    relative = abs(estimate - closed) / abs(closed)
    payload = {"estimate": estimate, "closed_form": closed, "relative_error": relative}
    return Outcome(payload, relative < max(config.tolerance, 1e-3))


@operation("stats", "unfold")
def _unfold(params: StatsParams, config: ExperimentConfig) -> Outcome:
    unfolded = spectral_stats.unfold(zeta_zeros.find_zeros(params.e_max))
    rows = [{"gamma": g, "x": x} for g, x in zip(unfolded.ordinates, unfolded.x, strict=True)]
    payload = {"count": len(unfolded), "mean_spacing": unfolded.mean_spacing, "x": unfolded.x[:10]}
    return Outcome(payload, True, rows)


@operation("stats", "pair_correlation")
def _pair_correlation(params: StatsParams, config: ExperimentConfig) -> Outcome:
    unfolded = spectral_stats.unfold(zeta_zeros.find_zeros(params.e_max))
    report = spectral_stats.pair_correlation(unfolded, params.u_max, params.bins)
    rows = [
        {"u_low": a, "u_high": b, "density": d, "reference": r}
        for a, b, d, r in zip(
            report.edges, report.edges[1:], report.density, report.reference, strict=False
        )
    ]
    passed = report.prefers_gue and report.l2_deviation < params.l2_limit
    return Outcome(_dump(report), passed, rows)


@operation("stats", "shift_model_limit")
def _shift_model(params: StatsParams, config: ExperimentConfig) -> Outcome:
    points = [_complex(z) for z in params.points]
    f = {k: _complex(c) for k, c in params.coefficients.items()}
    report = spectral_stats.shift_model_limit(points, f, params.ladder)
    rows = [
        {"N": n, "re": re, "im": im, "deviation": d}
        for n, re, im, d in zip(
            report.ladder, report.traces_real, report.traces_imag, report.deviations, strict=True
        )
    ]
    passed = report.converging and report.deviations[-1] < config.tolerance
    return Outcome(_dump(report), passed, rows)


# adelic


def _adelic_description(params: AdelicParams) -> dict[str, Any]:
    return {
        "amplitudes": params.amplitudes,
        "widths": params.widths,
        "finite": sorted(params.finite),
    }


@operation("adelic", "e_map")
def _e_map(params: AdelicParams, config: ExperimentConfig) -> Outcome:
    f = params.build()
    reports = [adelic_summation.e_map_report(f, lam) for lam in params.lams]
    passed = all(r.tail_bound < config.tolerance for r in reports)
    if params.expected is not None:
        passed = passed and all(
            abs(r.value - e) < config.tolerance
            for r, e in zip(reports, params.expected, strict=True)
        )
    rows = [_dump(r) for r in reports]
    return Outcome({"function": _adelic_description(params), "values": rows}, passed, rows)


@operation("adelic", "functional_equation_check")
def _functional_equation(params: AdelicParams, config: ExperimentConfig) -> Outcome:
    report = adelic_summation.functional_equation_check(
        params.build(), params.grid, params.require_s0
    )
    rows = [
        {"lambda": lam, "difference": d, "boundary": b, "residual": r}
        for lam, d, b, r in zip(
            report.grid, report.differences, report.boundary_terms, report.residuals, strict=True
        )
    ]
    return Outcome(_dump(report), report.max_residual < config.tolerance, rows)


@operation("adelic", "mellin_vs_L")
def _mellin_vs_l(params: AdelicParams, config: ExperimentConfig) -> Outcome:
    f = params.build()
    report = adelic_summation.mellin_vs_L(f, [_complex(s) for s in params.s_points])
    payload = _dump(report)
    passed = report.max_deviation < config.tolerance
    if params.zeros:
        height = 30.0
        zeros = zeta_zeros.find_zeros(height)
        while len(zeros) < params.zeros:
            height *= 2
            zeros = zeta_zeros.find_zeros(height)
        at_zeros = [
            abs(adelic_summation.mellin_of_e(f, complex(0.5, gamma)))
            for gamma in zeros.ordinates[: params.zeros]
        ]
        payload["at_zeros"] = at_zeros
        passed = passed and max(at_zeros) < params.zero_tolerance
    rows = [
        {"s_re": s[0], "s_im": s[1], "ratio_re": r[0], "ratio_im": r[1], "deviation": d}
        for s, r, d in zip(report.s_points, report.ratios, report.deviations, strict=True)
    ]
    return Outcome(payload, passed, rows)


@operation("adelic", "decay_report")
def _decay(params: AdelicParams, config: ExperimentConfig) -> Outcome:
    report = adelic_summation.decay_report(params.build())
    return Outcome(_dump(report), report.min_slope >= 1.0)


# Running


def run(config: ExperimentConfig) -> RunRecord:
    """Dispatch one experiment; module errors propagate with the experiment named."""
    params = config.typed_params()
    handler = _OPERATIONS.get((config.subcommand, params.op))
    if handler is None:
        raise ConfigError(f"no operation {params.op!r} under {config.subcommand}", "params.op")
    logger.info(f"Running {config.label} ({config.subcommand} {params.op})")
    start = time.perf_counter()
    try:
        outcome = handler(params, config)
    except AdeleTraceError as e:
        e.add_note(f"while running {config.label} ({config.subcommand} {params.op})")
        raise
    wall = time.perf_counter() - start
    record = RunRecord(
        name=config.label,
        subcommand=config.subcommand,
        op=params.op,
        config_hash=config.digest(),
        version=__version__,
        wall_time=wall,
        tolerance=config.tolerance,
        passed=outcome.passed,
        payload=outcome.payload,
        rows=list(outcome.rows),
    )
    logger.info(f"{record.name}: {'pass' if record.passed else 'FAIL'} in {wall:.2f}s")
    return record


def _failed(config: ExperimentConfig, error: AdeleTraceError) -> RunRecord:
    logger.error(f"{config.label} raised {type(error).__name__}: {error}")
    return RunRecord(
        name=config.label,
        subcommand=config.subcommand,
        op=config.op,
        config_hash=config.digest(),
        version=__version__,
        wall_time=0.0,
        tolerance=config.tolerance,
        passed=False,
        payload={},
        error=f"{type(error).__name__}: {error}",
    )


def format_number(value: Any) -> Any:
    """Floats with 17 significant digits for CSV cells."""
    if isinstance(value, float):
        return f"{value:.17g}"
    return value


def write_record(record: RunRecord, output_dir: Path | None = None) -> list[Path]:
    """<name>.json with the record and <name>.csv with its rows, if any."""
    directory = Path(output_dir or settings.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    path = directory / f"{record.name}.json"
    path.write_text(json.dumps(_dump(record), indent=2, sort_keys=True) + "\n")
    written.append(path)
    if record.rows:
        path = directory / f"{record.name}.csv"
        fields = list(dict.fromkeys(key for row in record.rows for key in row))
        with path.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fields)
            writer.writeheader()
            for row in record.rows:
                writer.writerow({k: format_number(v) for k, v in row.items()})
        written.append(path)
    logger.debug(f"wrote {', '.join(str(p) for p in written)}")
    return written


# Suites


def _cfg(subcommand: str, name: str, tolerance: float, **params: Any) -> ExperimentConfig:
    return ExperimentConfig.from_mapping(
        {"subcommand": subcommand, "name": name, "tolerance": tolerance, "params": params}
    )


def _suite_pv_constants() -> list[ExperimentConfig]:
    characters = [
        {"p": 3, "conductor": 1, "index": 1},
        {"p": 2, "conductor": 2, "index": 0, "sign": 1},
        {"p": 5, "conductor": 1, "index": 1},
        {"p": 5, "conductor": 1, "index": 2},
        {"p": 7, "conductor": 1, "index": 1},
    ]
    return [
        _cfg("pv", "pv-real-reference", 1e-6, op="pv_real"),
        _cfg("pv", "pv-complex-reference", 1e-5, op="pv_complex"),
        _cfg("pv", "pv-finite-units", 1e-12, op="pv_finite", primes=[2, 3, 5, 7], expected=0.0),
        _cfg("pv", "pv-finite-characters", 1e-12, op="pv_finite_char", characters=characters),
    ]


def _suite_explicit_formula() -> list[ExperimentConfig]:
    functions = [{"family": "gaussian", "width": w} for w in (0.7, 1.0, 1.3)]
    return [
        _cfg("explicit-formula", "weil-gaussians", 1e-5, op="compare", functions=functions),
        _cfg("zeros", "zero-counting", 1e-6, op="counting_functions"),
    ]


def _suite_trace_ladder() -> list[ExperimentConfig]:
    shell = {"p": 2, "shells": {-1: "1"}}
    mixes = [
        {"p": 2, "shells": {-1: "1", 1: "3/2"}},
        {"p": 3, "shells": {-1: "2", 0: "1/3", 1: "-1"}},
        {"p": 3, "shells": {0: "-2/5", 2: "7"}},
    ]
    return [
        _cfg("trace", "trace-padic-units", 1e-12, op="trace_padic", n=[0, 1, 2, 3, 4]),
        _cfg("trace", "trace-padic-shell", 1e-12, op="trace_padic", function=shell, n=[1, 2, 4]),
        *(
            _cfg(
                "trace", f"trace-padic-mix-{i}", 1e-12, op="trace_padic", function=mix, n=[1, 2, 3]
            )
            for i, mix in enumerate(mixes, start=1)
        ),
        _cfg("trace", "trace-padic-character", 1e-12, op="trace_padic_character", n=[2, 3]),
        _cfg("trace", "trace-real-ladder", 1e-4, op="trace_real"),
        _cfg(
            "trace",
            "trace-slocal",
            1e-5,
            op="trace_slocal",
            finite=[{"p": 2, "shells": {0: "1"}}],
            real={"family": "bump", "center": 0.0, "support": 0.3},
        ),
        _cfg(
            "trace",
            "trace-slocal-two-primes",
            1e-4,
            op="trace_slocal",
            lam=8.0,
            finite=[{"p": 2, "shells": {0: "1"}}, {"p": 3, "shells": {0: "1"}}],
            real={"family": "bump", "center": 0.0, "support": 0.3},
        ),
    ]


def _suite_prolate_plunge() -> list[ExperimentConfig]:
    return [
        _cfg("prolate", "prolate-counts", 1e-6, op="solve_hlambda"),
        _cfg("prolate", "prolate-plunge", 1e-6, op="plunge_width", lams=[1.0, 1.5, 2.0, 3.0, 4.0]),
        _cfg("prolate", "gap-probability", 1e-8, op="gap_probability_E0", s=1.0),
    ]


def _suite_stats() -> list[ExperimentConfig]:
    return [
        _cfg("stats", "semiclassical-area", 1e-8, op="semiclassical_area"),
        _cfg("stats", "monte-carlo-area", 1e-3, op="monte_carlo_area"),
        _cfg("stats", "pair-correlation", 1e-6, op="pair_correlation"),
        _cfg("stats", "shift-model", 1e-6, op="shift_model_limit"),
    ]


def _suite_adelic() -> list[ExperimentConfig]:
    return [
        _cfg("adelic", "e-map", 1e-12, op="e_map", amplitudes=[1.0], widths=[1.0], lams=[1.0]),
        _cfg("adelic", "functional-equation", 1e-10, op="functional_equation_check"),
        _cfg("adelic", "mellin-vs-L", 1e-6, op="mellin_vs_L"),
        _cfg("adelic", "decay", 1e-6, op="decay_report"),
    ]


SUITES: dict[str, Callable[[], list[ExperimentConfig]]] = {
    "pv-constants": _suite_pv_constants,
    "explicit-formula": _suite_explicit_formula,
    "trace-ladder": _suite_trace_ladder,
    "prolate-plunge": _suite_prolate_plunge,
    "stats": _suite_stats,
    "adelic": _suite_adelic,
}


def suite(name: str, max_workers: int | None = None) -> list[RunRecord]:
    """Run every member of a named suite; member errors become failed records."""
    members = SUITES.get(name)
    if members is None:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}", "suite")
    configs = members()
    workers = settings.max_workers if max_workers is None else max_workers

    def attempt(config: ExperimentConfig) -> RunRecord:
        try:
            return run(config)
        except AdeleTraceError as e:
            return _failed(config, e)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(attempt, configs))
    else:
        records = [attempt(c) for c in configs]
    failures = [r.name for r in records if not r.passed]
    logger.info(f"suite {name}: {len(records) - len(failures)}/{len(records)} passed")
    return records


def summary_rows(records: list[RunRecord]) -> list[dict[str, Any]]:
    return [
        {
            "name": r.name,
            "op": f"{r.subcommand} {r.op}",
            "passed": r.passed,
            "wall_time": round(r.wall_time, 3),
            "error": r.error or "",
        }
        for r in records
    ]
