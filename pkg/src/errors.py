"""Exception hierarchy shared by every adele-trace service."""

import sys


class AdeleTraceError(ValueError):
    """Base class for all library errors."""

    if sys.version_info < (3, 11):  # pragma: no cover - Python 3.10 compatibility

        def add_note(self, note: str) -> None:
            if not isinstance(note, str):
                raise TypeError("note must be a str")
            notes = self.__dict__.setdefault("__notes__", [])
            notes.append(note)


class DomainError(AdeleTraceError):
    """Input lies outside the domain of an operation."""


class PrecisionError(AdeleTraceError):
    """p-adic precision exhausted or dropped below the configured floor."""


class QuadratureError(AdeleTraceError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


class PrincipalValueError(AdeleTraceError):
    """Preconditions of a principal-value regularization are violated."""


class ZeroCountMismatch(AdeleTraceError):
    """Sign-change count disagrees with the argument-principle count."""

    def __init__(self, message: str, found: int, expected: int):
        super().__init__(message)
        self.found = found
        self.expected = expected


class TruncationError(AdeleTraceError):
    """A certified tail bound exceeds the requested tolerance."""

    def __init__(self, message: str, required: float | None = None):
        super().__init__(message)
        self.required = required


class ConvergenceError(AdeleTraceError):
    """A refinement ladder (dimension doubling, extrapolation) did not settle."""


class ConfigError(AdeleTraceError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
