"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command line runner:
2 for a failed invariant check, 3 for a numerical failure and 4 for
bad configuration or input.
"""

from __future__ import annotations

from typing import Any


class AdiabaticLabError(Exception):
    """Base class. ``details`` is a JSON-friendly payload."""

    exit_code = 3
    kind = "error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.kind, "message": self.message, "details": _jsonable(self.details)}


class InvalidInputError(AdiabaticLabError, ValueError):
    exit_code = 4
    kind = "invalid-input"


class ConfigError(InvalidInputError):
    kind = "config-error"


class NumericalError(AdiabaticLabError, ArithmeticError):
    exit_code = 3
    kind = "numerical-failure"


class NearSpectrumError(NumericalError):
    """A shifted system ``z - A`` is singular to working tolerance."""

    kind = "near-spectrum"

    def __init__(self, message: str, z: complex, condition: float) -> None:
        super().__init__(message, z=z, condition=condition)
        self.z = z
        self.condition = condition


class EigenFailure(NumericalError):
    kind = "eigen-failure"


class IntegrationFailure(NumericalError):
    """Adaptive integration gave up; ``tau`` is the last time reached."""

    kind = "integration-failure"

    def __init__(self, message: str, tau: float, **details: Any) -> None:
        super().__init__(message, tau=tau, **details)
        self.tau = tau


class ContourError(NumericalError):
    kind = "eigenvalue-on-contour"


class NonUniformGapError(NumericalError):
    """Spectral gap collapsed; ``crossings`` holds the estimated times."""

    kind = "non-uniform-gap"

    def __init__(self, message: str, crossings: list[float], min_gap: float) -> None:
        super().__init__(message, crossings=crossings, min_gap=min_gap)
        self.crossings = crossings
        self.min_gap = min_gap


class CommutationViolation(NumericalError):
    kind = "commutation-violation"


class NeumannConditionError(NumericalError):
    kind = "neumann-condition"


class GridTooCoarseError(NumericalError):
    kind = "grid-too-coarse"


class InvalidRayError(NumericalError):
    kind = "invalid-ray"


class InsufficientDataError(NumericalError):
    kind = "insufficient-data"


class InvariantFailure(AdiabaticLabError):
    exit_code = 2
    kind = "invariant-failure"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj
