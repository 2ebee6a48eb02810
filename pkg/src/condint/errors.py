"""Exception hierarchy shared across the package."""

from __future__ import annotations

from typing import Any


class CondIntError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(CondIntError, ValueError):
    """Model parameters outside the admissible parameter space."""


class ConfigurationError(CondIntError, ValueError):
    """Inconsistent truncation, split, or experiment configuration."""

    def __init__(self, message: str, lineno: int | None = None, key: str | None = None):
        self.lineno = lineno
        self.key = key
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class PreconditionError(CondIntError, ValueError):
    """An operation was called outside its documented domain."""


class DegenerateSampleError(CondIntError, ValueError):
    """The sample carries no information about the parameter."""


class EstimationFailedError(CondIntError, RuntimeError):
    """The optimizer did not converge; ``best_point`` holds the best vertex found."""

    def __init__(self, message: str, best_point: Any = None, best_value: float | None = None):
        super().__init__(message)
        self.best_point = best_point
        self.best_value = best_value


class SingularInformationError(CondIntError, RuntimeError):
    """The sandwich covariance could not be formed."""


class PlanInfeasibleError(CondIntError, ValueError):
    """No sample split satisfies the ordering constraints for this length."""


class ContractError(CondIntError, ValueError):
    """Arguments violate a cross-argument contract (dimensions, plan ordering)."""


class InsufficientDrawsError(CondIntError, ValueError):
    pass


class InsufficientResolutionError(CondIntError, ValueError):
    pass


class DomainError(CondIntError, ValueError):
    pass


class EmptySampleError(CondIntError, ValueError):
    pass


class FailureCapExceededError(CondIntError, RuntimeError):
    """Too many replications failed to estimate; the run was aborted."""

    def __init__(self, message: str, failures: int, reps: int):
        super().__init__(message)
        self.failures = failures
        self.reps = reps
