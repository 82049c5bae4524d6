"""Domain exceptions for the ladder-walk lab.

Each exception also subclasses the closest builtin so callers that only know
``ValueError`` or ``RuntimeError`` keep working.
"""

from __future__ import annotations


class LadderWalkError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LadderWalkError, ValueError):
    """An argument lies outside the domain of a formula or operation."""


class MarginError(DomainError):
    """A window is too narrow to evaluate an edge pattern at its border."""


class WindowExitError(LadderWalkError, RuntimeError):
    """A walk (or exact kernel) left the sampled x-range of its environment."""


class HorizonError(LadderWalkError, RuntimeError):
    """A sampler exceeded its column or step cap."""


class BudgetError(LadderWalkError, RuntimeError):
    """A configured computational budget was exhausted."""


class RejectionBudgetError(BudgetError):
    """Rejection sampling did not accept within the configured attempts."""


class PrecisionBudgetError(BudgetError):
    """High-precision evaluation requested above the configured cap."""


class InvalidCouplingParameters(DomainError):
    """The obstacle transition vector has an entry outside [0, 1]."""


class InconsistentStateError(LadderWalkError, AssertionError):
    """A coupled state matches no transition case."""


class DegenerateSampleError(DomainError):
    """A sample carries no information for the requested estimator."""


class ConfigError(LadderWalkError, ValueError):
    """An experiment configuration file is missing, malformed or inconsistent."""


class InvariantViolation(LadderWalkError, RuntimeError):
    """A checked invariant failed during an experiment run."""


__all__ = [
    "LadderWalkError",
    "DomainError",
    "MarginError",
    "WindowExitError",
    "HorizonError",
    "BudgetError",
    "RejectionBudgetError",
    "PrecisionBudgetError",
    "InvalidCouplingParameters",
    "InconsistentStateError",
    "DegenerateSampleError",
    "ConfigError",
    "InvariantViolation",
]
