"""
Exception hierarchy shared by every effect-ci module.
"""

from typing import Optional


class EffectCIError(Exception):
    """Base class for all errors raised by effect-ci."""


class InvalidModelError(EffectCIError):
    """A WeightedDag, CovMatrix or Ordering violates its invariants."""


class DegenerateDataError(EffectCIError):
    """
    Data cannot produce a positive definite covariance, or could not be parsed.

    Args:
        message (str): Human readable diagnostic
        row (int, optional): 1-based row of the offending cell
        column (int, optional): 1-based column of the offending cell
    """

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConditioningError(EffectCIError):
    """The conditioning block Σ_{S,S} is numerically singular."""


class SolverError(EffectCIError):
    """
    The constrained optimizer did not converge after all restarts.

    The best objective found is kept so callers can fall back to it.
    """

    def __init__(self, message: str, best_value: float, best_loglik: float):
        super().__init__(message)
        self.best_value = best_value
        self.best_loglik = best_loglik


class ScanOverflowError(EffectCIError):
    """A confidence-region scan ran past its step budget."""

    def __init__(self, direction: str, start: float, max_steps: int):
        super().__init__(
            f"scan to the {direction} of start value {start:.6g} exceeded {max_steps} steps; "
            f"the region appears unbounded in that direction"
        )
        self.direction = direction
        self.start = start
        self.max_steps = max_steps


class ExperimentError(EffectCIError):
    """Too many replicates of a simulation failed."""
