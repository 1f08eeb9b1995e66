"""
Typed errors for the decomposition toolkit.

Every error carries the process exit code the CLI reports for it.
Solver non-convergence is not an error: it is flagged on the outcome.
"""

from typing import Optional


class LscError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1


class InvalidInputError(LscError):
    """Input matrix, parameter or file is malformed or out of range."""

    exit_code = 2


class DegenerateInputError(InvalidInputError):
    """Regression matrix is numerically rank deficient."""


class InfeasibleError(InvalidInputError):
    """Affine feasible set of an oracle program is empty."""


class UnsupportedRegimeError(InvalidInputError):
    """Formula is undefined for the requested parameters (e.g. r_b < 2)."""


class DegenerateResultError(LscError):
    """Pipeline produced nothing usable (e.g. every column flagged)."""

    exit_code = 3


class ResampleNeededError(DegenerateResultError):
    """Column sketch contained no inliers; retry with another seed."""

    def __init__(self, message: str, seed: Optional[int] = None):
        super().__init__(message)
        self.seed = seed
