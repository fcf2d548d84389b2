"""Exception hierarchy shared by all fracpinn modules."""

from __future__ import annotations


class FracPinnError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FracPinnError, ValueError):
    """Argument outside the mathematical domain of a function."""


class GridMismatchError(FracPinnError, ValueError):
    """Two objects were built on incompatible time grids."""


class SingularityError(FracPinnError, ArithmeticError):
    """The living fraction 1 - d dropped below the singularity guard."""


class NonConvergenceError(FracPinnError, ArithmeticError):
    """An iterative solve did not reach its tolerance."""


class ConsistencyError(FracPinnError, ValueError):
    """Input data violates a structural invariant."""


class TrainingError(FracPinnError, RuntimeError):
    """Training diverged or produced non-finite values."""

    def __init__(self, message: str, iteration: int | None = None, term: str | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.term = term
