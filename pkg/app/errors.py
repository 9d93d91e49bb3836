"""Exception hierarchy for the maximum-entropy context extender."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from app.constraints import ConsistencyReport


class MaxEntError(Exception):
    """Base class for every error raised by the package."""


class ArgumentError(MaxEntError, ValueError):
    """An argument is outside the domain of the operation."""


class TableError(ArgumentError):
    """A probability table violates its invariants."""


class ZeroMassError(ArgumentError):
    """A table carries no probability mass."""


class UnknownVariableError(ArgumentError):
    """A variable label is not part of the table or system."""


class ConditioningOnNullEventError(MaxEntError):
    """The conditioning event has zero probability."""


class ShapeError(MaxEntError, ValueError):
    """Constraint variable sets do not fit the requested system."""


class PairCoverageError(ShapeError):
    """A pairwise constraint set does not cover every pair exactly once."""


class ConsistencyError(MaxEntError):
    """Constraint marginals disagree on shared variables.

    Attributes:
        report: The consistency report listing every disagreement.

    """

    def __init__(self, message: str, report: ConsistencyReport | None = None) -> None:
        super().__init__(message)
        self.report = report


class BudgetExceededError(MaxEntError):
    """A dense table would exceed the configured memory budget."""
