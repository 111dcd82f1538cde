"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: argument/config problems
exit 2, numerical failures exit 3.
"""

from __future__ import annotations


class RegflowError(Exception):
    """Base class for all package-specific errors."""


class ArgumentError(RegflowError, ValueError):
    """An argument, file, or configuration value is invalid."""


class DomainError(ArgumentError):
    """A value lies outside the mathematical domain of an operation
    (non-finite or negative where non-negative is required)."""


class NumericalError(RegflowError, ArithmeticError):
    """Integration produced a non-finite state.

    Attributes:
        step_index: index of the integration step (or simulation step,
            when re-raised by the simulation loop) that failed.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class ReplyParseError(RegflowError, ValueError):
    """A structured agent reply could not be parsed."""
