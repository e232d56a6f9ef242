"""Exception hierarchy shared by every module.

The CLI maps :class:`UsageError` to exit code 1 and :class:`NumericalError`
(and its subclasses) to exit code 2.
"""


class LimeLensError(Exception):
    """Base class for all package errors."""


class UsageError(LimeLensError, ValueError):
    """Bad input: wrong shapes, missing fields, unparseable files."""


class NumericalError(LimeLensError, ArithmeticError):
    """A computation could not be carried out to the required accuracy."""


class DegenerateDesign(NumericalError):
    """The weighted normal matrix of the surrogate fit is singular."""

    def __init__(self, message, constant_columns=()):
        super().__init__(message)
        self.constant_columns = tuple(constant_columns)


class NearDegenerateBin(NumericalError):
    """Some alpha_j sits within 1e-12 of 0 or 1, so Sigma cannot be inverted."""


class DegenerateGrid(NumericalError):
    """Quantile boundaries collapse, so some bin would be empty."""
