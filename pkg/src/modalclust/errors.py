"""Exception hierarchy shared by all modules.

The CLI maps `InputError` to exit code 2 and `NumericalError` to exit code 3.
"""


class ModalClustError(Exception):
    """Base class for all package errors."""


class InputError(ModalClustError, ValueError):
    """Malformed or inconsistent user input."""


class DimensionError(InputError):
    """A point or matrix does not match the model dimension."""


class CarrierMismatchError(InputError):
    """Two partitions do not live on the same carrier."""


class NotCriticalPointError(InputError):
    """Classification was requested at a point with non-negligible gradient."""


class AssignmentSizeError(InputError):
    """Brute-force enumeration refused because the matrix is too large."""


class UnsupportedOperationError(ModalClustError):
    """The model cannot provide the requested quantity (e.g. Hessian of a kinked profile)."""


class NumericalError(ModalClustError, ArithmeticError):
    """NaN/inf appeared or a computation broke down numerically."""


class IllConditionedModelError(NumericalError):
    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class ShiftUndefinedError(NumericalError):
    """Mean shift step requested where the density vanishes."""


class DegenerateDensityError(NumericalError):
    """The density is not Morse on the grid (flat stretch at a critical level)."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval
