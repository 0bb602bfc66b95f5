"""Exception types shared across the package."""


class CocoError(Exception):
    """Base class for all cococlear errors."""


class ValidationError(CocoError):
    """Invalid parameters, network data, scenario file, or CSV input."""


class PreconditionError(CocoError):
    """A documented precondition of an operation does not hold."""


class NegativeAssetsError(CocoError):
    """A transform would leave some bank with negative external assets."""


class BracketError(CocoError):
    """A root finder was handed an interval that does not bracket a root."""


class ConvergenceError(CocoError):
    """An iteration hit its budget without meeting its tolerance.

    Carries the iteration count, the final residual, and the last iterate so
    callers can inspect how close the run got.
    """

    def __init__(self, message, iterations, residual, last=None):
        super().__init__(message)
        self.iterations = int(iterations)
        self.residual = float(residual)
        self.last = last


class CalibrationError(CocoError):
    """Base class for balance-sheet calibration failures."""


class NegativeBalanceError(CalibrationError):
    """A bank record implies a negative balance-sheet entry."""


class ImbalanceError(CalibrationError):
    """Row and column totals disagree by more than the allowed gap."""
