"""Exception hierarchy shared by the library and the command-line front end."""


class PhasemeterError(Exception):
    """Base class for all errors raised by phasemeter."""

    exit_code = 1


class ValidationError(PhasemeterError, ValueError):
    """Invalid input: out-of-range index, bad configuration, contract violation."""

    exit_code = 1


class ScaleMismatchError(ValidationError):
    """Objects built at different length scales were combined."""


class StructuralError(ValidationError):
    """Grids or operators with incompatible shapes or axes."""


class AccuracyError(PhasemeterError, ArithmeticError):
    """A numerical-accuracy guarantee could not be met (mass deficit,
    unitarity drift, truncation contamination)."""

    exit_code = 2

    def __init__(self, message, *, defect=None):
        super().__init__(message)
        self.defect = defect


class RangeError(AccuracyError, OverflowError):
    """Result outside the floating-point range."""
