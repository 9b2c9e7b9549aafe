"""Exception and warning classes raised by binfar."""


class BinfarError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(BinfarError, ValueError):
    pass


class NumericalFailureError(BinfarError, ArithmeticError):
    pass


class SingularRotationError(BinfarError, ArithmeticError):
    pass


class FitError(BinfarError):
    """Base class for failures of the maximum-likelihood fit."""


class DegenerateOutcomeError(FitError, ValueError):
    pass


class SingularDesignError(FitError, ArithmeticError):
    pass


class SeparationError(FitError, ArithmeticError):
    pass


class BootstrapFailureError(BinfarError):
    pass


class DegenerateLabelsError(BinfarError, ValueError):
    pass


class UndefinedMeasureError(BinfarError, ValueError):
    pass


class ParseError(BinfarError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TransformError(BinfarError, ValueError):
    pass


class InsufficientDataError(BinfarError, ValueError):
    pass


class DegenerateSpectrumWarning(UserWarning):
    """The d-th and (d+1)-th eigenvalues coincide; the factor space is not identified."""
