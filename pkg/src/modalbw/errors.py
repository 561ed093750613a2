"""Exception hierarchy shared across the package."""


class ModalBWError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ModalBWError, ValueError):
    """Input violates a documented precondition."""


class DegenerateWindowError(InvalidInputError):
    """Weight window has zero width (all covariate values equal)."""


class UndefinedEstimateError(ModalBWError, ArithmeticError):
    """Kernel estimate undefined because the smoothing denominator vanished."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NoModesError(ModalBWError):
    """Mean shift produced no point passing the local-maximum check."""


class ConvergenceError(ModalBWError):
    """Iteration failed to converge; ``partial`` holds whatever was obtained."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InfeasibleSearchError(ModalBWError):
    """Every candidate bandwidth in a search was infeasible."""


class ModelFitError(ModalBWError):
    """A parametric pilot model could not be fitted."""


class DatasetError(ModalBWError):
    """Dataset file could not be read or parsed."""
