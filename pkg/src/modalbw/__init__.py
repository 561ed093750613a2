"""Bandwidth selection for nonparametric modal regression."""

from .density import Bandwidths, Sample, WeightWindow, conditional_density, conditional_density_dy, weight_window
from .errors import (
    ConvergenceError,
    DatasetError,
    InfeasibleSearchError,
    InvalidInputError,
    ModalBWError,
    NoModesError,
    UndefinedEstimateError,
)
from .modes import MeanShiftConfig, ModeSet, estimate_modes, mode_curves
from .setdist import hausdorff
from .selectors import METHODS, SearchSpec, SelectionResult, SelectorOptions, run_selector

__all__ = [
    "Bandwidths", "Sample", "WeightWindow", "conditional_density", "conditional_density_dy", "weight_window",
    "ConvergenceError", "DatasetError", "InfeasibleSearchError", "InvalidInputError", "ModalBWError",
    "NoModesError", "UndefinedEstimateError", "MeanShiftConfig", "ModeSet", "estimate_modes", "mode_curves",
    "hausdorff", "METHODS", "SearchSpec", "SelectionResult", "SelectorOptions", "run_selector",
]
__version__ = "0.1.0"
