from .exceptions import SpeckitException
from .spectral_model import (
    DiscreteOperator,
    Spectrum,
    SpectrumKind,
    SpreadFunctionModel,
    WavelengthGrid,
    discretize_operator,
    forward_apply,
)
from .tikhonov_solver import ErrorBudget, RegularizedSolution, solve_tikhonov
from .envelope_fit import ContactResult, EnvelopeParams, ErrorCurve, fit_g_analytic, fit_g_scan
from .training_lab import SelectionReport, TrainingSpec, select_alpha

__all__ = [
    "SpeckitException",
    "DiscreteOperator",
    "Spectrum",
    "SpectrumKind",
    "SpreadFunctionModel",
    "WavelengthGrid",
    "discretize_operator",
    "forward_apply",
    "ErrorBudget",
    "RegularizedSolution",
    "solve_tikhonov",
    "ContactResult",
    "EnvelopeParams",
    "ErrorCurve",
    "fit_g_analytic",
    "fit_g_scan",
    "SelectionReport",
    "TrainingSpec",
    "select_alpha",
]
