"""Robust reduced-rank regression with Huber loss and nonconvex spectral penalties."""

__version__ = "0.1.0"

from .linalg import ShapeError, SvdError, SvdResult, svd
from .loss import gradient, huber, loss, psi
from .penalty import PenaltySpec, penalty_of_matrix, penalty_value, scalar_prox, spectral_prox
from .selection import CvReport, GridError, TuningGrid, build_grid, cross_validate, lambda_max
from .simulation import PRESETS, SimScenario, generate, metrics, run_replicates
from .solver import DivergenceError, FitConfig, FitResult, fit, predict

__all__ = [
    "CvReport", "DivergenceError", "FitConfig", "FitResult", "GridError", "PRESETS",
    "PenaltySpec", "ShapeError", "SimScenario", "SvdError", "SvdResult", "TuningGrid",
    "build_grid", "cross_validate", "fit", "generate", "gradient", "huber", "lambda_max",
    "loss", "metrics", "penalty_of_matrix", "penalty_value", "predict", "psi",
    "run_replicates", "scalar_prox", "spectral_prox", "svd",
]
