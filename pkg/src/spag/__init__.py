"""Statistically preconditioned accelerated gradient (SPAG) for distributed ERM."""

from .algorithms import AlgorithmConfig, IterationRecord, SpagState, spag_schedule
from .bregman import Preconditioner, RelativeConstants, relative_constants
from .concentration import BoundsInput, BoundReport, empirical_hessian_gap
from .data import SparseDataset, load_libsvm, make_synthetic, parse_libsvm
from .errors import (ArgumentError, DivergedError, NumericalError, ParseError, SpagError)
from .estimators import SPAGClassifier, SPAGRegressor
from .harness import Cluster, reference_solution, run_experiment
from .losses import RegularizedLoss
from .tuning import tune_mu

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig", "ArgumentError", "BoundReport", "BoundsInput", "Cluster",
    "DivergedError", "IterationRecord", "NumericalError", "ParseError", "Preconditioner",
    "RegularizedLoss", "RelativeConstants", "SPAGClassifier", "SPAGRegressor", "SparseDataset",
    "SpagError", "SpagState", "empirical_hessian_gap", "load_libsvm", "make_synthetic",
    "parse_libsvm", "reference_solution", "relative_constants", "run_experiment",
    "spag_schedule", "tune_mu",
]
