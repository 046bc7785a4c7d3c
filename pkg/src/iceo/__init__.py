"""Integrated conditional estimation-optimization for finitely supported uncertainty."""
from .config import ExperimentConfig
from .datagen import Dataset, DgpConfig, generate_dataset
from .experiment import run_experiment, run_misspec_study
from .hypothesis import SoftmaxLinear, SoftmaxMlp, make_hypothesis
from .oracle import OracleConfig, solve_batch, solve_regularized
from .problems import FlowProblem, NewsvendorProblem, PortfolioProblem, build_problem, default_newsvendor
from .serialization import load_model, save_model
from .surrogates import fit_surrogate
from .training import TrainConfig, empirical_risk, iceo_gradient, iceo_objective, train_iceo

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DgpConfig", "generate_dataset", "SoftmaxLinear", "SoftmaxMlp", "make_hypothesis",
    "OracleConfig", "solve_batch", "solve_regularized", "FlowProblem", "NewsvendorProblem",
    "PortfolioProblem", "build_problem", "default_newsvendor", "TrainConfig", "empirical_risk",
    "iceo_gradient", "iceo_objective", "train_iceo", "ExperimentConfig", "run_experiment",
    "run_misspec_study", "save_model", "load_model", "fit_surrogate",
]
