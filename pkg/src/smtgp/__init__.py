"""Twin Gaussian process structured regression with Sharma-Mittal divergence."""

from .config import PRESETS, RunConfig
from .core import (
    Prediction,
    TrainedModel,
    certainty_phi,
    ikltgp_cost_grad,
    kltgp_cost_grad,
    predict,
    smtgp_cubic_cost_grad,
    smtgp_quadratic_cost_grad,
    train,
)
from .datasets import Dataset, generate_toy1, generate_toy2, generate_toy_holdout, load_csv, save_csv
from .divergence import GaussianSpec, SMParams, sm_divergence_original, sm_divergence_simplified
from .estimators import GPRegressor, TwinGaussianProcessRegressor, WeightedKNNRegressor
from .evaluation import certainty_report, cross_validate, gpr_predict, run_experiment, wknn_predict
from .kernels import KernelConfig, NotPositiveDefiniteError
from .optimizer import OptimizerOptions

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "RunConfig",
    "Prediction",
    "TrainedModel",
    "certainty_phi",
    "ikltgp_cost_grad",
    "kltgp_cost_grad",
    "predict",
    "smtgp_cubic_cost_grad",
    "smtgp_quadratic_cost_grad",
    "train",
    "Dataset",
    "generate_toy1",
    "generate_toy2",
    "generate_toy_holdout",
    "load_csv",
    "save_csv",
    "GaussianSpec",
    "SMParams",
    "sm_divergence_original",
    "sm_divergence_simplified",
    "GPRegressor",
    "TwinGaussianProcessRegressor",
    "WeightedKNNRegressor",
    "certainty_report",
    "cross_validate",
    "gpr_predict",
    "run_experiment",
    "wknn_predict",
    "KernelConfig",
    "NotPositiveDefiniteError",
    "OptimizerOptions",
]
