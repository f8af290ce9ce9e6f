"""Partially linear single-index proportional hazards models for
clustered bivariate survival data, fitted by full maximum likelihood
with a Clayton-copula association structure."""

from .data import read_dataset, write_dataset
from .estimators import LinearPHFitter, SingleIndexPHFitter
from .exceptions import (
    ConfigurationError,
    DatasetError,
    DomainError,
    SingularVarianceError,
)
from .fitting import FitOptions, fit_model, fit_ph_linear, predict_individual
from .hazard import PiecewiseHazard
from .params import ClusterDataset, ClusterObservation, ModelParams
from .simulate import ScenarioSpec, run_factorial, run_scenario
from .splines import SplineConfig

__version__ = "0.1.0"

__all__ = [
    "ClusterDataset",
    "ClusterObservation",
    "ConfigurationError",
    "DatasetError",
    "DomainError",
    "FitOptions",
    "LinearPHFitter",
    "ModelParams",
    "PiecewiseHazard",
    "ScenarioSpec",
    "SingleIndexPHFitter",
    "SingularVarianceError",
    "SplineConfig",
    "__version__",
    "fit_model",
    "fit_ph_linear",
    "predict_individual",
    "read_dataset",
    "run_factorial",
    "run_scenario",
    "write_dataset",
]
