"""Parameterized-convex function approximators with training and solvers."""

from .networks import (
    FeedforwardNet,
    LogSumExpNet,
    MaxAffineNet,
    ParamLogSumExpNet,
    ParamMaxAffineNet,
    forward,
    forward_batch,
    grad_u,
    load_model,
    save_model,
    subgrad_u,
)
from .numerics import BoxDomain, Rng
from .solver import SolveOptions, SolveResult, minimize
from .training import Dataset, TrainConfig, init_network, train
from .verification import run_check_suite

__version__ = "0.1.0"

__all__ = [
    "BoxDomain",
    "Dataset",
    "FeedforwardNet",
    "LogSumExpNet",
    "MaxAffineNet",
    "ParamLogSumExpNet",
    "ParamMaxAffineNet",
    "Rng",
    "SolveOptions",
    "SolveResult",
    "TrainConfig",
    "forward",
    "forward_batch",
    "grad_u",
    "init_network",
    "load_model",
    "minimize",
    "save_model",
    "subgrad_u",
    "train",
    "run_check_suite",
    "__version__",
]
