"""Imputation-balanced GAN training for imbalanced multivariate series classification."""

from .dataio import Dataset, SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .metrics import MetricsReport
from .trainer import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "SyntheticSpec",
    "generate_synthetic",
    "load_dataset",
    "save_dataset",
    "MetricsReport",
    "TrainConfig",
    "train",
    "evaluate",
]
