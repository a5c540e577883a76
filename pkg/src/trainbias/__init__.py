"""Training-set weighting bias: deweighting, metric overshoot, and prediction-consistent priors."""

from .classify import bayes_classify, stochastic_classify
from .core import Dataset, DataError, Schema, load_dataset, save_dataset
from .metrics import mean_kl_by_class, overshoot
from .mlp import TrainConfig, predict, train
from .priors import deweight, pcp_solve, weighted_prior

__all__ = [
    "Dataset", "DataError", "Schema", "load_dataset", "save_dataset",
    "TrainConfig", "train", "predict",
    "deweight", "pcp_solve", "weighted_prior",
    "bayes_classify", "stochastic_classify",
    "overshoot", "mean_kl_by_class",
]
