"""Training side of the adaptive TV parameter-map toolkit."""

from .models import CLASSIFIER_TAG, REGRESSOR_TAG, MuRegressor, NoiseClassifier, parameter_count
from .train import TrainConfig, TrainResult, train_classifier, train_regressor
from .tvds import PatchSet, read_tvds
from .tvmw import export_weights, load_into_model, read_tvmw

__all__ = [
    "CLASSIFIER_TAG",
    "REGRESSOR_TAG",
    "MuRegressor",
    "NoiseClassifier",
    "parameter_count",
    "TrainConfig",
    "TrainResult",
    "train_classifier",
    "train_regressor",
    "PatchSet",
    "read_tvds",
    "export_weights",
    "load_into_model",
    "read_tvmw",
]
