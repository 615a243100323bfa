from .boost import SAMMEClassifier, samme_alpha
from .config import BoostConfig, MlpConfig
from .ensemble import predict, train_adaboost, train_mlp_ensemble
from .mlp import MLPClassifier, TrainingDivergedError

__all__ = [
    "BoostConfig",
    "MLPClassifier",
    "MlpConfig",
    "SAMMEClassifier",
    "TrainingDivergedError",
    "predict",
    "samme_alpha",
    "train_adaboost",
    "train_mlp_ensemble",
]
