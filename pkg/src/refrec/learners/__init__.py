from .forest import ForestParams, RandomForest, feature_importances, fit_random_forest, predict_forest
from .linear import LinearModel, clamp_f1, fit_linear, predict_linear
from .logistic import LogisticModel, TrainConfig, fit_logistic, predict_proba, sigmoid

__all__ = [
    "ForestParams", "RandomForest", "feature_importances", "fit_random_forest", "predict_forest",
    "LinearModel", "clamp_f1", "fit_linear", "predict_linear",
    "LogisticModel", "TrainConfig", "fit_logistic", "predict_proba", "sigmoid",
]
