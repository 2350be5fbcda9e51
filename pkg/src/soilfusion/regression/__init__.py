from .forest import (
    ForestModel,
    ForestParams,
    Tree,
    feature_importance,
    fit_extra_trees,
    predict_forest,
)
from .linear import LinearModel, fit_linear, predict_linear

__all__ = [
    "ForestModel",
    "ForestParams",
    "LinearModel",
    "Tree",
    "feature_importance",
    "fit_extra_trees",
    "fit_linear",
    "predict_forest",
    "predict_linear",
]
