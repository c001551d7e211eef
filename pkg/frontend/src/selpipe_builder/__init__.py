"""Builder-style front end for the selective-inference pipeline engine."""

from .builder import (
    BuilderError,
    PipelineManager,
    Placeholder,
    construct_pipelines,
    cook_distance,
    definite_regression_imputation,
    dffits,
    extract_features,
    initialize_dataset,
    intersection,
    lasso,
    marginal_screening,
    mean_value_imputation,
    nearest_neighbor_imputation,
    remove_outliers,
    soft_ipod,
    stepwise_feature_selection,
    union,
)
from .runtime import EngineError

__version__ = "0.1.0"

__all__ = [
    "BuilderError",
    "EngineError",
    "PipelineManager",
    "Placeholder",
    "construct_pipelines",
    "cook_distance",
    "definite_regression_imputation",
    "dffits",
    "extract_features",
    "initialize_dataset",
    "intersection",
    "lasso",
    "marginal_screening",
    "mean_value_imputation",
    "nearest_neighbor_imputation",
    "remove_outliers",
    "soft_ipod",
    "stepwise_feature_selection",
    "union",
]
