"""Instance-based explanations for boosted trees and related regressors."""

from .trainer import (Dataset, ForestModel, GbmModel, RegressionTree,
                      TrainConfig, fit_tree, leaf_assignments, load_model,
                      predict, save_model, train_forest, train_gbm)
from .axil import (AxilMatrix, AxilState, UnmatchedLeafError, axil_fit,
                   axil_forest, axil_ols, axil_transform, axil_tree,
                   forest_weights, gbm_weights, lcm, oracle_weights,
                   reconstruct)
from .analysis import (hac_cluster, symmetrize, to_dissimilarity, to_graph)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "ForestModel", "GbmModel", "RegressionTree", "TrainConfig",
    "fit_tree", "leaf_assignments", "load_model", "predict", "save_model",
    "train_forest", "train_gbm",
    "AxilMatrix", "AxilState", "UnmatchedLeafError", "axil_fit", "axil_forest",
    "axil_ols", "axil_transform", "axil_tree", "forest_weights", "gbm_weights",
    "lcm", "oracle_weights", "reconstruct",
    "hac_cluster", "symmetrize", "to_dissimilarity", "to_graph",
]
