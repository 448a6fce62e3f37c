"""Multi-label classifiers sharing one fit / predict-probability contract."""

from __future__ import annotations

import logging

import numpy as np

from .config import FAMILIES, ConfigError, TrainConfig
from .forest import ForestModel, train_forest
from .io import dumps_model, load_model, loads_model, save_model
from .mlp import AdamState, MlpModel, NonFiniteLoss, adam_step, init_mlp, loss_and_grads, train_mlp
from .tree import DimensionMismatch, ShapeMismatch, Tree, train_decision_tree
from .tuning import SearchResult, sequential_grid_search
from .weights import LabelWeights, ZeroFrequency, compute_label_weights, label_frequencies, weighted_bce_loss

log = logging.getLogger(__name__)

__all__ = [
    "FAMILIES", "AdamState", "ConfigError", "DimensionMismatch", "ForestModel", "LabelWeights", "MlpModel",
    "NonFiniteLoss", "SearchResult", "ShapeMismatch", "TrainConfig", "Tree", "ZeroFrequency", "adam_step",
    "compute_label_weights", "dumps_model", "fit", "init_mlp", "label_frequencies", "load_model",
    "loads_model", "loss_and_grads", "predict", "predict_proba", "save_model", "sequential_grid_search",
    "train_decision_tree", "train_forest", "training_weights", "train_mlp", "weighted_bce_loss",
]


def training_weights(Y) -> np.ndarray:
    """Label weights for ``Y``; labels with no positives get weight 1.

    A weight only scales positive examples, so it has no effect on a label
    that never occurs in training.
    """
    freq = label_frequencies(Y)
    present = freq > 0
    if not present.any():
        raise ZeroFrequency("training set has no positive labels")
    if not present.all():
        log.warning("labels without training examples: %s", np.flatnonzero(~present).tolist())
    w = np.ones(len(freq))
    w[present] = compute_label_weights(freq[present]).weights
    return w


def fit(X, Y, cfg: TrainConfig, val=None, weights=None):
    """Train the family named in ``cfg``; label weights default to training frequencies."""
    Y = np.asarray(Y)
    w = weights if weights is not None else training_weights(Y)
    if cfg.family == "dct":
        return train_decision_tree(X, Y, w, cfg)
    if cfg.family in ("rf", "et"):
        return train_forest(X, Y, w, cfg)
    X_val, Y_val = val if val is not None else (None, None)
    return train_mlp(X, Y, X_val, Y_val, w, cfg)


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)


def predict(model, X, threshold: float = 0.5) -> np.ndarray:
    """Binary predictions; a probability equal to the threshold counts as positive."""
    return (predict_proba(model, X) >= threshold).astype(np.int8)
