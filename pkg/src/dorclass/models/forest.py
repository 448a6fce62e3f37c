from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .tree import DimensionMismatch, ShapeMismatch, Tree, _Builder, n_split_features

VARIANTS = {"rf": "random_forest", "et": "extra_trees"}


@dataclass
class ForestModel:
    trees: list[Tree]
    variant: str
    features_per_split: int
    bootstrap: bool

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def predict_proba(self, X) -> np.ndarray:
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        total = None
        for tree in self.trees:
            p = tree.predict_proba(X)
            total = p if total is None else total + p
        return total / len(self.trees)


def _fit_one(args) -> Tree:
    X, Y, weights, cfg, index, mode, bootstrap = args
    # seeds depend only on (master seed, tree index), so parallel runs match serial ones
    rng = np.random.default_rng([cfg.seed, index])
    n = X.shape[0]
    if bootstrap:
        sw = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
    else:
        sw = np.ones(n)
    builder = _Builder(X, Y, weights, sw, cfg, rng, mode, cfg.max_features)
    return builder.build(np.flatnonzero(sw > 0))


def train_forest(X, Y, w, cfg: TrainConfig) -> ForestModel:
    """Random forest (``cfg.family == "rf"``) or extremely randomized trees (``"et"``)."""
    if cfg.family not in VARIANTS:
        raise ValueError(f"not a forest family: {cfg.family!r}")
    Y = np.asarray(Y)
    if Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeMismatch(f"X has {X.shape[0]} rows, Y has shape {Y.shape}")
    if cfg.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    weights = np.asarray(getattr(w, "weights", w), dtype=np.float64)
    mode = "best" if cfg.family == "rf" else "random"
    bootstrap = cfg.bootstrap if cfg.bootstrap is not None else cfg.family == "rf"
    jobs = [(X, Y, weights, cfg, i, mode, bootstrap) for i in range(cfg.n_trees)]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(cfg.n_jobs) as pool:
            trees = list(pool.map(_fit_one, jobs))
    else:
        trees = [_fit_one(j) for j in jobs]
    return ForestModel(trees, VARIANTS[cfg.family], n_split_features(cfg.max_features, X.shape[1]), bootstrap)
