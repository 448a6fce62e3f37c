"""Multilayer perceptron with rectifier hidden layers and sigmoid outputs, trained with Adam."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .config import TrainConfig
from .tree import DimensionMismatch, ShapeMismatch

log = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    pass


def sigmoid(z):
    return expit(z)


def softplus(z):
    return np.logaddexp(0.0, z)


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def _forward(self, X):
        """Pre-activations of every layer and the inputs fed to each layer."""
        inputs, pre = [], []
        h = X
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            z = np.asarray(z)
            pre.append(z)
            h = np.maximum(z, 0.0) if i < len(self.weights) - 1 else z
        return inputs, pre

    def logits(self, X) -> np.ndarray:
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return self._forward(_as_input(X, self.weights[0].dtype))[1][-1]

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.logits(X).astype(np.float64))


def _as_input(X, dtype):
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=dtype)
    return np.asarray(X, dtype=dtype)


def init_mlp(layer_dims, seed: int = 0, dtype="float64") -> MlpModel:
    """Uniform fan-in scaled initialisation, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(weights, biases)


def loss_and_grads(model: MlpModel, X, Y, label_weights) -> tuple[float, list[np.ndarray]]:
    """Mean weighted binary cross-entropy over rows and its gradient.

    Gradients come back in :meth:`MlpModel.params` order (W1, b1, W2, b2, ...).
    """
    w = np.asarray(getattr(label_weights, "weights", label_weights), dtype=model.weights[0].dtype)
    Y = np.asarray(Y, dtype=model.weights[0].dtype)
    n = Y.shape[0]
    inputs, pre = model._forward(X)
    z = pre[-1]
    loss = float(np.sum(w * Y * softplus(-z) + (1.0 - Y) * softplus(z)) / n)
    p = sigmoid(z)
    delta = (w * Y * (p - 1.0) + (1.0 - Y) * p) / n
    grads: list[np.ndarray] = []
    for i in range(len(model.weights) - 1, -1, -1):
        h = inputs[i]
        gW = np.asarray(h.T @ delta)
        gb = delta.sum(axis=0)
        grads.append(gb)
        grads.append(gW)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    grads.reverse()
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, t: int, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.t = t
    return params, state


@dataclass
class TrainingTrace:
    train_loss: list[float] = field(default_factory=list)
    val_score: list[float] = field(default_factory=list)
    best_epoch: int = 0


def train_mlp(X, Y, X_val, Y_val, w, cfg: TrainConfig | None = None,
              trace: TrainingTrace | None = None) -> MlpModel:
    """Mini-batch Adam on the weighted BCE; keeps the best epoch on validation macro f-beta."""
    from ..evaluate import confusion, macro_scores

    cfg = cfg or TrainConfig(family="mlp")
    Y = np.asarray(Y)
    if Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeMismatch(f"X has {X.shape[0]} rows, Y has shape {Y.shape}")
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    model = init_mlp([X.shape[1], *cfg.hidden, Y.shape[1]], seed=cfg.seed, dtype=dtype)
    trace = trace if trace is not None else TrainingTrace()
    if cfg.epochs <= 0:
        return model

    Xt = _as_input(X, dtype)
    Yt = Y.astype(dtype)
    state = AdamState.zeros_like(model.params())
    best, best_score, stale, step = copy.deepcopy(model), -np.inf, 0, 0
    n = Xt.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, Xt[batch], Yt[batch], w)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}, step {step + 1}; "
                                    f"try a smaller learning rate than {cfg.learning_rate}")
            step += 1
            adam_step(model.params(), grads, state, step, cfg.learning_rate)
            epoch_loss += loss * len(batch)
        trace.train_loss.append(epoch_loss / n)
        if X_val is None:
            best = model
            continue
        pred = model.predict_proba(X_val) >= cfg.threshold
        score = macro_scores(confusion(np.asarray(Y_val), pred), cfg.beta)[1]
        trace.val_score.append(score)
        log.info("epoch %d loss %.5f val f%.1f-macro %.4f", epoch + 1, trace.train_loss[-1], cfg.beta, score)
        if score > best_score:
            best, best_score, stale = copy.deepcopy(model), score, 0
            trace.best_epoch = epoch + 1
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best
