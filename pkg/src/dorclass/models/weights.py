from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

EPS = 1e-7


class ZeroFrequency(ValueError):
    pass


@dataclass(frozen=True)
class LabelWeights:
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i):
        return self.weights[i]


def compute_label_weights(frequencies: Sequence[float]) -> LabelWeights:
    """Inverse relative frequency: the most frequent label gets 1, rarer labels more."""
    freq = np.asarray(frequencies, dtype=np.float64)
    if (freq <= 0).any():
        missing = np.flatnonzero(freq <= 0).tolist()
        raise ZeroFrequency(f"labels without training examples: {missing}")
    return LabelWeights(freq.max() / freq)


def label_frequencies(Y: np.ndarray) -> np.ndarray:
    return np.asarray(Y, dtype=np.float64).sum(axis=0)


def weighted_bce_loss(p, y, w) -> float:
    """Binary cross-entropy summed over labels; only the positive term is weighted."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(getattr(w, "weights", w), dtype=np.float64)
    return float(-np.sum(w * y * np.log(p) + (1.0 - y) * np.log1p(-p)))
