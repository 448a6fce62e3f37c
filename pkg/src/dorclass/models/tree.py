"""Multi-label decision trees with label-weighted Gini impurity.

Impurity of a node for label ``l``, with positives weighted by ``w[l]``::

    P = w[l] * (positives), N = negatives, W = P + N
    gini_l = 1 - (P/W)^2 - (N/W)^2 = 2 P N / W^2

A split is scored by the label-averaged, mass-weighted child impurity
``mean_l (W_left * gini_left + W_right * gini_right) / W``.  Leaves store
``P / W`` per label.

Split search works on CSC columns and never densifies: the implicit zeros of a
feature inside a node collapse into one pseudo-entry with value 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .config import TrainConfig

LEAF = -1
_DENSE_CHUNK = 4_000_000


class ShapeMismatch(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class Tree:
    """Flat array representation; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max()) if self.n_nodes else 0

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row."""
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        out = np.empty(X.shape[0], dtype=np.int64)
        for start, block in _dense_blocks(X):
            node = np.zeros(block.shape[0], dtype=np.int64)
            active = np.flatnonzero(self.feature[node] != LEAF)
            while active.size:
                n = node[active]
                x = block[active, self.feature[n]]
                node[active] = np.where(x <= self.threshold[n], self.left[n], self.right[n])
                active = active[self.feature[node[active]] != LEAF]
            out[start:start + block.shape[0]] = node
        return out

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "feature": self.feature, "threshold": self.threshold, "left": self.left,
            "right": self.right, "value": self.value, "n_samples": self.n_samples,
        }


def _dense_blocks(X):
    n, f = X.shape
    step = max(1, _DENSE_CHUNK // max(f, 1))
    for start in range(0, n, step):
        block = X[start:start + step]
        yield start, (block.toarray() if sp.issparse(block) else np.asarray(block, dtype=np.float64))


def n_split_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(max_features, float):
        return max(1, min(n_features, int(max_features * n_features)))
    return max(1, min(n_features, int(max_features)))


def node_impurity(pos: np.ndarray, neg: np.ndarray) -> float:
    """Label-averaged weighted Gini of a node given per-label weighted masses."""
    mass = pos + neg
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(mass > 0, 2.0 * pos * neg / mass ** 2, 0.0)
    return float(g.mean())


@dataclass
class _Split:
    impurity: float
    feature: int
    threshold: float


class _Builder:
    def __init__(self, X, Y, label_weights, sample_weight, cfg: TrainConfig,
                 rng: np.random.Generator, mode: str, max_features):
        self.Xc = sp.csc_matrix(X, dtype=np.float64)
        self.Xc.sort_indices()
        self.Xr = sp.csr_matrix(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)
        self.w = np.asarray(label_weights, dtype=np.float64)
        self.sw = np.asarray(sample_weight, dtype=np.float64)
        self.cfg = cfg
        self.rng = rng
        self.mode = mode  # "best" or "random"
        self.n_features = X.shape[1]
        self.mtry = n_split_features(max_features, self.n_features)
        self.mark = np.full(X.shape[0], -1, dtype=np.int64)
        self.nodes: list = []

    # -- per-node masses ---------------------------------------------------
    def _masses(self, rows):
        sw = self.sw[rows]
        y = self.Y[rows]
        pos = self.w * (sw @ y)
        neg = sw.sum() - sw @ y
        return pos, neg

    def build(self, rows: np.ndarray) -> Tree:
        stack = [(rows, 0, -1, False)]
        feature, threshold, left, right, value, n_samples = [], [], [], [], [], []
        while stack:
            rows, depth, parent, is_left = stack.pop()
            node_id = len(feature)
            if parent >= 0:
                (left if is_left else right)[parent] = node_id
            pos, neg = self._masses(rows)
            mass = pos + neg
            value.append(np.where(mass > 0, pos / np.where(mass > 0, mass, 1.0), 0.0))
            n_samples.append(float(self.sw[rows].sum()))
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)

            split = None
            if self._may_split(rows, depth, pos, neg):
                split = self.find_split(rows, node_id, pos, neg)
            if split is None or split.impurity >= node_impurity(pos, neg) - 1e-15:
                continue
            x = self._column_values(rows, split.feature)
            go_left = x <= split.threshold
            feature[node_id] = split.feature
            threshold[node_id] = split.threshold
            # right pushed first so the left subtree is numbered first
            stack.append((rows[~go_left], depth + 1, node_id, False))
            stack.append((rows[go_left], depth + 1, node_id, True))
        n_labels = self.Y.shape[1]
        return Tree(
            feature=np.asarray(feature, dtype=np.int64),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=np.float64).reshape(-1, n_labels),
            n_samples=np.asarray(n_samples, dtype=np.float64),
            n_features=self.n_features,
        )

    def _may_split(self, rows, depth, pos, neg) -> bool:
        cfg = self.cfg
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return False
        total = self.sw[rows].sum()
        if total < cfg.min_samples_split or total < 2 * cfg.min_samples_leaf:
            return False
        return bool(((pos > 0) & (neg > 0)).any())

    def _column_values(self, rows, j) -> np.ndarray:
        lo, hi = self.Xc.indptr[j], self.Xc.indptr[j + 1]
        r = self.Xc.indices[lo:hi]
        v = self.Xc.data[lo:hi]
        out = np.zeros(len(rows), dtype=np.float64)
        pos = np.full(self.Xc.shape[0], -1, dtype=np.int64)
        pos[rows] = np.arange(len(rows))
        hit = pos[r] >= 0
        out[pos[r[hit]]] = v[hit]
        return out

    def _nonzero_features(self, rows) -> np.ndarray:
        sub = self.Xr[rows]
        return np.unique(sub.indices[sub.data != 0])

    # -- split search ------------------------------------------------------
    def find_split(self, rows, node_id, pos, neg) -> _Split | None:
        self.mark[rows] = node_id
        if self.mtry >= self.n_features:
            return self._search(rows, node_id, pos, neg, self._nonzero_features(rows))
        drawn = np.sort(self.rng.choice(self.n_features, self.mtry, replace=False))
        split, n_valid = self._search_counted(rows, node_id, pos, neg, drawn)
        if n_valid:
            return split
        # every drawn feature was constant here: keep drawing until one is not
        rest = np.setdiff1d(self._nonzero_features(rows), drawn, assume_unique=True)
        for j in self.rng.permutation(rest):
            split, n_valid = self._search_counted(rows, node_id, pos, neg, np.array([j]))
            if n_valid:
                return split
        return None

    def _search(self, rows, node_id, pos, neg, feats):
        return self._search_counted(rows, node_id, pos, neg, feats)[0]

    def _search_counted(self, rows, node_id, pos, neg, feats):
        if len(feats) == 0:
            return None, 0
        Xc = self.Xc
        starts = Xc.indptr[feats]
        lens = Xc.indptr[feats + 1] - starts
        total = int(lens.sum())
        if total == 0:
            return None, 0
        offsets = np.cumsum(lens) - lens
        idx = np.repeat(starts - offsets, lens) + np.arange(total)
        r = Xc.indices[idx]
        keep = self.mark[r] == node_id
        r = r[keep]
        v = Xc.data[idx][keep]
        fid = np.repeat(np.arange(len(feats)), lens)[keep]
        if r.size == 0:
            return None, 0

        active = np.flatnonzero((pos > 0) & (neg > 0))
        sw = self.sw[r]
        yw = self.Y[r][:, active]
        # columns: sample weight, weighted positives per active label, negatives per active label
        contrib = np.empty((len(r), 1 + 2 * len(active)))
        contrib[:, 0] = sw
        contrib[:, 1:1 + len(active)] = sw[:, None] * yw * self.w[active]
        contrib[:, 1 + len(active):] = sw[:, None] * (1.0 - yw)
        node_tot = np.concatenate(([self.sw[rows].sum()], pos[active], neg[active]))

        n_f = len(feats)
        nz_tot = np.zeros((n_f, contrib.shape[1]))
        np.add.at(nz_tot, fid, contrib)
        zero_block = node_tot[None, :] - nz_tot
        has_zero = np.bincount(fid, minlength=n_f) < len(rows)
        zf = np.flatnonzero(has_zero)
        v = np.concatenate((v, np.zeros(len(zf))))
        fid = np.concatenate((fid, zf))
        contrib = np.vstack((contrib, zero_block[zf]))

        order = np.lexsort((v, fid))
        v, fid, contrib = v[order], fid[order], contrib[order]
        first = np.ones(len(v), dtype=bool)
        first[1:] = fid[1:] != fid[:-1]
        distinct = ~first
        distinct[1:] &= v[1:] > v[:-1]
        # features whose values are not all equal inside this node
        n_valid = int(np.unique(fid[distinct]).size)

        if self.mode == "best":
            csum = np.cumsum(contrib, axis=0) - contrib
            group_start = np.maximum.accumulate(np.where(first, np.arange(len(v)), 0))
            left_tot = csum - csum[group_start]
            cand = distinct
            thr_lo = np.roll(v, 1)
            thr = (thr_lo + v) / 2.0
            thr = np.where(thr >= v, thr_lo, thr)
        else:
            # one uniform threshold per feature between its min and max in the node
            gstart = np.flatnonzero(first)
            gend = np.append(gstart[1:], len(v)) - 1
            lo, hi = v[gstart], v[gend]
            feat_thr = np.where(hi > lo, self.rng.uniform(lo, hi), lo)
            feat_thr = np.where(feat_thr >= hi, lo, feat_thr)
            le = v <= feat_thr[np.searchsorted(gstart, np.arange(len(v)), side="right") - 1]
            left_tot = np.zeros((len(gstart), contrib.shape[1]))
            np.add.at(left_tot, np.searchsorted(gstart, np.arange(len(v))[le], side="right") - 1,
                      contrib[le])
            cand = hi > lo
            thr = feat_thr
            fid = fid[gstart]

        if not cand.any():
            return None, n_valid
        L = left_tot[cand]
        R = node_tot[None, :] - L
        msl = self.cfg.min_samples_leaf
        ok = (L[:, 0] >= msl) & (R[:, 0] >= msl) & (L[:, 0] > 0) & (R[:, 0] > 0)
        if not ok.any():
            return None, n_valid
        k = len(active)
        imp = _children_impurity(L[:, 1:1 + k], L[:, 1 + k:], R[:, 1:1 + k], R[:, 1 + k:],
                                 pos[active] + neg[active], len(pos))
        imp = np.where(ok, imp, np.inf)
        best = int(np.argmin(imp))
        cidx = np.flatnonzero(cand)[best]
        return _Split(float(imp[best]), int(feats[fid[cidx]]), float(thr[cidx])), n_valid


def _children_impurity(pl, nl, pr, nr, mass, n_labels) -> np.ndarray:
    wl = pl + nl
    wr = pr + nr
    with np.errstate(invalid="ignore", divide="ignore"):
        gl = np.where(wl > 0, 2.0 * pl * nl / wl, 0.0)
        gr = np.where(wr > 0, 2.0 * pr * nr / wr, 0.0)
    return ((gl + gr) / mass).sum(axis=1) / n_labels


def split_impurity(x: np.ndarray, Y: np.ndarray, w: np.ndarray, threshold: float,
                   sample_weight: np.ndarray | None = None) -> float:
    """Label-averaged child impurity of splitting at ``x <= threshold`` (reference helper)."""
    sw = np.ones(len(x)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    total = 0.0
    go_left = x <= threshold
    for l in range(Y.shape[1]):
        P = w[l] * (sw * Y[:, l]).sum()
        N = (sw * (1 - Y[:, l])).sum()
        if P == 0 or N == 0:
            continue
        for side in (go_left, ~go_left):
            p = w[l] * (sw[side] * Y[side, l]).sum()
            n = (sw[side] * (1 - Y[side, l])).sum()
            if p + n > 0:
                total += 2 * p * n / (p + n) / (P + N)
    return total / Y.shape[1]


def _validate(X, Y):
    Y = np.asarray(Y)
    if Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeMismatch(f"X has {X.shape[0]} rows, Y has shape {Y.shape}")
    return Y


def train_decision_tree(X, Y, w, cfg: TrainConfig | None = None,
                        sample_weight: np.ndarray | None = None) -> Tree:
    cfg = cfg or TrainConfig(family="dct")
    Y = _validate(X, Y)
    weights = np.asarray(getattr(w, "weights", w), dtype=np.float64)
    if len(weights) != Y.shape[1]:
        raise ShapeMismatch("one label weight per label column is required")
    sw = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    rows = np.flatnonzero(sw > 0)
    builder = _Builder(X, Y, weights, sw, cfg, np.random.default_rng(cfg.seed), "best", None)
    return builder.build(rows)
