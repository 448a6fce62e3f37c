"""Dataset statistics, best-label assignment and stratified splitting."""

from __future__ import annotations

import csv
import io
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .clean import LabeledPayload
from .taxonomy import N_LABELS, NAMES, Discipline


class EmptyLabelSet(ValueError):
    pass


def _labels_of(item) -> frozenset:
    return frozenset(item.labels if hasattr(item, "labels") else item)


def assign_best_labels(payloads: Sequence) -> list[Discipline]:
    """Pick one stratification label per record.

    Single-label records keep their label and are counted first.  Multi-label
    records are then visited in input order and get the member of their label
    set with the smallest running count (lowest code on ties), which is then
    incremented.  Accepts payloads or plain label sets.
    """
    sets = [_labels_of(p) for p in payloads]
    counts = [0] * N_LABELS
    best: list[Discipline | None] = [None] * len(sets)
    for i, labels in enumerate(sets):
        if not labels:
            raise EmptyLabelSet(f"record {i} has no labels")
        if len(labels) == 1:
            (label,) = labels
            best[i] = Discipline(label)
            counts[label] += 1
    for i, labels in enumerate(sets):
        if len(labels) > 1:
            label = min(labels, key=lambda l: (counts[l], int(l)))
            best[i] = Discipline(label)
            counts[label] += 1
    return best  # type: ignore[return-value]


@dataclass(frozen=True)
class SplitConfig:
    ratio: float = 0.1
    seed: int = 0
    second_split: bool = False

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(payloads: Sequence, best: Sequence[int],
                     cfg: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (train, holdout) index arrays stratified by best label."""
    if len(payloads) != len(best):
        raise ValueError("best labels are not aligned with payloads")
    rng = np.random.default_rng(cfg.seed)
    best = np.asarray([int(b) for b in best], dtype=np.int64)
    holdout = []
    for label in np.unique(best):
        members = np.flatnonzero(best == label)
        size = len(members)
        if size < 2:
            continue
        take = max(1, _round_half_up(cfg.ratio * size))
        take = min(take, size - 1)
        holdout.append(rng.permutation(members)[:take])
    holdout_idx = np.sort(np.concatenate(holdout)) if holdout else np.empty(0, dtype=np.int64)
    mask = np.ones(len(best), dtype=bool)
    mask[holdout_idx] = False
    return np.flatnonzero(mask), holdout_idx


def train_validation_split(payloads: Sequence, best: Sequence[int],
                           cfg: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Second split of a training set, same mechanism with seed + 1."""
    return stratified_split(payloads, best, SplitConfig(cfg.ratio, cfg.seed + 1, True))


@dataclass
class LabelColumn:
    one_label: int = 0
    two_labels: int = 0
    three_plus: int = 0
    best: int = 0
    total: int = 0
    pct: float = 0.0
    mean_labels: float = 0.0
    mean_wc: float = 0.0
    median_wc: float = 0.0


@dataclass
class DatasetStats:
    n: int
    per_label: dict[Discipline, LabelColumn]
    cardinality: float
    density: float
    labelset_count: int
    singleton_labelsets: int
    defined: bool = True
    mean_wc: float = 0.0
    median_wc: float = 0.0
    totals: LabelColumn = field(default_factory=LabelColumn)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "1 label", "2 labels", "3+ labels", "best", "total", "%",
                         "mean #labels", "mean wc", "wc (med.)"])
        for d in Discipline:
            c = self.per_label[d]
            writer.writerow([NAMES[d], c.one_label, c.two_labels, c.three_plus, c.best, c.total,
                             f"{100 * c.pct:.2f}", f"{c.mean_labels:.2f}", f"{c.mean_wc:.0f}",
                             f"{c.median_wc:g}"])
        t = self.totals
        writer.writerow(["total", t.one_label, t.two_labels, t.three_plus, "-", t.total,
                         f"{100 * t.pct:.2f}", f"{self.cardinality:.2f}", f"{self.mean_wc:.0f}",
                         f"{self.median_wc:g}"])
        return buf.getvalue()


def dataset_stats(payloads: Sequence[LabeledPayload]) -> DatasetStats:
    n = len(payloads)
    per_label = {d: LabelColumn() for d in Discipline}
    if n == 0:
        return DatasetStats(0, per_label, 0.0, 0.0, 0, 0, defined=False)

    best = assign_best_labels(payloads)
    word_counts: dict[Discipline, list[int]] = {d: [] for d in Discipline}
    sizes: dict[Discipline, list[int]] = {d: [] for d in Discipline}
    labelsets = Counter(frozenset(p.labels) for p in payloads)
    for p, b in zip(payloads, best):
        k = len(p.labels)
        per_label[b].best += 1
        for label in p.labels:
            col = per_label[label]
            col.total += 1
            if k == 1:
                col.one_label += 1
            elif k == 2:
                col.two_labels += 1
            else:
                col.three_plus += 1
            word_counts[label].append(p.word_count)
            sizes[label].append(k)
    for d, col in per_label.items():
        if col.total:
            col.pct = col.total / n
            col.mean_labels = sum(sizes[d]) / col.total
            col.mean_wc = sum(word_counts[d]) / col.total
            col.median_wc = float(statistics.median(word_counts[d]))

    label_total = sum(len(p.labels) for p in payloads)
    cardinality = label_total / n
    all_wc = [p.word_count for p in payloads]
    totals = LabelColumn(
        one_label=sum(1 for p in payloads if len(p.labels) == 1),
        two_labels=sum(1 for p in payloads if len(p.labels) == 2),
        three_plus=sum(1 for p in payloads if len(p.labels) >= 3),
        best=n,
        total=n,
        pct=1.0,
    )
    return DatasetStats(
        n=n,
        per_label=per_label,
        cardinality=cardinality,
        density=cardinality / N_LABELS,
        labelset_count=len(labelsets),
        singleton_labelsets=sum(1 for c in labelsets.values() if c == 1),
        mean_wc=sum(all_wc) / n,
        median_wc=float(statistics.median(all_wc)),
        totals=totals,
    )


def label_matrix(label_sets: Iterable[Iterable[int]]) -> np.ndarray:
    """Binary (rows x 20) indicator matrix."""
    rows = [sorted(int(l) for l in ls) for ls in label_sets]
    Y = np.zeros((len(rows), N_LABELS), dtype=np.int8)
    for i, labels in enumerate(rows):
        Y[i, labels] = 1
    return Y
