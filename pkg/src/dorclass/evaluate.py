"""Multi-label f-beta evaluation, per-discipline tables and correlation annex.

Three use cases fix the beta values: scientometric research favours
precision (0.5), assistant systems favour recall (2) and value-adding services
weigh both equally (1).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .taxonomy import N_LABELS, NAMES

BETAS = (0.5, 1.0, 2.0)
USE_CASES = {"scientometric": 0.5, "value-adding": 1.0, "assistant": 2.0}


class ShapeMismatch(ValueError):
    pass


class ConstantVector(ValueError):
    pass


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def n_records(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.fn[0] + self.tn[0]) if len(self.tp) else 0


def confusion(y_true, y_pred) -> ConfusionCounts:
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape or t.ndim != 2:
        raise ShapeMismatch(f"truth {t.shape} vs prediction {p.shape}")
    if t.shape[0] == 0:
        raise ShapeMismatch("nothing to evaluate: zero records")
    return ConfusionCounts(
        tp=(t & p).sum(axis=0),
        fp=(~t & p).sum(axis=0),
        fn=(t & ~p).sum(axis=0),
        tn=(~t & ~p).sum(axis=0),
    )


def f_beta(precision: float, recall: float, beta: float) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1.0 + b2) * precision * recall / denom


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def precision_recall(counts: ConfusionCounts) -> tuple[np.ndarray, np.ndarray]:
    """Per-label precision and recall; 0 where the denominator is 0."""
    return _ratio(counts.tp, counts.tp + counts.fp), _ratio(counts.tp, counts.tp + counts.fn)


def _f_beta_vec(p: np.ndarray, r: np.ndarray, beta: float) -> np.ndarray:
    b2 = beta * beta
    return _ratio((1.0 + b2) * p * r, b2 * p + r)


def macro_scores(counts: ConfusionCounts, beta: float, average: str = "f",
                 zero_division: str = "zero") -> tuple[np.ndarray, float]:
    """Per-label f-beta and its macro average.

    ``average="f"`` averages the per-label scores.  ``average="pr"`` instead
    averages precision and recall over labels and scores that pair once.
    ``zero_division="exclude"`` leaves labels absent from both truth and
    prediction out of the average.
    """
    p, r = precision_recall(counts)
    per_label = _f_beta_vec(p, r, beta)
    keep = np.ones(len(per_label), dtype=bool)
    if zero_division == "exclude":
        keep = (counts.tp + counts.fp + counts.fn) > 0
    elif zero_division != "zero":
        raise ValueError(f"unknown zero_division mode {zero_division!r}")
    if not keep.any():
        return per_label, 0.0
    if average == "f":
        return per_label, float(per_label[keep].mean())
    if average == "pr":
        return per_label, f_beta(float(p[keep].mean()), float(r[keep].mean()), beta)
    raise ValueError(f"unknown average mode {average!r}")


def micro_scores(counts: ConfusionCounts, beta: float) -> float:
    tp, fp, fn = counts.tp.sum(), counts.fp.sum(), counts.fn.sum()
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return f_beta(float(precision), float(recall), beta)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson_r needs two equal-length vectors with at least 2 values")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ConstantVector("correlation is undefined for a constant vector")
    return float((dx @ dy) / (sx * sy))


@dataclass
class EvaluationReport:
    model_id: str
    size_class: str
    seed: int | None
    precision: np.ndarray
    recall: np.ndarray
    per_label: dict[float, np.ndarray]
    macro: dict[float, float]
    micro: dict[float, float]
    use_cases: dict[str, float] = field(default_factory=lambda: dict(USE_CASES))

    def verdicts(self) -> dict[str, float]:
        """Macro score that decides each use case."""
        return {name: self.macro[beta] for name, beta in self.use_cases.items()}


def evaluate(y_true, y_pred, model_id: str = "model", size_class: str = "-", seed: int | None = None,
             average: str = "f", zero_division: str = "zero") -> EvaluationReport:
    counts = confusion(y_true, y_pred)
    p, r = precision_recall(counts)
    per_label, macro, micro = {}, {}, {}
    for beta in BETAS:
        per_label[beta], macro[beta] = macro_scores(counts, beta, average, zero_division)
        micro[beta] = micro_scores(counts, beta)
    return EvaluationReport(model_id, size_class, seed, p, r, per_label, macro, micro)


@dataclass
class ReportBundle:
    reports: list[EvaluationReport]
    correlations: list[dict]

    def table_aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "size", "f0.5 (macro)", "f0.5 (micro)", "f1 (macro)", "f1 (micro)",
                    "f2 (macro)", "f2 (micro)"])
        for rep in self.reports:
            row = [rep.model_id, rep.size_class]
            for beta in BETAS:
                row += [f"{rep.macro[beta]:.3f}", f"{rep.micro[beta]:.3f}"]
            w.writerow(row)
        return buf.getvalue()

    def table_per_label_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["discipline"]
        for rep in self.reports:
            header += [f"f{beta:g}-{rep.model_id}-{rep.size_class}" for beta in BETAS]
        w.writerow(header)
        for label in range(N_LABELS):
            row = [NAMES[label]]
            for rep in self.reports:
                row += [f"{rep.per_label[beta][label]:.2f}" for beta in BETAS]
            w.writerow(row)
        return buf.getvalue()

    def correlations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "size", "beta", "against", "pearson_r"])
        for row in self.correlations:
            r = row["r"]
            w.writerow([row["model"], row["size"], f"{row['beta']:g}", row["against"],
                        "" if r is None else f"{r:.3f}"])
        return buf.getvalue()

    def markdown(self) -> str:
        lines = ["| model | size | f0.5 macro | f0.5 micro | f1 macro | f1 micro | f2 macro | f2 micro |",
                 "|---|---|---|---|---|---|---|---|"]
        for rep in self.reports:
            cells = [rep.model_id, rep.size_class]
            for beta in BETAS:
                cells += [f"{rep.macro[beta]:.3f}", f"{rep.micro[beta]:.3f}"]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
        head = ["discipline"] + [f"f{b:g} {rep.model_id}-{rep.size_class}" for rep in self.reports for b in BETAS]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        for label in range(N_LABELS):
            cells = [NAMES[label]] + [f"{rep.per_label[b][label]:.2f}" for rep in self.reports for b in BETAS]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def build_report(runs: Sequence[tuple[str, str, np.ndarray]], truth, stats=None,
                 seed: int | None = None, average: str = "f") -> ReportBundle:
    """Score every ``(model_id, size_class, predictions)`` run against ``truth``.

    With dataset statistics, per-label scores are correlated against label
    totals, median word counts and mean labels per record.
    """
    reports = [evaluate(truth, pred, model_id, size, seed, average) for model_id, size, pred in runs]
    correlations = []
    if stats is not None:
        cols = [stats.per_label[d] for d in sorted(stats.per_label)]
        against = {
            "total": [c.total for c in cols],
            "median_wc": [c.median_wc for c in cols],
            "mean_labels": [c.mean_labels for c in cols],
        }
        for rep in reports:
            for beta in BETAS:
                for name, values in against.items():
                    try:
                        r = pearson_r(rep.per_label[beta], values)
                    except ConstantVector:
                        r = None
                    if r is not None and math.isnan(r):
                        r = None
                    correlations.append({"model": rep.model_id, "size": rep.size_class,
                                         "beta": beta, "against": name, "r": r})
    return ReportBundle(reports, correlations)
