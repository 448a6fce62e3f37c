from __future__ import annotations

import math

import numpy as np
import pytest

from dorclass.evaluate import (BETAS, USE_CASES, ConstantVector, ShapeMismatch, build_report, confusion, evaluate,
                               f_beta, macro_scores, micro_scores, pearson_r)
from dorclass.sample import dataset_stats
from dorclass.clean import LabeledPayload


def test_f_beta_examples():
    assert f_beta(0.8, 0.4, 0.5) == pytest.approx(0.6667, abs=5e-5)
    assert f_beta(0.0, 0.0, 1.0) == 0.0
    assert f_beta(1.0, 1.0, 2.0) == 1.0
    assert f_beta(1.0, 0.0, 1.0) == 0.0
    for beta in (0.5, 1.0, 2.0):
        assert f_beta(0.37, 0.37, beta) == pytest.approx(0.37, abs=1e-15)
    # beta weights recall: with recall above precision, larger beta scores higher
    assert f_beta(0.4, 0.9, 0.5) < f_beta(0.4, 0.9, 1.0) < f_beta(0.4, 0.9, 2.0)
    with pytest.raises(ValueError):
        f_beta(0.5, 0.5, 0.0)


def test_use_case_betas():
    assert BETAS == (0.5, 1.0, 2.0)
    assert USE_CASES == {"scientometric": 0.5, "value-adding": 1.0, "assistant": 2.0}


def test_two_label_hand_case():
    truth = np.array([[1, 0], [0, 1]])
    pred = np.array([[1, 0], [1, 0]])
    counts = confusion(truth, pred)
    assert (counts.tp.tolist(), counts.fp.tolist(), counts.fn.tolist()) == ([1, 0], [1, 0], [0, 1])
    per_label, macro = macro_scores(counts, 1.0)
    assert per_label == pytest.approx([2 / 3, 0.0])
    assert macro == pytest.approx(1 / 3)
    assert micro_scores(counts, 1.0) == pytest.approx(0.5)


def test_zero_division_modes():
    truth = np.array([[1, 0], [1, 0]])
    pred = np.array([[1, 0], [1, 0]])
    counts = confusion(truth, pred)
    assert macro_scores(counts, 1.0)[1] == 0.5
    assert macro_scores(counts, 1.0, zero_division="exclude")[1] == 1.0
    with pytest.raises(ValueError):
        macro_scores(counts, 1.0, zero_division="nan")


def test_average_of_precision_and_recall():
    truth = np.array([[1, 1], [1, 0], [0, 1]])
    pred = np.array([[1, 0], [1, 1], [0, 0]])
    counts = confusion(truth, pred)
    # label 0: p=1 r=1; label 1: p=0 r=0 -> mean p 0.5, mean r 0.5
    assert macro_scores(counts, 1.0, average="pr")[1] == pytest.approx(0.5)
    assert macro_scores(counts, 1.0, average="f")[1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        macro_scores(counts, 1.0, average="median")


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        confusion(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeMismatch):
        confusion(np.zeros((0, 3)), np.zeros((0, 3)))


def test_permutation_invariance(rng):
    truth = rng.integers(0, 2, (50, 6))
    pred = rng.integers(0, 2, (50, 6))
    base = evaluate(truth, pred)
    rows, cols = rng.permutation(50), rng.permutation(6)
    moved = evaluate(truth[rows][:, cols], pred[rows][:, cols])
    for beta in BETAS:
        assert moved.macro[beta] == pytest.approx(base.macro[beta], abs=1e-12)
        assert moved.micro[beta] == pytest.approx(base.micro[beta], abs=1e-12)
        assert np.allclose(moved.per_label[beta], base.per_label[beta][cols])


def test_macro_equals_micro_for_identical_labels(rng):
    col = rng.integers(0, 2, (40, 1))
    pcol = rng.integers(0, 2, (40, 1))
    rep = evaluate(np.repeat(col, 5, axis=1), np.repeat(pcol, 5, axis=1))
    for beta in BETAS:
        assert rep.macro[beta] == pytest.approx(rep.micro[beta], abs=1e-12)


def test_perfect_prediction():
    truth = np.eye(20, dtype=int)
    rep = evaluate(truth, truth)
    assert all(v == 1.0 for v in rep.macro.values())
    assert rep.verdicts() == {"scientometric": 1.0, "value-adding": 1.0, "assistant": 1.0}


def test_pearson_examples():
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson_r([1, 2, 3], [2, 2, 4]) == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    with pytest.raises(ConstantVector):
        pearson_r([1, 2, 3], [5, 5, 5])
    with pytest.raises(ValueError):
        pearson_r([1], [1])


def _payloads():
    out = []
    for i in range(40):
        labels = {i % 20} | ({(i + 3) % 20} if i % 3 == 0 else set())
        out.append(LabeledPayload(str(i), " ".join(["w"] * (10 + i)), frozenset(labels)))
    return out


def test_report_tables_are_deterministic(rng):
    truth = rng.integers(0, 2, (30, 20))
    pred = rng.integers(0, 2, (30, 20))
    stats = dataset_stats(_payloads())
    a = build_report([("mlp", "s", pred), ("rf", "s", truth)], truth, stats)
    b = build_report([("mlp", "s", pred), ("rf", "s", truth)], truth, stats)
    assert a.table_aggregate_csv() == b.table_aggregate_csv()
    assert a.table_per_label_csv() == b.table_per_label_csv()
    assert a.correlations_csv() == b.correlations_csv()
    assert a.markdown() == b.markdown()
    agg = a.table_aggregate_csv().splitlines()
    assert agg[0].startswith("model,size,f0.5 (macro)")
    assert agg[2] == "rf,s," + ",".join(["1.000"] * 6)
    assert len(a.table_per_label_csv().splitlines()) == 21
    # 2 runs x 3 betas x 3 statistics
    assert len(a.correlations) == 18


def test_constant_scores_give_blank_correlation():
    truth = np.eye(20, dtype=int)
    stats = dataset_stats(_payloads())
    bundle = build_report([("rf", "s", truth)], truth, stats)
    assert all(row["r"] is None for row in bundle.correlations)
    assert bundle.correlations_csv().splitlines()[1].endswith(",")
