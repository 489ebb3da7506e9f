"""Metric correctness against brute-force oracles."""

import numpy as np
import pytest

from spikeflag.errors import DataValidationError, UndefinedMetricError
from spikeflag.metrics import (
    EvalRecord,
    accuracy,
    auprc,
    auroc,
    eval_csv_header,
    evaluate_pixels,
    f1,
    format_eval_csv_row,
    pr_curve,
    roc_curve,
)


def auroc_pairwise_oracle(scores, labels):
    """Mean over all (positive, negative) pairs; ties count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def auroc_threshold_oracle(scores, labels):
    """Exhaustive enumeration of distinct thresholds, trapezoidal area."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    p = labels.sum()
    n = (~labels).sum()
    points = [(0.0, 0.0)]
    for thr in sorted(set(scores), reverse=True):
        sel = scores >= thr
        points.append(((sel & ~labels).sum() / n, (sel & labels).sum() / p))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def auprc_threshold_oracle(scores, labels):
    """Step-wise area over exhaustively enumerated distinct thresholds."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    p = labels.sum()
    area = 0.0
    prev_recall = 0.0
    for thr in sorted(set(scores), reverse=True):
        sel = scores >= thr
        tp = (sel & labels).sum()
        precision = tp / sel.sum()
        recall = tp / p
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


class TestAccuracy:
    def test_perfect_prediction(self):
        truth = np.random.default_rng(0).random((8, 8)) < 0.3
        assert accuracy(truth, truth) == 1.0

    def test_all_false_on_contaminated_truth(self):
        rng = np.random.default_rng(1)
        truth = rng.random((50, 50)) < 0.0276
        pred = np.zeros_like(truth)
        assert accuracy(pred, truth) == pytest.approx(1.0 - truth.mean())

    def test_complement_identity(self):
        rng = np.random.default_rng(2)
        truth = rng.random((10, 10)) < 0.4
        pred = rng.random((10, 10)) < 0.5
        assert accuracy(~pred, truth) == pytest.approx(1.0 - accuracy(pred, truth))

    def test_valid_mask_excludes_pixels(self):
        truth = np.array([True, False, True])
        pred = np.array([True, False, False])
        valid = np.array([True, True, False])
        assert accuracy(pred, truth, valid) == 1.0


class TestF1:
    def test_perfect(self):
        truth = np.array([True, False, True, False])
        assert f1(truth, truth) == 1.0

    def test_all_false_prediction_is_zero(self):
        truth = np.array([True, False, True])
        assert f1(np.zeros(3, dtype=bool), truth) == 0.0

    def test_direct_arithmetic_case(self):
        # TP=2, FP=1, FN=1 -> P = R = 2/3 -> F1 = 2/3
        truth = np.array([True, True, True, False, False])
        pred = np.array([True, True, False, True, False])
        assert f1(pred, truth) == pytest.approx(2.0 / 3.0)

    def test_degenerate_returns_zero(self):
        assert f1(np.zeros(4, dtype=bool), np.zeros(4, dtype=bool)) == 0.0


class TestAuroc:
    def test_perfect_separation(self):
        labels = np.array([True, True, False, False])
        scores = np.array([0.9, 0.8, 0.2, 0.1])
        assert auroc(scores, labels) == pytest.approx(1.0)

    def test_fixed_case_is_three_quarters(self):
        labels = np.array([1, 0, 1, 0], dtype=bool)
        scores = np.array([0.9, 0.8, 0.4, 0.2])
        assert auroc(scores, labels) == pytest.approx(0.75)
        assert auroc_pairwise_oracle(scores, labels) == pytest.approx(0.75)

    def test_constant_scores_give_half(self):
        labels = np.array([True, False, True, False])
        scores = np.full(4, 0.3)
        assert auroc(scores, labels) == pytest.approx(0.5)

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            auroc(np.array([0.1, 0.2]), np.array([True, True]))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        scores = rng.random(40)
        labels = rng.random(40) < 0.4
        base = auroc(scores, labels)
        assert auroc(np.exp(3 * scores) + 7, labels) == pytest.approx(base)

    def test_negation_identity_without_ties(self):
        rng = np.random.default_rng(4)
        scores = rng.permutation(30) / 30.0   # all distinct
        labels = rng.random(30) < 0.5
        if labels.all() or not labels.any():
            labels[0] = ~labels[0]
        assert auroc(scores, labels) + auroc(-scores, labels) == pytest.approx(1.0)

    def test_matches_both_oracles_on_small_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            n = int(rng.integers(2, 11))
            labels = rng.random(n) < 0.5
            if labels.all():
                labels[0] = False
            if not labels.any():
                labels[0] = True
            scores = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=n)
            got = auroc(scores, labels)
            assert got == pytest.approx(auroc_threshold_oracle(scores, labels))
            assert got == pytest.approx(auroc_pairwise_oracle(scores, labels))


class TestAuprc:
    def test_perfect_scores(self):
        labels = np.array([True, False, True, False])
        scores = np.array([0.9, 0.1, 0.8, 0.2])
        assert auprc(scores, labels) == pytest.approx(1.0)

    def test_constant_scores_equal_positive_rate(self):
        rng = np.random.default_rng(6)
        labels = rng.random(10_000) < 0.3
        scores = np.zeros(10_000)
        assert auprc(scores, labels) == pytest.approx(labels.mean(), abs=1e-12)

    def test_random_scores_approach_positive_rate(self):
        rng = np.random.default_rng(7)
        labels = rng.random(10_000) < 0.2
        scores = rng.random(10_000)
        assert auprc(scores, labels) == pytest.approx(0.2, abs=0.05)

    def test_no_positives_rejected(self):
        with pytest.raises(UndefinedMetricError):
            auprc(np.array([0.5, 0.2]), np.array([False, False]))

    def test_matches_exhaustive_oracle_on_small_instances(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            n = int(rng.integers(2, 11))
            labels = rng.random(n) < 0.5
            if not labels.any():
                labels[int(rng.integers(0, n))] = True
            scores = rng.choice([0.0, 0.2, 0.4, 0.6, 0.8, 1.0], size=n)
            assert auprc(scores, labels) == pytest.approx(
                auprc_threshold_oracle(scores, labels))

    def test_six_pixel_case_brute_forced(self):
        labels = np.array([True, False, True, True, False, False])
        scores = np.array([0.9, 0.9, 0.7, 0.3, 0.2, 0.1])
        assert auprc(scores, labels) == pytest.approx(
            auprc_threshold_oracle(scores, labels))


class TestCurves:
    def test_roc_curve_endpoints(self):
        labels = np.array([True, False, True, False])
        scores = np.array([0.9, 0.8, 0.4, 0.2])
        fpr, tpr, thr = roc_curve(scores, labels)
        assert fpr[0] == 0.0 and tpr[0] == 0.0
        assert fpr[-1] == 1.0 and tpr[-1] == 1.0
        assert thr[0] == np.inf

    def test_pr_curve_monotone_recall(self):
        rng = np.random.default_rng(9)
        labels = rng.random(50) < 0.3
        labels[0] = True
        scores = rng.random(50)
        recall, precision, _ = pr_curve(scores, labels)
        assert np.all(np.diff(recall) >= 0)
        assert recall[-1] == 1.0


class TestEvalRecord:
    def test_evaluate_pixels_bundle(self):
        rng = np.random.default_rng(10)
        truth = rng.random(500) < 0.1
        truth[:5] = True
        scores = np.where(truth, 0.8, 0.1) + rng.normal(0, 0.05, 500)
        pred = scores > 0.5
        rec = evaluate_pixels(pred, truth, scores)
        assert isinstance(rec, EvalRecord)
        assert rec.n_pixels == 500
        assert 0 <= rec.f1 <= 1 and 0 <= rec.auroc <= 1

    def test_csv_row_format(self):
        rec = EvalRecord(accuracy=0.5, auroc=0.25, auprc=0.125, f1=1.0, n_pixels=9)
        row = format_eval_csv_row("latency", 3, rec)
        assert row == "latency,3,0.500000,0.250000,0.125000,1.000000"
        assert eval_csv_header() == "method,seed,accuracy,auroc,auprc,f1"

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataValidationError):
            accuracy(np.zeros(3, dtype=bool), np.zeros(4, dtype=bool))
