"""Per-pixel evaluation: accuracy, F1, and threshold-sweep curve areas.

Curves are built from all distinct score thresholds with ties grouped, so the
ROC area equals the pairwise Mann-Whitney statistic with ties counted one
half. The precision-recall area uses the step-wise (right-continuous)
interpolation, which avoids the optimistic bias of the trapezoid there.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, UndefinedMetricError

EVAL_FIELDS = ("method", "seed", "accuracy", "auroc", "auprc", "f1")


@dataclass
class EvalRecord:
    accuracy: float
    auroc: float
    auprc: float
    f1: float
    n_pixels: int

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "auroc": self.auroc,
            "auprc": self.auprc,
            "f1": self.f1,
            "n_pixels": self.n_pixels,
        }


def _flatten_pair(pred, true, valid=None):
    pred = np.asarray(pred, dtype=bool).ravel()
    true = np.asarray(true, dtype=bool).ravel()
    if pred.shape != true.shape:
        raise DataValidationError(f"prediction shape {pred.shape} != truth shape {true.shape}")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool).ravel()
        pred, true = pred[valid], true[valid]
    return pred, true


def accuracy(pred, true, valid=None):
    """Fraction of matching pixels (ignored pixels excluded via ``valid``)."""
    pred, true = _flatten_pair(pred, true, valid)
    if pred.size == 0:
        raise DataValidationError("no pixels to score")
    return float((pred == true).mean())


def f1(pred, true, valid=None):
    """Harmonic mean of precision and recall; 0 when both are undefined."""
    pred, true = _flatten_pair(pred, true, valid)
    tp = int((pred & true).sum())
    fp = int((pred & ~true).sum())
    fn = int((~pred & true).sum())
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom


def _sorted_counts(scores, labels):
    """Cumulative TP/FP at each distinct threshold, descending scores."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    if scores.shape != labels.shape:
        raise DataValidationError("scores and labels differ in length")
    if scores.size == 0:
        raise DataValidationError("no pixels to score")
    if not np.isfinite(scores).all():
        raise DataValidationError("scores contain non-finite values")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # last index of each tie group
    boundary = np.nonzero(np.diff(s))[0]
    boundary = np.concatenate([boundary, [s.size - 1]])
    tps = np.cumsum(y)[boundary].astype(np.float64)
    fps = np.cumsum(~y)[boundary].astype(np.float64)
    return tps, fps, s[boundary]


def roc_curve(scores, labels):
    """(fpr, tpr, thresholds) over all distinct thresholds, ties grouped."""
    tps, fps, thr = _sorted_counts(scores, labels)
    p = tps[-1]
    n = fps[-1]
    if p == 0 or n == 0:
        raise UndefinedMetricError("ROC needs both classes present")
    fpr = np.concatenate([[0.0], fps / n])
    tpr = np.concatenate([[0.0], tps / p])
    thresholds = np.concatenate([[np.inf], thr])
    return fpr, tpr, thresholds


def auroc(scores, labels):
    """Trapezoidal area under the ROC; equals the pairwise ranking statistic
    with ties counted one half."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.trapezoid(tpr, fpr))


def pr_curve(scores, labels):
    """(recall, precision, thresholds) over all distinct thresholds."""
    tps, fps, thr = _sorted_counts(scores, labels)
    p = tps[-1]
    if p == 0:
        raise UndefinedMetricError("PR curve needs at least one positive label")
    precision = tps / (tps + fps)
    recall = tps / p
    return recall, precision, thr


def auprc(scores, labels):
    """Step-wise area under the precision-recall curve."""
    recall, precision, _ = pr_curve(scores, labels)
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def evaluate_pixels(pred_flags, true_flags, scores, valid=None):
    """Bundle the four metrics over pooled pixels into an EvalRecord."""
    pred, true = _flatten_pair(pred_flags, true_flags, valid)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if valid is not None:
        s = s[np.asarray(valid, dtype=bool).ravel()]
    return EvalRecord(
        accuracy=accuracy(pred, true),
        auroc=auroc(s, true),
        auprc=auprc(s, true),
        f1=f1(pred, true),
        n_pixels=int(true.size),
    )


def format_eval_csv_row(method, seed, record):
    vals = record.as_dict()
    return "{},{},{:.6f},{:.6f},{:.6f},{:.6f}".format(
        method, seed, vals["accuracy"], vals["auroc"], vals["auprc"], vals["f1"]
    )


def eval_csv_header():
    return ",".join(EVAL_FIELDS)
