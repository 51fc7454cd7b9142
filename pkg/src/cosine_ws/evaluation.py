"""Accuracy, micro-F1 without an "others" class, confidence bins and a
Welch two-sample t-test."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .objectives import sample_weight


@dataclass
class EvalReport:
    accuracy: float
    micro_f1: float | None
    n: int
    confidence_bins: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def accuracy(preds, golds) -> float:
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    if preds.shape != golds.shape:
        raise ValueError("preds and golds differ in length")
    if preds.size == 0:
        raise ValueError("accuracy of an empty sample")
    return float(np.mean(preds == golds))


def micro_f1_excluding(preds, golds, excluded: int | None) -> float:
    """Micro-F1 pooled over every class except ``excluded``.

    Predicting the excluded class for a regular gold is a false negative;
    predicting a regular class for an excluded gold is a false positive.
    """
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    if preds.shape != golds.shape:
        raise ValueError("preds and golds differ in length")
    pred_pos = preds != excluded
    gold_pos = golds != excluded
    tp = int(np.sum(pred_pos & gold_pos & (preds == golds)))
    fp = int(np.sum(pred_pos)) - tp
    fn = int(np.sum(gold_pos)) - tp
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def confidence_bins(probs, golds, n_bins: int = 10) -> list[dict]:
    """Bucket samples by confidence weight into equal-width bins on [0, 1].

    Bins are left-closed; the top bin is closed on both ends.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    golds = np.asarray(golds)
    w = np.atleast_1d(sample_weight(probs))
    which = np.minimum((w * n_bins).astype(int), n_bins - 1)
    correct = np.argmax(probs, axis=1) == golds
    out = []
    for b in range(n_bins):
        m = which == b
        count = int(m.sum())
        out.append({"low": b / n_bins, "high": (b + 1) / n_bins, "count": count,
                    "accuracy": float(correct[m].mean()) if count else None})
    return out


def evaluate(probs, golds, others_index: int | None = None, n_bins: int = 10) -> EvalReport:
    preds = np.argmax(probs, axis=1)
    f1 = micro_f1_excluding(preds, golds, others_index) if others_index is not None else None
    return EvalReport(accuracy(preds, golds), f1, int(len(golds)),
                      confidence_bins(probs, golds, n_bins))


def write_bins_csv(bins, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["low", "high", "count", "accuracy"])
        for b in bins:
            w.writerow([b["low"], b["high"], b["count"], "" if b["accuracy"] is None else b["accuracy"]])


def two_sample_t_test(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t-test, two-sided.

    Returns ``(t, p)``.  When both samples have zero variance the
    statistic is 0 with p = 1 for equal means and infinite with p = 0
    otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 values")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, 1.0
        return math.copysign(math.inf, ma - mb), 0.0
    t = (ma - mb) / math.sqrt(se2)
    # Welch-Satterthwaite, written with variance shares so tiny variances
    # do not underflow when squared
    ra, rb = va / se2, vb / se2
    df = 1.0 / (ra * ra / (a.size - 1) + rb * rb / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(t), float(min(p, 1.0))
