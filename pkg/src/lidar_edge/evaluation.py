"""Pixel-level evaluation: confusion counts, P/R/F1, ROC, thresholds,
and the multi-detector comparison table.

Metrics are micro-averaged: counts are pooled over all pixels of a
split before any ratio is taken. The default match rule is strict
per-pixel; a Chebyshev tolerance with greedy one-to-one matching is
available for robustness studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .imaging import as_edge_map, as_prob_map


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    name: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float = 0.5


def confusion(pred: np.ndarray, truth: np.ndarray,
              tolerance: int = 0) -> ConfusionMatrix:
    """Count pixel agreement between a predicted and true edge map.

    tolerance 0 compares per pixel. tolerance r > 0 matches predicted
    edge pixels greedily (row-major) to unmatched truth edges within
    Chebyshev distance r; unmatched predictions are FP, unmatched
    truths FN, everything else TN.
    """
    pred = as_edge_map(pred)
    truth = as_edge_map(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"pred {pred.shape} vs truth {truth.shape}")
    if tolerance < 0:
        raise ParameterError(f"tolerance must be >= 0, got {tolerance}")
    if tolerance == 0:
        p = pred == 1.0
        t = truth == 1.0
        tp = int(np.count_nonzero(p & t))
        fp = int(np.count_nonzero(p & ~t))
        fn = int(np.count_nonzero(~p & t))
        tn = int(np.count_nonzero(~p & ~t))
        return ConfusionMatrix(tp, fp, fn, tn)
    truth_pts = list(zip(*np.nonzero(truth == 1.0)))
    unmatched = set(truth_pts)
    tp = fp = 0
    for y, x in zip(*np.nonzero(pred == 1.0)):
        # row-major-first unmatched truth pixel inside the window
        hit = None
        for ty, tx in truth_pts:
            if (ty, tx) in unmatched and abs(ty - y) <= tolerance and abs(tx - x) <= tolerance:
                hit = (ty, tx)
                break
        if hit is None:
            fp += 1
        else:
            unmatched.discard(hit)
            tp += 1
    fn = len(unmatched)
    tn = pred.size - tp - fp - fn
    return ConfusionMatrix(tp, fp, fn, tn)


def metrics(cm: ConfusionMatrix, name: str = "", threshold: float = 0.5) -> MetricsReport:
    """Accuracy/precision/recall/F1 with zero-denominator terms set to 0."""
    if cm.total == 0:
        raise ParameterError("cannot compute metrics over zero pixels")
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = (2.0 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return MetricsReport(name=name, accuracy=(cm.tp + cm.tn) / cm.total,
                         precision=precision, recall=recall, f1=f1,
                         threshold=threshold)


def _pooled_counts(probs: list, truths: list, threshold: float) -> ConfusionMatrix:
    cm = ConfusionMatrix()
    for prob, truth in zip(probs, truths):
        cm = cm + confusion((prob >= threshold).astype(np.float64), truth)
    return cm


def _check_aligned(probs: list, truths: list) -> None:
    if len(probs) != len(truths) or not probs:
        raise DimensionError("probability and truth sets are misaligned or empty")
    for p, t in zip(probs, truths):
        if as_prob_map(p).shape != as_edge_map(t).shape:
            raise DimensionError(f"map shapes differ: {p.shape} vs {t.shape}")


def roc(probs: list, truths: list, n_thresholds: int = 51) -> list[tuple[float, float, float]]:
    """(threshold, TPR, FPR) at n equally spaced thresholds, descending,
    with counts pooled over the whole set."""
    _check_aligned(probs, truths)
    if n_thresholds < 2:
        raise ParameterError("need at least 2 thresholds")
    curve = []
    for t in np.linspace(1.0, 0.0, n_thresholds):
        cm = _pooled_counts(probs, truths, float(t))
        tpr = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
        fpr = cm.fp / (cm.fp + cm.tn) if cm.fp + cm.tn else 0.0
        curve.append((float(t), tpr, fpr))
    return curve


def best_f1_threshold(probs: list, truths: list,
                      n_thresholds: int = 51) -> tuple[float, float]:
    """Threshold on the same grid as roc() maximizing pooled F1;
    ties go to the smaller threshold."""
    _check_aligned(probs, truths)
    if n_thresholds < 2:
        raise ParameterError("need at least 2 thresholds")
    best_t, best_f1 = 0.0, -1.0
    for t in np.linspace(0.0, 1.0, n_thresholds):
        f1 = metrics(_pooled_counts(probs, truths, float(t))).f1
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


def compare_detectors(samples: list, detectors: list,
                      tolerance: int = 0) -> list[MetricsReport]:
    """Evaluate detectors over (image, truth) samples with pooled counts.

    Each detector is (name, fn, threshold) where fn(img) returns a
    binary edge map and threshold records the setting used (for the
    report only).
    """
    if not detectors:
        raise ParameterError("detector list is empty")
    if not samples:
        raise ParameterError("no samples to evaluate")
    reports = []
    for name, fn, threshold in detectors:
        cm = ConfusionMatrix()
        for img, truth in samples:
            cm = cm + confusion(fn(img), truth, tolerance=tolerance)
        reports.append(metrics(cm, name=name, threshold=threshold))
    return reports


def comparison_csv(reports: list[MetricsReport]) -> str:
    lines = ["algorithm,accuracy,precision,recall,f1,threshold"]
    for r in reports:
        lines.append(f"{r.name},{r.accuracy:.4f},{r.precision:.4f},"
                     f"{r.recall:.4f},{r.f1:.4f},{r.threshold:.4f}")
    return "\n".join(lines) + "\n"


def comparison_table(reports: list[MetricsReport]) -> str:
    """Aligned text table in the order Algorithm, Accuracy, Precision,
    Recall, F1-score."""
    header = ["Algorithm", "Accuracy", "Precision", "Recall", "F1-score"]
    rows = [[r.name, f"{r.accuracy:.4f}", f"{r.precision:.4f}",
             f"{r.recall:.4f}", f"{r.f1:.4f}"] for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*header)]
    out += [fmt.format(*row) for row in rows]
    return "\n".join(out) + "\n"
