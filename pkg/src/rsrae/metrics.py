"""ROC AUC and average precision with outliers as the positive class.

Scores follow the "higher = more anomalous" convention. Tied scores are
treated as a single threshold: AUC counts a tie as half a win, AP uses the
step (non-interpolated) precision-recall sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _validate(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if s.size == 0:
        raise ValueError("empty input")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (inlier) or 1 (outlier)")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y.astype(np.int64)


def _sweep(s, y):
    """Cumulative (tp, fp) at each distinct threshold, descending."""
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return tp, fp, s[last]


def roc_curve(scores, labels):
    """(fpr, tpr, thresholds); point k is the rate of ``score >= thresholds[k]``.

    A leading (0, 0) point with threshold +inf is included.
    """
    s, y = _validate(scores, labels)
    P = y.sum()
    N = y.size - P
    if P == 0 or N == 0:
        raise ValueError("ROC needs both classes present")
    tp, fp, thr = _sweep(s, y)
    return np.r_[0.0, fp / N], np.r_[0.0, tp / P], np.r_[np.inf, thr]


def roc_auc(scores, labels) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def average_precision(scores, labels) -> float:
    s, y = _validate(scores, labels)
    P = y.sum()
    if P == 0:
        raise ValueError("average precision needs at least one positive")
    tp, fp, _ = _sweep(s, y)
    recall = tp / P
    precision = tp / (tp + fp)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def threshold_labels(scores, threshold: float) -> np.ndarray:
    """1 (outlier) where score > threshold, else 0."""
    return (np.asarray(scores, dtype=np.float64) > threshold).astype(np.int64)


@dataclass
class ScoreReport:
    scores: np.ndarray
    labels: np.ndarray | None = None
    auc: float | None = None
    ap: float | None = None
    threshold: float | None = None
    predicted: np.ndarray | None = None
    seed: int | None = None

    @classmethod
    def build(cls, scores, labels=None, threshold=None, seed=None) -> "ScoreReport":
        scores = np.asarray(scores, dtype=np.float64)
        rep = cls(scores, None if labels is None else np.asarray(labels, dtype=np.int64), seed=seed)
        if rep.labels is not None:
            if 0 < rep.labels.sum() < rep.labels.size:
                rep.auc = roc_auc(scores, rep.labels)
            if rep.labels.sum() > 0:
                rep.ap = average_precision(scores, rep.labels)
        if threshold is not None:
            rep.threshold = float(threshold)
            rep.predicted = threshold_labels(scores, threshold)
        return rep

    def to_json(self) -> dict:
        return {
            "auc": self.auc,
            "ap": self.ap,
            "n": int(self.scores.size),
            "n_outliers": None if self.labels is None else int(self.labels.sum()),
            "seed": self.seed,
        }
