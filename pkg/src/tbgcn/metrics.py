"""Ranking and classification metrics: ROC AUC, average precision, F1."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _sides(pos, neg) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise MetricError("need at least one positive and one negative score")
    return pos, neg


def roc_auc(pos_scores, neg_scores) -> float:
    """Probability that a random positive outscores a random negative, ties counting 1/2.

    Computed from average ranks (Mann-Whitney U).
    """
    pos, neg = _sides(pos_scores, neg_scores)
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def average_precision(pos_scores, neg_scores) -> float:
    """Mean precision at the rank of each positive, scores sorted descending.

    Within a tie, negatives are ranked ahead of positives.
    """
    pos, neg = _sides(pos_scores, neg_scores)
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size, bool), np.zeros(neg.size, bool)])
    # primary key: score descending; secondary: negatives (False) first
    order = np.lexsort((is_pos, -scores))
    hits = is_pos[order]
    ranks = np.flatnonzero(hits) + 1
    precisions = np.arange(1, pos.size + 1) / ranks
    return math.fsum(precisions.tolist()) / pos.size


def f1(predictions, labels, averaging: str = "micro") -> float:
    """Multiclass F1.

    ``micro`` pools all decisions (equal to accuracy for single-label data);
    ``macro`` averages per-class F1 over classes seen in either input.
    """
    pred = np.asarray(predictions).ravel()
    true = np.asarray(labels).ravel()
    if pred.shape != true.shape:
        raise MetricError(f"predictions ({pred.size}) and labels ({true.size}) differ in length")
    if pred.size == 0:
        raise MetricError("f1 of an empty set is undefined")
    if averaging == "micro":
        return float(np.mean(pred == true))
    if averaging != "macro":
        raise MetricError(f"averaging must be micro or macro, got {averaging!r}")
    scores = []
    for c in np.union1d(pred, true):
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores))
