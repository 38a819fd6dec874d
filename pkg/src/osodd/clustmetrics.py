"""Clustering quality: Hungarian accuracy, NMI and purity.

All three treat labels as opaque identifiers; they are re-indexed densely
before use, so any bijective relabelling leaves the scores unchanged.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


def _as_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    return arr


def contingency(pred, gt) -> np.ndarray:
    """Count matrix with predicted clusters as rows and classes as columns."""
    pred = _as_labels(pred)
    gt = _as_labels(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label lists differ in length: {pred.size} vs {gt.size}")
    if pred.size == 0:
        raise ValueError("need at least one labelled sample")
    _, p_idx = np.unique(pred, return_inverse=True)
    _, g_idx = np.unique(gt, return_inverse=True)
    table = np.zeros((p_idx.max() + 1, g_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (p_idx, g_idx), 1)
    return table


def hungarian_assign(cost) -> list[tuple[int, int]]:
    """Min-cost assignment on ``cost`` zero-padded to a square matrix.

    Only pairs that fall inside the original matrix are returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    r, c = cost.shape
    n = max(r, c)
    padded = np.zeros((n, n))
    padded[:r, :c] = cost
    rows, cols = linear_sum_assignment(padded)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if i < r and j < c]


def clustering_accuracy(pred, gt) -> float:
    table = contingency(pred, gt)
    pairs = hungarian_assign(-table)
    matched = sum(int(table[i, j]) for i, j in pairs)
    return matched / int(table.sum())


def _entropy(counts: np.ndarray, n: int) -> float:
    return -math.fsum(c / n * math.log(c / n) for c in counts.ravel() if c > 0)


def mutual_information(pred, gt) -> float:
    table = contingency(pred, gt)
    n = int(table.sum())
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    terms = []
    for i, j in zip(*np.nonzero(table)):
        pij = table[i, j] / n
        terms.append(pij * math.log(table[i, j] * n / (rows[i] * cols[j])))
    return math.fsum(terms)


def nmi(pred, gt) -> float:
    """Mutual information over the mean of the two partition entropies.

    Probabilities are empirical frequencies and logs are natural. Two
    single-cluster partitions score 1.0; zero mutual information scores 0.0.
    """
    table = contingency(pred, gt)
    n = int(table.sum())
    h_pred = _entropy(table.sum(axis=1), n)
    h_gt = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 and h_gt == 0.0:
        return 1.0
    mi = mutual_information(pred, gt)
    if mi <= 0.0:
        return 0.0
    return min(1.0, mi / ((h_pred + h_gt) / 2.0))


def purity(pred, gt) -> float:
    table = contingency(pred, gt)
    return int(table.max(axis=1).sum()) / int(table.sum())


def cluster_scores(pred: Sequence[int], gt: Sequence[int]) -> dict[str, float]:
    return {"acc": clustering_accuracy(pred, gt), "nmi": nmi(pred, gt), "purity": purity(pred, gt)}
