"""Classification metrics."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, ShapeError


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None) -> float:
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if mask is not None:
        logits, labels = logits[mask], labels[mask]
    if labels.size == 0:
        raise DegenerateInputError("accuracy over an empty selection")
    return float((logits.argmax(axis=1) == labels).mean())


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) formulation.

    Ties contribute half through fractional (average) ranks, so the result
    equals the O(n^2) pairwise count exactly.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ in length")
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateInputError("ROC AUC needs both classes present")
    ranks = _fractional_ranks(scores)
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _fractional_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank range."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate([[0], boundaries])
    stops = np.concatenate([boundaries, [values.size]])
    avg = (starts + stops + 1) / 2.0  # mean of ranks start+1 .. stop
    group_of = np.zeros(values.size, dtype=np.int64)
    group_of[starts[1:]] = 1
    group_of = np.cumsum(group_of)
    ranks = np.empty(values.size)
    ranks[order] = avg[group_of]
    return ranks
