"""Evaluation metrics and cross-validation splitting for the sweep commands."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return float((y_true == y_pred).mean()) if y_true.size else 0.0


def f1_binary(y_true, y_pred, positive: int = 1) -> float:
    """F1 of the positive class; 0.0 when undefined."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(((y_pred == positive) & (y_true == positive)).sum())
    fp = int(((y_pred == positive) & (y_true != positive)).sum())
    fn = int(((y_pred != positive) & (y_true == positive)).sum())
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def average_precision(y_true, scores, positive: int = 1) -> float:
    """Area under the precision-recall curve with step interpolation.

    AP = sum over ranked positives of precision-at-that-rank / n_positives;
    ties rank by original index for determinism.
    """
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((y_true == positive).sum())
    if n_pos == 0:
        return 0.0
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = (y_true[order] == positive).astype(np.float64)
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    return float(((cum_hits / ranks) * hits).sum() / n_pos)


def stratified_folds(y, n_folds: int, seed: int, stratify: bool = True) -> list[np.ndarray]:
    """Seeded shuffle then contiguous chunks per class; returns test-index arrays."""
    y = np.asarray(y)
    if n_folds < 2:
        raise InvalidInputError("cross-validation needs folds >= 2")
    if n_folds > y.size:
        raise InvalidInputError(f"cannot make {n_folds} folds from {y.size} rows")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(n_folds)]
    groups = [np.where(y == cls)[0] for cls in np.unique(y)] if stratify else [np.arange(y.size)]
    for idx in groups:
        idx = idx.copy()
        rng.shuffle(idx)
        for f, chunk in enumerate(np.array_split(idx, n_folds)):
            buckets[f].extend(chunk.tolist())
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]


def cv_splits(y, folds: int, repeats: int, seed: int, stratify: bool = True):
    """Yield (repeat, fold, train_idx, test_idx) with per-repeat derived seeds."""
    y = np.asarray(y)
    all_idx = np.arange(y.size)
    for rep in range(repeats):
        test_sets = stratified_folds(y, folds, seed * 1000 + rep, stratify)
        for f, test in enumerate(test_sets):
            train = np.setdiff1d(all_idx, test, assume_unique=False)
            yield rep, f, train, test
