"""Classification metrics: top-k, mean per-class accuracy, mAP, ROC AUC, d-prime."""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Percentage of rows whose label is among the ``k`` largest scores (ties go to the lower class index)."""
    logits = np.asarray(logits)
    labels = np.asarray(labels).reshape(-1)
    if k < 1 or k > logits.shape[1]:
        raise ValueError(f"k must lie in [1, {logits.shape[1]}], got {k}")
    if labels.size == 0:
        return 0.0
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    hits = (order == labels[:, None]).any(axis=1)
    return 100.0 * hits.mean()


def mean_per_class_accuracy(preds: np.ndarray, labels: np.ndarray, num_classes: Optional[int] = None) -> Tuple[float, int]:
    """Unweighted mean of per-class recall, in percent, over classes present in ``labels``.

    Returns ``(mpca, n_excluded)`` where ``n_excluded`` counts classes with no samples.
    """
    preds = np.asarray(preds).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    k = num_classes if num_classes is not None else int(max(labels.max(initial=-1), preds.max(initial=-1))) + 1
    recalls = []
    for c in range(k):
        mask = labels == c
        if mask.any():
            recalls.append((preds[mask] == c).mean())
    if not recalls:
        return 0.0, k
    return 100.0 * float(np.mean(recalls)), k - len(recalls)


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """``sum_k Precision@k * hit_k / n_pos`` over the ranking by descending score."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = positives.sum()
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    precision_at_k = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float((precision_at_k * hits).sum() / n_pos)


def mean_average_precision(scores: np.ndarray, labels: np.ndarray) -> Tuple[float, int]:
    """Class-averaged one-vs-rest AP. Returns ``(mAP, n_excluded)``; classes without positives are excluded."""
    scores = np.asarray(scores)
    labels = np.asarray(labels).reshape(-1)
    aps, excluded = [], 0
    for c in range(scores.shape[1]):
        pos = labels == c
        if not pos.any():
            excluded += 1
            continue
        aps.append(average_precision(scores[:, c], pos))
    return (float(np.mean(aps)) if aps else 0.0), excluded


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Mann-Whitney U / (n_pos * n_neg), ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> Tuple[float, int]:
    """Macro one-vs-rest AUC. Returns ``(mAUC, n_excluded)``; single-class columns are excluded."""
    scores = np.asarray(scores)
    labels = np.asarray(labels).reshape(-1)
    aucs, excluded = [], 0
    for c in range(scores.shape[1]):
        pos = labels == c
        if pos.all() or not pos.any():
            excluded += 1
            continue
        aucs.append(binary_auc(scores[:, c], pos))
    return (float(np.mean(aucs)) if aucs else float("nan")), excluded


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF for ``0 < p < 1``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile needs 0 < p < 1, got {p}")
    return float(ndtri(p))


def d_prime(auc: float) -> float:
    """``sqrt(2) * Phi^-1(auc)``."""
    if not 0.0 < auc < 1.0:
        raise ValueError(f"d_prime needs 0 < auc < 1, got {auc}")
    return math.sqrt(2.0) * normal_quantile(auc)
