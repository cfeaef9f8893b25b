"""Ranking metrics: average precision and ROC AUC, explicit about ties."""

import numpy as np

from .errors import ContractViolation


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape or scores.size == 0:
        raise ContractViolation("scores and labels must be equal-length and non-empty")
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractViolation("labels must be 0/1")
    return scores, labels


def average_precision(scores, labels) -> float:
    """Step-sum AP: sum over ranks k of precision@k * recall increment.

    Ranking is by score descending with ties broken by input order (stable
    sort), so results are reproducible bit-for-bit against the brute-force
    oracle under identical ordering.
    """
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ContractViolation("average_precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    cum_pos = np.cumsum(ranked)
    precision = cum_pos / np.arange(1, scores.size + 1)
    return float((precision * ranked).sum() / n_pos)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties 1/2."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractViolation("roc_auc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
