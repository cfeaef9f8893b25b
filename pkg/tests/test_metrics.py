"""Ranking metrics against O(n^2) brute-force oracles, ties included."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctgn.errors import ContractViolation
from ctgn.metrics import average_precision, roc_auc


def ap_oracle(scores, labels):
    """Brute force: precision at every rank recomputed by rescanning."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(labels)
    total = 0.0
    for k in range(1, len(order) + 1):
        if labels[order[k - 1]] == 1:
            hits = sum(1 for j in order[:k] if labels[j] == 1)
            total += hits / k
    return total / n_pos


def auc_oracle(scores, labels):
    """All positive/negative pairs, ties counted half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_perfect_separation():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0])
    assert average_precision(scores, labels) == 1.0
    assert roc_auc(scores, labels) == 1.0


def test_hand_computed_ap_example():
    ap = average_precision(np.array([0.9, 0.8, 0.7]), np.array([0, 1, 1]))
    assert ap == pytest.approx(0.5833333333, abs=1e-9)


def test_all_scores_equal_auc_half():
    assert roc_auc(np.full(10, 0.4), np.array([1, 0] * 5)) == pytest.approx(0.5)


def test_ap_against_oracle_200_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        # quantized scores force ties through the stable-order path
        scores = np.round(rng.random(n), 1)
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0:
            labels[int(rng.integers(0, n))] = 1
        assert average_precision(scores, labels) == pytest.approx(
            ap_oracle(scores.tolist(), labels.tolist()), abs=1e-9)


def test_auc_against_oracle_200_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        scores = np.round(rng.random(n), 1)
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0:
            labels[int(rng.integers(0, n))] = 1
        if labels.sum() == n:
            labels[int(rng.integers(0, n))] = 0
        assert roc_auc(scores, labels) == pytest.approx(
            auc_oracle(scores.tolist(), labels.tolist()), abs=1e-9)


def test_error_conditions():
    with pytest.raises(ContractViolation):
        average_precision(np.array([0.5, 0.4]), np.array([0, 0]))
    with pytest.raises(ContractViolation):
        roc_auc(np.array([0.5, 0.4]), np.array([1, 1]))
    with pytest.raises(ContractViolation):
        average_precision(np.array([]), np.array([]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2000),
       shift=st.floats(-3, 3),
       scale=st.floats(0.1, 5))
def test_metrics_invariant_under_monotone_transforms(seed, shift, scale):
    rng = np.random.default_rng(seed)
    n = 30
    scores = rng.random(n)
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 1, 0
    transformed = np.exp(scale * scores) + shift  # strictly monotone
    assert average_precision(scores, labels) == pytest.approx(
        average_precision(transformed, labels), abs=1e-12)
    assert roc_auc(scores, labels) == pytest.approx(
        roc_auc(transformed, labels), abs=1e-12)
