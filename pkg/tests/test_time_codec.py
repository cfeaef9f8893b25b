"""Cosine time encoder and adjacent-snapshot smoothness penalty."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctgn.diffcore import ParamSet, Tensor, grad_check, sum_all, mul
from ctgn.errors import ContractViolation
from ctgn.time_encoding import (
    encode_time,
    encoding_snapshots,
    init_time_encoder,
    smoothness_loss,
)


def encoder(dim=4):
    ps = ParamSet()
    init_time_encoder(ps, dim)
    return ps


def test_zero_delta_gives_scaled_cos_of_phase():
    ps = encoder(dim=5)
    ps.replace("time_enc.b", np.array([0.0, 0.5, 1.0, -0.7, 2.0]))
    enc = encode_time(0.0, ps["time_enc.omega"], ps["time_enc.b"])
    want = np.sqrt(1 / 5) * np.cos(ps["time_enc.b"].data)
    assert np.allclose(enc.data[0], want, atol=1e-15)


def test_outputs_bounded_by_scale():
    ps = encoder(dim=7)
    rng = np.random.default_rng(0)
    ps.replace("time_enc.omega", rng.normal(size=7))
    ps.replace("time_enc.b", rng.normal(size=7))
    enc = encode_time(rng.uniform(0, 1e6, size=200),
                      ps["time_enc.omega"], ps["time_enc.b"])
    bound = np.sqrt(1 / 7)
    assert np.all(np.abs(enc.data) <= bound + 1e-15)


def test_analytic_two_dim_example():
    ps = ParamSet()
    ps.add("omega", np.array([1.0, 2.0]))
    ps.add("b", np.zeros(2))
    enc = encode_time(np.pi, ps["omega"], ps["b"])
    assert enc.data[0, 0] == pytest.approx(-np.sqrt(0.5), abs=1e-12)
    assert enc.data[0, 1] == pytest.approx(+np.sqrt(0.5), abs=1e-12)


def test_negative_delta_rejected():
    ps = encoder()
    with pytest.raises(ContractViolation):
        encode_time(-1.0, ps["time_enc.omega"], ps["time_enc.b"])
    with pytest.raises(ContractViolation):
        encode_time(np.inf, ps["time_enc.omega"], ps["time_enc.b"])


def test_encoder_grad_check():
    ps = encoder(dim=6)
    rng = np.random.default_rng(1)
    ps.replace("time_enc.omega", rng.uniform(0.01, 2.0, size=6))
    ps.replace("time_enc.b", rng.normal(size=6))
    deltas = np.array([0.0, 0.3, 1.7, 4.0, 9.5])
    weights = Tensor(rng.normal(size=(5, 6)))

    def loss():
        return sum_all(mul(encode_time(deltas, ps["time_enc.omega"],
                                       ps["time_enc.b"]), weights))

    assert grad_check(loss, ps, tolerance=1e-4).passed


def test_snapshots_sorted_unique():
    ps = encoder(dim=3)
    snaps = encoding_snapshots(np.array([5.0, 1.0, 5.0, 3.0]),
                               ps["time_enc.omega"], ps["time_enc.b"])
    assert snaps.data.shape == (3, 3)


def test_smoothness_identical_vectors_zero():
    snaps = Tensor(np.ones((2, 4)))
    assert smoothness_loss(snaps).item() == 0.0


def test_smoothness_hand_computed_euclidean():
    snaps = Tensor(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert smoothness_loss(snaps).item() == pytest.approx(5.0, abs=1e-5)


def test_smoothness_single_snapshot_zero():
    assert smoothness_loss(Tensor(np.array([[1.0, 2.0]]))).item() == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), rows=st.integers(2, 8))
def test_smoothness_reversal_invariant_and_nonnegative(seed, rows):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(rows, 3))
    fwd = smoothness_loss(Tensor(w)).item()
    rev = smoothness_loss(Tensor(w[::-1].copy())).item()
    assert fwd >= 0.0
    assert fwd == pytest.approx(rev, rel=1e-12, abs=1e-12)


def test_smoothness_interior_reorder_changes_value():
    w = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [6.0, 0.0]])
    base = smoothness_loss(Tensor(w)).item()
    swapped = smoothness_loss(Tensor(w[[0, 2, 1, 3]])).item()
    assert abs(base - swapped) > 1e-6


def test_smoothness_zero_iff_identical():
    w = np.ones((4, 3))
    assert smoothness_loss(Tensor(w)).item() == 0.0
    w2 = w.copy()
    w2[2, 1] += 1e-3
    assert smoothness_loss(Tensor(w2)).item() > 1e-4


def test_smoothness_gradient_defined_at_zero_difference():
    ps = encoder(dim=4)

    def loss():
        snaps = encode_time(np.array([3.0, 3.0 + 1e-15, 7.0]),
                            ps["time_enc.omega"], ps["time_enc.b"])
        return smoothness_loss(snaps)

    report = grad_check(loss, ps, tolerance=1e-3)
    assert report.passed
