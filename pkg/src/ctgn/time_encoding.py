"""Functional time encoding and the adjacent-timestamp smoothness penalty."""

import numpy as np

from .diffcore import (
    ParamSet,
    Tensor,
    add_const,
    gather_rows,
    row_sum,
    sqrt,
    sub,
    sum_all,
    time_encode_core,
)
from .errors import ContractViolation

# keeps the Euclidean norm differentiable at a zero difference
NORM_EPS = 1e-12


def init_time_encoder(ps: ParamSet, dim: int, prefix: str = "time_enc"):
    """Learnable frequencies/phases. Frequencies start geometric (1 .. 1e-9):
    elapsed times range from seconds to years, and a multi-scale basis has to
    cover that span before training refines it."""
    if dim < 1:
        raise ContractViolation("time encoding dim must be >= 1")
    omega = 10.0 ** (-np.linspace(0, 9, num=dim))
    ps.add(f"{prefix}.omega", omega)
    ps.add(f"{prefix}.b", np.zeros(dim))


def encode_time(deltas, omega: Tensor, b: Tensor) -> Tensor:
    """phi(delta)_k = sqrt(1/d) * cos(omega_k * delta + b_k), rows per delta."""
    deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
    if not np.all(np.isfinite(deltas)):
        raise ContractViolation("encode_time: elapsed times must be finite")
    if np.any(deltas < 0):
        raise ContractViolation("encode_time: negative elapsed time")
    return time_encode_core(deltas, omega, b)


def encoding_snapshots(timestamps, omega: Tensor, b: Tensor) -> Tensor:
    """Encodings at the sorted unique timestamps of a batch, one row each."""
    ts = np.unique(np.asarray(timestamps, dtype=np.float64))
    return encode_time(ts, omega, b)


def smoothness_loss(snapshots: Tensor) -> Tensor:
    """Sum of Euclidean distances between consecutive snapshot rows.

    Uses sqrt(||d||^2 + eps) - sqrt(eps) per pair: exactly zero for identical
    rows, differentiable everywhere, within 1e-6 of the plain norm otherwise.
    """
    if snapshots.data.ndim != 2:
        raise ContractViolation("smoothness_loss wants a 2-D snapshot matrix")
    n = snapshots.data.shape[0]
    if n < 2:
        return Tensor(np.zeros(()))
    head = gather_rows(snapshots, np.arange(n - 1))
    tail = gather_rows(snapshots, np.arange(1, n))
    diff = sub(tail, head)
    norms = sqrt(add_const(row_sum(diff * diff), NORM_EPS))
    return sum_all(add_const(norms, -np.sqrt(NORM_EPS)))
