"""Reverse-mode autodiff over dense float64 numpy arrays.

Small tape-based engine: every operation records its parents and a backward
closure; ``backward()`` walks the tape in reverse topological order. The op
set is deliberately minimal — 2-D matmul, row-bias addition, elementwise
maps, column concat/slice, row gather/scatter, segment attention primitives
and a fused time encoding — because that is all the model needs, and a small
surface keeps the finite-difference audit (gradcheck) tractable.

Broadcasting is restricted to matrix + row-bias and per-row constant scaling;
anything fancier raises ContractViolation rather than silently mis-reducing
gradients.

Tensors are value-immutable by convention: no code in this package writes to
``.data`` after construction (the optimizer rebinds fresh tensors instead).
``.grad`` is backward-pass bookkeeping, populated only for leaves.
"""

import os
from contextlib import contextmanager

import numpy as np

from .. import kernels
from ..errors import ContractViolation, NumericError

_GRAD_ENABLED = True
_CHECK_FINITE = os.environ.get("CTGN_CHECK_FINITE", "0") == "1"


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation, finite diffs)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd", "op")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bwd = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() on tensor of shape {self.data.shape}")
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Accumulate gradients of self (a scalar) into every reachable leaf."""
        if self.data.shape != ():
            raise ContractViolation(
                f"backward() needs a scalar, got shape {self.data.shape}")
        if not self.requires_grad:
            raise ContractViolation("backward() on a tensor with no tape")
        order = _topo_order(self)
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node._bwd is None:
                continue
            grads = node._bwd(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g
            # release tape memory as we go; leaves keep their grads
            node._bwd = None
            node._parents = ()
            node.grad = None


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _result(data, parents, bwd, op):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
        out.op = op
    if _CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise NumericError(f"non-finite values produced by op '{op}'")
    return out


def _ensure_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by op '{op}'")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ContractViolation(
            f"matmul shapes {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data
    _ensure_finite(out, "matmul")

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _result(out, (a, b), bwd, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape == b.data.shape:
        def bwd(g):
            return g, g

        return _result(a.data + b.data, (a, b), bwd, "add")
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        # matrix + row bias
        def bwd(g):
            return g, g.sum(axis=0)

        return _result(a.data + b.data[None, :], (a, b), bwd, "add_bias")
    raise ContractViolation(f"add shapes {a.data.shape} + {b.data.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape == b.data.shape:
        def bwd(g):
            return g, -g

        return _result(a.data - b.data, (a, b), bwd, "sub")
    raise ContractViolation(f"sub shapes {a.data.shape} - {b.data.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ContractViolation(f"mul shapes {a.data.shape} * {b.data.shape}")

    def bwd(g):
        return g * b.data, g * a.data

    return _result(a.data * b.data, (a, b), bwd, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        return (g * c,)

    return _result(a.data * c, (a,), bwd, "scale")


def add_const(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        return (g,)

    return _result(a.data + float(c), (a,), bwd, "add_const")


def scale_rows(a: Tensor, v: np.ndarray) -> Tensor:
    """Multiply each row of a 2-D tensor by a constant per-row factor."""
    v = np.asarray(v, dtype=np.float64)
    if a.data.ndim != 2 or v.shape != (a.data.shape[0],):
        raise ContractViolation(
            f"scale_rows shapes {a.data.shape} by {v.shape}")
    col = v[:, None]

    def bwd(g):
        return (g * col,)

    return _result(a.data * col, (a,), bwd, "scale_rows")


def mul_const(a: Tensor, arr: np.ndarray) -> Tensor:
    """Elementwise multiply by a constant array of the same shape."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != a.data.shape:
        raise ContractViolation(f"mul_const shapes {a.data.shape} * {arr.shape}")

    def bwd(g):
        return (g * arr,)

    return _result(a.data * arr, (a,), bwd, "mul_const")


# ---------------------------------------------------------------------------
# elementwise maps


def sigmoid(a: Tensor) -> Tensor:
    y = kernels.sigmoid_fwd(a.data)

    def bwd(g):
        return (kernels.sigmoid_bwd(y, g),)

    return _result(y, (a,), bwd, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    y = kernels.tanh_fwd(a.data)

    def bwd(g):
        return (kernels.tanh_bwd(y, g),)

    return _result(y, (a,), bwd, "tanh")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    _ensure_finite(y, "exp")

    def bwd(g):
        return (g * y,)

    return _result(y, (a,), bwd, "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("non-positive input to op 'log'")
    y = np.log(a.data)

    def bwd(g):
        return (g / a.data,)

    return _result(y, (a,), bwd, "log")


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise NumericError("negative input to op 'sqrt'")
    y = np.sqrt(a.data)

    def bwd(g):
        return (g * 0.5 / y,)

    return _result(y, (a,), bwd, "sqrt")


# ---------------------------------------------------------------------------
# shape ops


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    if not parts or any(p.data.ndim != 2 for p in parts):
        raise ContractViolation("concat_cols wants a non-empty list of 2-D tensors")
    rows = parts[0].data.shape[0]
    if any(p.data.shape[0] != rows for p in parts):
        raise ContractViolation("concat_cols row mismatch")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=1),
                   tuple(parts), bwd, "concat_cols")


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= j0 <= j1 <= a.data.shape[1]):
        raise ContractViolation(f"slice_cols [{j0}:{j1}] of {a.data.shape}")

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, j0:j1] = g
        return (full,)

    return _result(a.data[:, j0:j1].copy(), (a,), bwd, "slice_cols")


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2 or idx.ndim != 1:
        raise ContractViolation("gather_rows wants a 2-D source and 1-D index")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ContractViolation("gather_rows index out of range")

    def bwd(g):
        acc = np.zeros_like(a.data)
        kernels.scatter_add_rows(acc, idx, np.ascontiguousarray(g))
        return (acc,)

    return _result(a.data[idx], (a,), bwd, "gather_rows")


def scatter_rows(base: Tensor, idx: np.ndarray, rows: Tensor) -> Tensor:
    """Copy of base with rows[i] written at idx[i]; idx must be unique."""
    idx = np.asarray(idx, dtype=np.int64)
    if base.data.ndim != 2 or rows.data.ndim != 2:
        raise ContractViolation("scatter_rows wants 2-D tensors")
    if rows.data.shape != (idx.shape[0], base.data.shape[1]):
        raise ContractViolation("scatter_rows row-block shape mismatch")
    if np.unique(idx).size != idx.size:
        raise ContractViolation("scatter_rows requires unique indices")
    out = base.data.copy()
    out[idx] = rows.data

    def bwd(g):
        g_base = g.copy()
        g_base[idx] = 0.0
        return g_base, g[idx]

    return _result(out, (base, rows), bwd, "scatter_rows")


def where_rows(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Row-wise select: rows where cond is True come from a, else from b."""
    cond = np.asarray(cond, dtype=bool)
    if a.data.shape != b.data.shape or a.data.ndim != 2 or cond.shape != (a.data.shape[0],):
        raise ContractViolation("where_rows shape mismatch")
    col = cond[:, None]
    out = np.where(col, a.data, b.data)

    def bwd(g):
        return np.where(col, g, 0.0), np.where(col, 0.0, g)

    return _result(out, (a, b), bwd, "where_rows")


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        return (np.full_like(a.data, float(g)),)

    return _result(a.data.sum(), (a,), bwd, "sum_all")


def mean_all(a: Tensor) -> Tensor:
    inv = 1.0 / a.data.size

    def bwd(g):
        return (np.full_like(a.data, float(g) * inv),)

    return _result(a.data.mean(), (a,), bwd, "mean_all")


def row_sum(a: Tensor) -> Tensor:
    """Sum each row of a 2-D tensor -> 1-D."""
    if a.data.ndim != 2:
        raise ContractViolation("row_sum wants a 2-D tensor")

    def bwd(g):
        return (np.repeat(g[:, None], a.data.shape[1], axis=1),)

    return _result(a.data.sum(axis=1), (a,), bwd, "row_sum")


def sum_list(parts) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ContractViolation("sum_list of nothing")
    out = parts[0]
    for p in parts[1:]:
        out = add(out, p)
    return out


# ---------------------------------------------------------------------------
# attention / encoding primitives


def masked_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    mask = np.ascontiguousarray(mask, dtype=bool)
    if logits.data.ndim != 2 or mask.shape != logits.data.shape:
        raise ContractViolation("masked_softmax shape mismatch")
    if not mask.any(axis=1).all():
        raise ContractViolation("masked_softmax: a row has no unmasked entry")
    w = kernels.masked_softmax_fwd(np.ascontiguousarray(logits.data), mask)

    def bwd(g):
        return (kernels.masked_softmax_bwd(w, np.ascontiguousarray(g)),)

    return _result(w, (logits,), bwd, "masked_softmax")


def softmax(logits: Tensor) -> Tensor:
    return masked_softmax(logits, np.ones(logits.data.shape, dtype=bool))


def segment_scores(q: Tensor, k: Tensor, n: int) -> Tensor:
    """Per-segment dot products: q (B,d) against k (B*n,d) -> (B,n)."""
    B, d = q.data.shape
    if k.data.shape != (B * n, d):
        raise ContractViolation(
            f"segment_scores: k shape {k.data.shape} vs ({B * n}, {d})")
    qd = np.ascontiguousarray(q.data)
    kd = np.ascontiguousarray(k.data)
    out = kernels.segment_scores_fwd(qd, kd, n)

    def bwd(g):
        return kernels.segment_scores_bwd(qd, kd, np.ascontiguousarray(g), n)

    return _result(out, (q, k), bwd, "segment_scores")


def segment_mix(w: Tensor, v: Tensor, n: int) -> Tensor:
    """Per-segment weighted sum: w (B,n) over v (B*n,d) -> (B,d)."""
    B = w.data.shape[0]
    if w.data.shape != (B, n) or v.data.ndim != 2 or v.data.shape[0] != B * n:
        raise ContractViolation(
            f"segment_mix: shapes {w.data.shape} / {v.data.shape}")
    wd = np.ascontiguousarray(w.data)
    vd = np.ascontiguousarray(v.data)
    out = kernels.segment_mix_fwd(wd, vd, n)

    def bwd(g):
        return kernels.segment_mix_bwd(wd, vd, np.ascontiguousarray(g), n)

    return _result(out, (w, v), bwd, "segment_mix")


def time_encode_core(delta: np.ndarray, omega: Tensor, b: Tensor) -> Tensor:
    """cos-basis time features: scale*cos(delta_i*omega_k + b_k), scale=1/sqrt(d)."""
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    if delta.ndim != 1 or omega.data.ndim != 1 or omega.data.shape != b.data.shape:
        raise ContractViolation("time_encode_core shape mismatch")
    sc = 1.0 / np.sqrt(omega.data.shape[0])
    om = np.ascontiguousarray(omega.data)
    bb = np.ascontiguousarray(b.data)
    out = kernels.time_encode_fwd(delta, om, bb, sc)

    def bwd(g):
        d_om, d_b = kernels.time_encode_bwd(delta, om, bb, sc, np.ascontiguousarray(g))
        return d_om, d_b

    return _result(out, (omega, b), bwd, "time_encode")


def clip_open_unit(a: Tensor) -> Tensor:
    """Clamp into the open unit interval [1e-15, 1-1e-15].

    float64 sigmoid saturates to exactly 0/1 for |logit| above ~37; this keeps
    probability outputs strictly inside (0,1). Clamped entries get zero
    gradient (the clip is flat there).
    """
    lo, hi = 1e-15, 1.0 - 1e-15
    out = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def bwd(g):
        return (np.where(inside, g, 0.0),)

    return _result(out, (a,), bwd, "clip_open_unit")


# ---------------------------------------------------------------------------
# losses


def bce_mean(p: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of probabilities p against 0/1 labels.

    Probabilities are clipped to [1e-12, 1-1e-12] inside the loss only (the
    clipped region contributes zero gradient), so late-training saturated
    scores cannot produce infinities.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != p.data.shape:
        raise ContractViolation(f"bce_mean shapes {p.data.shape} vs {y.shape}")
    if np.any(p.data <= 0.0) or np.any(p.data >= 1.0):
        raise ContractViolation("bce_mean wants probabilities strictly inside (0,1)")
    eps = 1e-12
    pc = np.clip(p.data, eps, 1.0 - eps)
    val = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean()
    inv = 1.0 / p.data.size
    active = (p.data > eps) & (p.data < 1.0 - eps)

    def bwd(g):
        dp = float(g) * inv * (pc - y) / (pc * (1.0 - pc))
        return (np.where(active, dp, 0.0),)

    return _result(val, (p,), bwd, "bce_mean")
