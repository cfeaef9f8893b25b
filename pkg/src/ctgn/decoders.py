"""Task heads: LSTM link scorer and MLP node classifier."""

import numpy as np

from .diffcore import (
    ParamSet,
    Tensor,
    add,
    clip_open_unit,
    fan_in_uniform,
    matmul,
    mul,
    mul_const,
    sigmoid,
    softmax,
    tanh,
)
from .errors import ContractViolation


def init_link_decoder(ps: ParamSet, rng, dim: int, prefix: str = "link_dec"):
    for gate in ("i", "f", "g", "o"):
        ps.add(f"{prefix}.W{gate}", fan_in_uniform(rng, (dim, dim)))
        ps.add(f"{prefix}.U{gate}", fan_in_uniform(rng, (dim, dim)))
        ps.add(f"{prefix}.b{gate}", np.zeros(dim))
    ps.add(f"{prefix}.Wout", fan_in_uniform(rng, (dim, 1)))
    ps.add(f"{prefix}.bout", np.zeros(1))


def lstm_step(ps: ParamSet, prefix: str, x: Tensor, h: Tensor, c: Tensor):
    def gate(name, act):
        return act(add(add(matmul(x, ps[f"{prefix}.W{name}"]),
                           matmul(h, ps[f"{prefix}.U{name}"])),
                       ps[f"{prefix}.b{name}"]))

    i = gate("i", sigmoid)
    f = gate("f", sigmoid)
    g = gate("g", tanh)
    o = gate("o", sigmoid)
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def link_score(z_src: Tensor, z_dst: Tensor, ps: ParamSet,
               prefix: str = "link_dec") -> Tensor:
    """Edge probability: run the LSTM over [z_src, z_dst] from zero state,
    then sigmoid(readout(final hidden)). Returns a (B, 1) column in (0,1);
    order matters, the sequence encodes direction."""
    if z_src.data.shape != z_dst.data.shape or z_src.data.ndim != 2:
        raise ContractViolation(
            f"link_score shapes {z_src.data.shape} vs {z_dst.data.shape}")
    zeros = Tensor(np.zeros_like(z_src.data))
    h, c = lstm_step(ps, prefix, z_src, zeros, zeros)
    h, c = lstm_step(ps, prefix, z_dst, h, c)
    logits = add(matmul(h, ps[f"{prefix}.Wout"]), ps[f"{prefix}.bout"])
    return clip_open_unit(sigmoid(logits))


def init_node_classifier(ps: ParamSet, rng, dim: int, hidden: int = 80,
                         classes: int = 2, prefix: str = "node_clf"):
    ps.add(f"{prefix}.W0", fan_in_uniform(rng, (dim, hidden)))
    ps.add(f"{prefix}.b0", np.zeros(hidden))
    ps.add(f"{prefix}.W1", fan_in_uniform(rng, (hidden, classes)))
    ps.add(f"{prefix}.b1", np.zeros(classes))


def node_classify(z: Tensor, ps: ParamSet, prefix: str = "node_clf",
                  dropout: float = 0.0, rng=None) -> Tensor:
    """Class probabilities (softmax rows). Dropout on the hidden layer is
    active only when an rng is supplied (training mode)."""
    h = tanh(add(matmul(z, ps[f"{prefix}.W0"]), ps[f"{prefix}.b0"]))
    if dropout > 0.0 and rng is not None:
        keep = (rng.random(h.data.shape) >= dropout) / (1.0 - dropout)
        h = mul_const(h, keep)
    logits = add(matmul(h, ps[f"{prefix}.W1"]), ps[f"{prefix}.b1"])
    return softmax(logits)
