"""Per-node memory: message construction, GRU updates, leakage-safe staging.

Memory update is deferred by one batch (staging): the encoder working on
batch k sees memory built from batches 1..k-1 only, and batch k's own raw
message inputs are staged for application at the start of batch k+1. Within a
batch, only each node's latest interaction produces a message.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Batch
from .diffcore import (
    ParamSet,
    Tensor,
    add,
    concat_cols,
    fan_in_uniform,
    gather_rows,
    matmul,
    mul,
    scatter_rows,
    sigmoid,
    sub,
    tanh,
)
from .errors import ContractViolation
from .time_encoding import encode_time


def init_gru_cell(ps: ParamSet, rng, prefix: str, input_dim: int, state_dim: int):
    for gate in ("z", "r", "n"):
        ps.add(f"{prefix}.W{gate}", fan_in_uniform(rng, (input_dim, state_dim)))
        ps.add(f"{prefix}.U{gate}", fan_in_uniform(rng, (state_dim, state_dim)))
        ps.add(f"{prefix}.b{gate}", np.zeros(state_dim))


def gru_cell(ps: ParamSet, prefix: str, x: Tensor, h: Tensor) -> Tensor:
    """Classic GRU: z,r gates sigmoid, candidate tanh(Wx + U(r*h) + b)."""
    z = sigmoid(add(add(matmul(x, ps[f"{prefix}.Wz"]), matmul(h, ps[f"{prefix}.Uz"])),
                    ps[f"{prefix}.bz"]))
    r = sigmoid(add(add(matmul(x, ps[f"{prefix}.Wr"]), matmul(h, ps[f"{prefix}.Ur"])),
                    ps[f"{prefix}.br"]))
    cand = tanh(add(add(matmul(x, ps[f"{prefix}.Wn"]), matmul(mul(r, h), ps[f"{prefix}.Un"])),
                    ps[f"{prefix}.bn"]))
    ones = Tensor(np.ones_like(z.data))
    return add(mul(z, h), mul(sub(ones, z), cand))


def init_memory_params(ps: ParamSet, rng, dim: int, time_dim: int, edge_dim: int):
    msg_input = 2 * dim + time_dim + edge_dim
    init_gru_cell(ps, rng, "msg", msg_input, dim)
    init_gru_cell(ps, rng, "mem", dim, dim)


@dataclass
class StagedMessages:
    """Raw message inputs for each node's latest interaction in a batch."""

    nodes: np.ndarray
    partners: np.ndarray
    t: np.ndarray
    duration: np.ndarray
    edge_feat: np.ndarray

    def __len__(self):
        return self.nodes.shape[0]


class MemoryState:
    """Mutable per-node memory table plus staging buffer."""

    def __init__(self, num_nodes: int, dim: int):
        self.num_nodes = num_nodes
        self.dim = dim
        self.s = np.zeros((num_nodes, dim))
        self.last_update = np.zeros(num_nodes)
        self.staged: Optional[StagedMessages] = None

    def reset(self):
        self.s = np.zeros((self.num_nodes, self.dim))
        self.last_update = np.zeros(self.num_nodes)
        self.staged = None

    def clone(self) -> "MemoryState":
        other = MemoryState(self.num_nodes, self.dim)
        other.s = self.s.copy()
        other.last_update = self.last_update.copy()
        other.staged = self.staged
        return other


def compute_messages(batch: Batch, memory: MemoryState) -> StagedMessages:
    """One raw message per distinct node in the batch, from its latest event.

    Both endpoints of an event message (arguments swapped); a node touched by
    several events keeps only the chronologically last (ties by batch order).
    """
    b = len(batch)
    nodes = np.concatenate([batch.src, batch.dst])
    partners = np.concatenate([batch.dst, batch.src])
    eidx = np.tile(np.arange(b, dtype=np.int64), 2)
    order = np.lexsort((eidx, nodes))
    sorted_nodes = nodes[order]
    last = np.r_[sorted_nodes[1:] != sorted_nodes[:-1], True]
    sel = order[last]
    ev = eidx[sel]
    if np.any(batch.t[ev] < memory.last_update[nodes[sel]]):
        raise ContractViolation("batch contains events older than node memory")
    return StagedMessages(nodes[sel], partners[sel], batch.t[ev],
                          batch.duration[ev], batch.edge_feat[ev])


def message_vectors(staged: StagedMessages, mem_t: Tensor, memory: MemoryState,
                    ps: ParamSet, has_duration: bool) -> Tensor:
    """Transform raw staged inputs into message vectors m per Eq-style concat:
    msg(s_self || s_partner || phi(dt) || edge_feat), one GRU-style cell."""
    s_self = gather_rows(mem_t, staged.nodes)
    s_partner = gather_rows(mem_t, staged.partners)
    if has_duration:
        dt = staged.duration
    else:
        dt = staged.t - memory.last_update[staged.nodes]
    phi = encode_time(dt, ps["time_enc.omega"], ps["time_enc.b"])
    x = concat_cols([s_self, s_partner, phi, Tensor(staged.edge_feat)])
    return gru_cell(ps, "msg", x, s_self)


def update_memory(staged: StagedMessages, mem_t: Tensor, memory: MemoryState,
                  ps: ParamSet, has_duration: bool) -> Tensor:
    """Apply staged messages: s_new = GRU(m, s_old) for message-owning nodes.

    Returns the updated memory tensor (differentiable); advances last_update.
    """
    if np.any(staged.t < memory.last_update[staged.nodes]):
        raise ContractViolation("staged message older than node's last update")
    m = message_vectors(staged, mem_t, memory, ps, has_duration)
    s_old = gather_rows(mem_t, staged.nodes)
    s_new = gru_cell(ps, "mem", m, s_old)
    out = scatter_rows(mem_t, staged.nodes, s_new)
    memory.last_update[staged.nodes] = staged.t
    memory.s = out.data
    return out


def stage_and_apply(batch: Batch, mem_t: Tensor, memory: MemoryState,
                    ps: ParamSet, has_duration: bool) -> Tensor:
    """Apply the previous batch's staged messages, then stage this batch's.

    Returns the memory tensor the encoder must use for `batch`; it reflects
    events of earlier batches only.
    """
    if memory.staged is not None:
        if len(batch) and batch.t.min() < memory.staged.t.max():
            raise ContractViolation("batches applied out of chronological order")
        mem_t = update_memory(memory.staged, mem_t, memory, ps, has_duration)
    memory.staged = compute_messages(batch, memory)
    return mem_t


def reset(memory: MemoryState):
    memory.reset()
