"""CTGN model assembly: parameters, memory, and the per-batch forward pass."""

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import encode_nodes, init_attention_params
from .data import Batch, EventStore
from .decoders import init_link_decoder, init_node_classifier, link_score
from .diffcore import ParamSet, Tensor, gather_rows
from .errors import ContractViolation
from .memory import MemoryState, init_memory_params, stage_and_apply
from .ode import (
    DurationStats,
    SolverConfig,
    evolve_embedding,
    init_ode_func,
    make_mlp_field,
)
from .time_encoding import init_time_encoder
from .utils import subsystem_rng


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 172
    time_dim: int = 172
    edge_dim: int = 0
    heads: int = 2
    layers: int = 1
    n_neighbors: int = 10
    ode_hidden: int = 172
    solver: SolverConfig = field(default_factory=SolverConfig)
    t_max: float = 2.0
    clf_hidden: int = 80
    clf_dropout: float = 0.1
    duration_blind: bool = False
    has_duration: bool = True

    def with_edge_dim(self, edge_dim: int) -> "ModelConfig":
        return replace(self, edge_dim=edge_dim)


class CtgnModel:
    """Parameters + memory + duration statistics for one dataset.

    The memory table has one extra row (index num_nodes) that stays zero: in
    inductive mode, node ids the table has never seen are encoded through it.
    """

    def __init__(self, config: ModelConfig, num_nodes: int, seed: int):
        self.config = config
        self.num_nodes = num_nodes
        self.seed = seed
        rng = subsystem_rng(seed, "init")
        ps = ParamSet()
        init_time_encoder(ps, config.time_dim)
        init_memory_params(ps, rng, config.dim, config.time_dim, config.edge_dim)
        init_attention_params(ps, rng, config.dim, config.time_dim,
                              config.edge_dim, d_k=config.dim,
                              heads=config.heads, layers=config.layers)
        init_ode_func(ps, rng, config.dim, config.ode_hidden)
        init_link_decoder(ps, rng, config.dim)
        init_node_classifier(ps, rng, config.dim, hidden=config.clf_hidden)
        self.params = ps
        self.field = make_mlp_field(ps)
        self.memory = MemoryState(num_nodes + 1, config.dim)
        self.stats = DurationStats(mean_duration=1.0, t_max=config.t_max)
        self.inductive = False

    # -- memory orchestration ------------------------------------------------

    def memory_tensor(self) -> Tensor:
        """Detached view of the current memory table."""
        return Tensor(self.memory.s)

    def begin_batch(self, batch: Batch, mem_t: Tensor = None) -> Tensor:
        """Apply staged messages, stage this batch, return encoder memory.

        Passing the previous batch's memory tensor keeps the tape connected
        across batches (full-differentiability mode used by gradient checks);
        the default detaches per batch as the training loop does.
        """
        if mem_t is None:
            mem_t = self.memory_tensor()
        return stage_and_apply(batch, mem_t, self.memory, self.params,
                               self.config.has_duration)

    def reset_memory(self):
        self.memory.reset()

    # -- forward pieces -------------------------------------------------------

    def _map_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        out_of_range = (ids < 0) | (ids >= self.num_nodes)
        if not out_of_range.any():
            return ids
        if not self.inductive:
            raise ContractViolation(
                f"unknown node id {int(ids[out_of_range][0])} in transductive mode")
        mapped = ids.copy()
        mapped[out_of_range] = self.num_nodes  # permanent zero row
        return mapped

    def encode(self, ids: np.ndarray, ts: np.ndarray, mem_t: Tensor,
               sampler_store: EventStore) -> Tensor:
        return encode_nodes(self._map_ids(ids), ts, mem_t, sampler_store,
                            self.params, self.config)

    def horizons(self, batch: Batch, ids: np.ndarray) -> np.ndarray:
        """Raw per-row horizon: the event duration, or the elapsed time since
        each node's last memory update for contact-sequence data."""
        if self.config.has_duration:
            reps = ids.shape[0] // len(batch)
            return np.tile(batch.duration, reps)
        reps = ids.shape[0] // len(batch)
        ts = np.tile(batch.t, reps)
        return np.maximum(ts - self.memory.last_update[self._map_ids(ids)], 0.0)

    def evolve(self, h: Tensor, raw_horizons: np.ndarray) -> Tensor:
        return evolve_embedding(h, raw_horizons, self.field, self.config.solver,
                                self.stats, duration_blind=self.config.duration_blind)

    def score_batch(self, batch: Batch, neg_dst: np.ndarray, mem_t: Tensor,
                    sampler_store: EventStore):
        """Positive and negative link probabilities for one event batch.

        Encodes src/dst/negative endpoints at the event times against the
        frozen batch memory, evolves each embedding over the event's (or
        node's) horizon, and scores both destination variants against the
        same evolved source. Returns (pos, neg) as (B, 1) tensors.
        """
        b = len(batch)
        ids = np.concatenate([batch.src, batch.dst, neg_dst])
        ts = np.tile(batch.t, 3)
        h = self.encode(ids, ts, mem_t, sampler_store)
        z = self.evolve(h, self.horizons(batch, ids))
        z_src = gather_rows(z, np.arange(b))
        z_dst = gather_rows(z, np.arange(b, 2 * b))
        z_neg = gather_rows(z, np.arange(2 * b, 3 * b))
        pos = link_score(z_src, z_dst, self.params)
        neg = link_score(z_src, z_neg, self.params)
        return pos, neg
