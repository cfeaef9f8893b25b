"""Multi-head temporal graph attention over sampled recency neighborhoods.

Layer l of the encoder queries with the node's own layer l-1 embedding
concatenated to phi(0); keys/values come from neighbor rows of
[prev-layer embedding || edge features || phi(elapsed)]. An empty
neighborhood contributes a single all-zero context row so the softmax stays
defined; padded slots beyond a node's history are masked out entirely.
"""

import numpy as np

from .data import EventStore, sample_neighbors_batch
from .diffcore import (
    ParamSet,
    Tensor,
    add,
    concat_cols,
    fan_in_uniform,
    gather_rows,
    masked_softmax,
    matmul,
    scale,
    scale_rows,
    segment_mix,
    segment_scores,
    slice_cols,
)
from .errors import ContractViolation
from .time_encoding import encode_time


def init_attention_params(ps: ParamSet, rng, dim: int, time_dim: int,
                          edge_dim: int, d_k: int, heads: int, layers: int):
    if d_k % heads != 0:
        raise ContractViolation(f"d_k={d_k} not divisible by heads={heads}")
    q_in = dim + time_dim
    kv_in = dim + edge_dim + time_dim
    for layer in range(layers):
        p = f"attn{layer}"
        ps.add(f"{p}.Wq", fan_in_uniform(rng, (q_in, d_k)))
        ps.add(f"{p}.Wk", fan_in_uniform(rng, (kv_in, d_k)))
        ps.add(f"{p}.Wv", fan_in_uniform(rng, (kv_in, d_k)))
        ps.add(f"{p}.Wo", fan_in_uniform(rng, (dim + d_k, dim)))
        ps.add(f"{p}.bo", np.zeros(dim))


def attention(q: Tensor, k: Tensor, v: Tensor, n: int,
              mask: np.ndarray = None, heads: int = 1) -> Tensor:
    """Scaled dot-product attention over per-row segments of n candidates.

    q: (B, d_k); k, v: (B*n, d_k). Multi-head splits the d_k columns into
    `heads` independent slices, each scaled by sqrt of its own width, and
    concatenates the mixed values.
    """
    B, d_k = q.data.shape
    if d_k % heads != 0:
        raise ContractViolation(f"d_k={d_k} not divisible by heads={heads}")
    if mask is None:
        mask = np.ones((B, n), dtype=bool)
    d_h = d_k // heads
    outputs = []
    for h in range(heads):
        j0, j1 = h * d_h, (h + 1) * d_h
        qh, kh, vh = slice_cols(q, j0, j1), slice_cols(k, j0, j1), slice_cols(v, j0, j1)
        logits = scale(segment_scores(qh, kh, n), 1.0 / np.sqrt(d_h))
        weights = masked_softmax(logits, mask)
        outputs.append(segment_mix(weights, vh, n))
    return outputs[0] if heads == 1 else concat_cols(outputs)


def attention_weights(q: Tensor, k: Tensor, n: int, mask: np.ndarray = None,
                      heads: int = 1) -> list:
    """The row-stochastic weight matrices per head (diagnostic surface)."""
    B, d_k = q.data.shape
    if mask is None:
        mask = np.ones((B, n), dtype=bool)
    d_h = d_k // heads
    out = []
    for h in range(heads):
        j0, j1 = h * d_h, (h + 1) * d_h
        logits = scale(segment_scores(slice_cols(q, j0, j1), slice_cols(k, j0, j1), n),
                       1.0 / np.sqrt(d_h))
        out.append(masked_softmax(logits, mask))
    return out


def build_context(h_prev_nbrs: Tensor, edge_feats: np.ndarray, deltas: np.ndarray,
                  valid: np.ndarray, ps: ParamSet) -> Tensor:
    """Neighbor context rows [H_prev || edge_feat || phi(delta)], invalid rows zeroed.

    deltas are elapsed times (query time minus neighbor event time) and must
    be strictly positive on valid rows: a neighbor at or after the query time
    is temporal leakage.
    """
    if np.any(deltas[valid] <= 0):
        raise ContractViolation("neighbor event at or after query time")
    phi = encode_time(np.where(valid, deltas, 0.0), ps["time_enc.omega"], ps["time_enc.b"])
    ctx = concat_cols([h_prev_nbrs, Tensor(edge_feats), phi])
    return scale_rows(ctx, valid.astype(np.float64))


def encode_nodes(ids: np.ndarray, ts: np.ndarray, mem_t: Tensor,
                 store: EventStore, ps: ParamSet, cfg) -> Tensor:
    """Latent state h_i(t) for each (node, time) pair, cfg.layers deep.

    cfg must carry: dim, heads, layers, n_neighbors. Layer 0 is the node's
    memory row (node features are zero in every dataset handled here).
    """
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    ts = np.ascontiguousarray(ts, dtype=np.float64)
    return _encode_level(ids, ts, cfg.layers, mem_t, store, ps, cfg)


def _encode_level(ids, ts, level, mem_t, store, ps, cfg):
    if level == 0:
        return gather_rows(mem_t, ids)
    h_self = _encode_level(ids, ts, level - 1, mem_t, store, ps, cfg)
    n = cfg.n_neighbors
    nbr_ids, nbr_ts, nbr_eidx, counts = sample_neighbors_batch(store, ids, ts, n)

    # valid slots; nodes with no history get their slot 0 enabled as the
    # all-zero fallback row
    slot = np.arange(n)[None, :]
    valid = slot < counts[:, None]
    mask = valid.copy()
    mask[counts == 0, 0] = True

    flat_ids = nbr_ids.ravel()
    flat_ts = nbr_ts.ravel()
    flat_eidx = nbr_eidx.ravel()
    flat_valid = valid.ravel()
    h_nbrs = _encode_level(flat_ids, np.repeat(ts, n), level - 1, mem_t, store, ps, cfg)
    efeat = store.edge_feat[np.maximum(flat_eidx, 0)]
    deltas = np.repeat(ts, n) - flat_ts
    ctx = build_context(h_nbrs, efeat, deltas, flat_valid, ps)

    p = f"attn{cfg.layers - level}"
    phi0 = encode_time(np.zeros(ids.shape[0]), ps["time_enc.omega"], ps["time_enc.b"])
    q = matmul(concat_cols([h_self, phi0]), ps[f"{p}.Wq"])
    k = matmul(ctx, ps[f"{p}.Wk"])
    v = matmul(ctx, ps[f"{p}.Wv"])
    mixed = attention(q, k, v, n, mask=mask, heads=cfg.heads)
    return add(matmul(concat_cols([h_self, mixed]), ps[f"{p}.Wo"]), ps[f"{p}.bo"])
