"""Event streams: parsing, chronological splits, inductive masking, batching.

A store is columnar (numpy arrays over events sorted by timestamp, stable on
ties) plus a CSR adjacency index per node, time-sorted, used for recency
neighbor sampling. Stores are immutable after construction.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import kernels
from .errors import ContractViolation

CORE_COLUMNS = ("src", "dst", "t", "duration", "label")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    """One timestamped interaction."""

    src: int
    dst: int
    t: float
    duration: float
    edge_feat: np.ndarray
    label: Optional[int] = None


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    unseen_frac: float = 0.10

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ContractViolation(f"split fractions must be positive and sum to 1: {fracs}")
        if not (0.0 <= self.unseen_frac < 1.0):
            raise ContractViolation(f"unseen fraction must be in [0,1): {self.unseen_frac}")


def build_adjacency(src, dst, t, num_nodes):
    """Time-sorted CSR incidence: for each node, (other endpoint, time, event idx).

    Events must already be time-sorted; per-node order then inherits global
    chronological (and tie-stable) order. A self-loop contributes one entry,
    not two: it is still one event involving the node.
    """
    n = src.shape[0]
    idx = np.arange(n, dtype=np.int64)
    loop_free = dst != src
    ends = np.concatenate([src, dst[loop_free]])
    others = np.concatenate([dst, src[loop_free]])
    eidx = np.concatenate([idx, idx[loop_free]])
    times = np.concatenate([t, t[loop_free]])
    # stable sort by event index keeps chronological + input-order ties
    order = np.argsort(eidx, kind="stable")
    ends, others, eidx, times = ends[order], others[order], eidx[order], times[order]
    counts = np.bincount(ends, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    total = ends.shape[0]
    nbr = np.empty(total, dtype=np.int64)
    nbr_t = np.empty(total, dtype=np.float64)
    nbr_e = np.empty(total, dtype=np.int64)
    cursor = indptr[:-1].copy()
    for i in range(ends.shape[0]):
        u = ends[i]
        pos = cursor[u]
        nbr[pos] = others[i]
        nbr_t[pos] = times[i]
        nbr_e[pos] = eidx[i]
        cursor[u] = pos + 1
    return indptr, nbr, nbr_t, nbr_e


class EventStore:
    """Immutable, time-sorted collection of events with an adjacency index."""

    def __init__(self, src, dst, t, duration, edge_feat, label=None,
                 has_duration=True, num_nodes=None, _presorted=False):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        t = np.asarray(t, dtype=np.float64)
        duration = np.asarray(duration, dtype=np.float64)
        edge_feat = np.asarray(edge_feat, dtype=np.float64)
        if edge_feat.ndim != 2 or edge_feat.shape[0] != src.shape[0]:
            raise ContractViolation("edge_feat must be (n_events, feat_dim)")
        if label is None:
            label = np.full(src.shape[0], -1, dtype=np.int64)
            self.has_labels = False
        else:
            label = np.asarray(label, dtype=np.int64)
            self.has_labels = True
        if np.any(t < 0) or np.any(duration < 0):
            raise ContractViolation("timestamps and durations must be non-negative")
        if not _presorted:
            order = np.argsort(t, kind="stable")
            src, dst, t = src[order], dst[order], t[order]
            duration, edge_feat, label = duration[order], edge_feat[order], label[order]
        self.src, self.dst, self.t = src, dst, t
        self.duration, self.edge_feat, self.label = duration, edge_feat, label
        self.has_duration = bool(has_duration)
        if num_nodes is None:
            num_nodes = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
        self.num_nodes = int(num_nodes)
        (self.adj_indptr, self.adj_nbr,
         self.adj_time, self.adj_eidx) = build_adjacency(src, dst, t, self.num_nodes)

    def __len__(self):
        return self.src.shape[0]

    @property
    def edge_dim(self):
        return self.edge_feat.shape[1]

    def event(self, i: int) -> Event:
        lbl = int(self.label[i]) if self.has_labels else None
        return Event(int(self.src[i]), int(self.dst[i]), float(self.t[i]),
                     float(self.duration[i]), self.edge_feat[i].copy(), lbl)

    def nodes_present(self) -> np.ndarray:
        return np.unique(np.concatenate([self.src, self.dst]))

    def slice_range(self, i0: int, i1: int) -> "EventStore":
        return EventStore(self.src[i0:i1], self.dst[i0:i1], self.t[i0:i1],
                          self.duration[i0:i1], self.edge_feat[i0:i1],
                          self.label[i0:i1] if self.has_labels else None,
                          has_duration=self.has_duration,
                          num_nodes=self.num_nodes, _presorted=True)

    def select(self, mask: np.ndarray) -> "EventStore":
        return EventStore(self.src[mask], self.dst[mask], self.t[mask],
                          self.duration[mask], self.edge_feat[mask],
                          self.label[mask] if self.has_labels else None,
                          has_duration=self.has_duration,
                          num_nodes=self.num_nodes, _presorted=True)


def parse_events(path, has_duration: Optional[bool] = None) -> EventStore:
    """Load a CSV event stream.

    Header: src,dst,t[,duration][,label][,feat_0..feat_k]. A file without a
    duration column is flagged has_duration=False and stores duration=0 for
    every event (downstream substitutes the inter-event gap). Rows may arrive
    out of time order; the store sorts on load.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        header_line = fh.readline().strip()
    if not header_line:
        raise IngestError(f"{path}: empty file")
    columns = header_line.split(",")
    for required in ("src", "dst", "t"):
        if required not in columns:
            raise IngestError(f"{path}: missing required column {required!r}")
    feat_cols = [c for c in columns if c.startswith("feat_")]
    unknown = [c for c in columns if c not in CORE_COLUMNS and c not in feat_cols]
    if unknown:
        raise IngestError(f"{path}: unknown columns {unknown}")
    file_has_duration = "duration" in columns
    if has_duration is None:
        has_duration = file_has_duration

    try:
        frame = pd.read_csv(path, dtype=np.float64, float_precision="round_trip")
    except (ValueError, pd.errors.ParserError):
        raise IngestError(
            f"{path}: unparsable row at line {_find_bad_line(path, len(columns))}") from None
    if len(frame) == 0:
        raise IngestError(f"{path}: no events")
    bad = frame.isna().any(axis=1)
    if bad.any():
        # +2: header line plus 1-based numbering
        raise IngestError(f"{path}: unparsable row at line {int(np.argmax(bad.values)) + 2}")

    src = frame["src"].to_numpy()
    dst = frame["dst"].to_numpy()
    if np.any(src < 0) or np.any(dst < 0) or np.any(src != np.floor(src)) or np.any(dst != np.floor(dst)):
        raise IngestError(f"{path}: node ids must be non-negative integers")
    duration = frame["duration"].to_numpy() if file_has_duration else np.zeros(len(frame))
    label = frame["label"].to_numpy().astype(np.int64) if "label" in columns else None
    feats = (frame[feat_cols].to_numpy() if feat_cols
             else np.zeros((len(frame), 0)))
    return EventStore(src.astype(np.int64), dst.astype(np.int64),
                      frame["t"].to_numpy(), duration, feats, label,
                      has_duration=has_duration)


def _find_bad_line(path, n_cols: int) -> int:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_cols:
                return lineno
            for cell in row:
                try:
                    float(cell)
                except ValueError:
                    return lineno
    return -1


def write_csv(store: EventStore, path):
    """Emit the store in the same CSV format parse_events reads (lossless)."""
    cols = ["src", "dst", "t"]
    if store.has_duration:
        cols.append("duration")
    if store.has_labels:
        cols.append("label")
    cols += [f"feat_{i}" for i in range(store.edge_dim)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(store)):
            row = [str(store.src[i]), str(store.dst[i]), repr(float(store.t[i]))]
            if store.has_duration:
                row.append(repr(float(store.duration[i])))
            if store.has_labels:
                row.append(str(store.label[i]))
            row += [repr(float(v)) for v in store.edge_feat[i]]
            fh.write(",".join(row) + "\n")


def chronological_split(store: EventStore, spec: SplitSpec):
    """Partition the time-sorted events at floor(train*n) and floor((train+val)*n)."""
    n = len(store)
    if n == 0:
        raise ContractViolation("cannot split an empty store")
    # tiny nudge so exact products like 0.7*n never floor one short
    i1 = int(n * spec.train_frac + 1e-9)
    i2 = int(n * (spec.train_frac + spec.val_frac) + 1e-9)
    if i1 == 0 or i2 == i1 or i2 == n:
        raise ContractViolation(f"split of {n} events leaves an empty part")
    return store.slice_range(0, i1), store.slice_range(i1, i2), store.slice_range(i2, n)


@dataclass
class UnseenMask:
    seen_nodes: np.ndarray
    unseen_nodes: np.ndarray
    filtered_train: EventStore

    def is_inductive(self, src, dst) -> np.ndarray:
        """True per event iff either endpoint is an unseen node."""
        return np.isin(src, self.unseen_nodes) | np.isin(dst, self.unseen_nodes)


def mask_unseen_nodes(store: EventStore, train: EventStore,
                      fraction: float, rng: np.random.Generator) -> UnseenMask:
    """Withhold a uniform sample of nodes from training for inductive eval.

    Every train event touching an unseen node is dropped; val/test events are
    later tagged inductive iff they touch the unseen set.
    """
    nodes = store.nodes_present()
    k = int(round(fraction * nodes.size))
    if k < 1:
        raise ContractViolation(
            f"unseen fraction {fraction} of {nodes.size} nodes selects none")
    unseen = np.sort(rng.choice(nodes, size=k, replace=False))
    seen = np.setdiff1d(nodes, unseen)
    keep = ~(np.isin(train.src, unseen) | np.isin(train.dst, unseen))
    if not keep.any():
        raise ContractViolation("masking unseen nodes emptied the train split")
    return UnseenMask(seen, unseen, train.select(keep))


@dataclass
class Batch:
    """A chronological chunk of events (views into the parent store)."""

    src: np.ndarray
    dst: np.ndarray
    t: np.ndarray
    duration: np.ndarray
    edge_feat: np.ndarray
    label: np.ndarray
    index_start: int
    index_stop: int

    def __len__(self):
        return self.src.shape[0]


def iterate_batches(store: EventStore, batch_size: int = 200):
    """Consecutive non-overlapping chronological chunks; last may be short."""
    if batch_size < 1:
        raise ContractViolation(f"batch_size must be >= 1, got {batch_size}")
    for i0 in range(0, len(store), batch_size):
        i1 = min(i0 + batch_size, len(store))
        yield Batch(store.src[i0:i1], store.dst[i0:i1], store.t[i0:i1],
                    store.duration[i0:i1], store.edge_feat[i0:i1],
                    store.label[i0:i1], i0, i1)


def sample_neighbors(store: EventStore, node: int, t: float, n: int):
    """The n most recent events involving `node` strictly before t, newest last."""
    if t < 0:
        raise ContractViolation("query time must be non-negative")
    if node < 0 or node >= store.num_nodes:
        return []
    ids, ts, eidx, counts = kernels.recent_neighbors(
        store.adj_indptr, store.adj_nbr, store.adj_time, store.adj_eidx,
        np.array([node], dtype=np.int64), np.array([t], dtype=np.float64), n)
    c = int(counts[0])
    return [(int(ids[0, j]), float(ts[0, j]), store.edge_feat[eidx[0, j]].copy())
            for j in range(c)]


def sample_neighbors_batch(store: EventStore, nodes: np.ndarray,
                           times: np.ndarray, n: int):
    """Vectorized recency sampling; returns padded (m,n) arrays + counts."""
    return kernels.recent_neighbors(
        store.adj_indptr, store.adj_nbr, store.adj_time, store.adj_eidx,
        np.ascontiguousarray(nodes, dtype=np.int64),
        np.ascontiguousarray(times, dtype=np.float64), n)


def write_split_manifest(path, n_train, n_val, n_total, unseen_nodes):
    with open(path, "w") as fh:
        fh.write(f"train\t0\t{n_train}\n")
        fh.write(f"val\t{n_train}\t{n_val}\n")
        fh.write(f"test\t{n_val}\t{n_total}\n")
        fh.write("unseen\t" + ",".join(str(int(u)) for u in np.sort(unseen_nodes)) + "\n")
