"""Training loop, losses, negative sampling, and evaluation replay."""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import (
    EventStore,
    SplitSpec,
    chronological_split,
    iterate_batches,
    mask_unseen_nodes,
)
from .decoders import node_classify
from .diffcore import (
    Checkpoint,
    OptimState,
    ParamSet,
    Tensor,
    adam_step,
    add,
    bce_mean,
    gather_rows,
    no_grad,
    scale,
    slice_cols,
)
from .errors import ContractViolation
from .memory import MemoryState, StagedMessages
from .metrics import average_precision, roc_auc
from .model import CtgnModel
from .ode import DurationStats, duration_stats_from_train
from .time_encoding import encoding_snapshots, smoothness_loss
from .utils import subsystem_rng


def sample_negatives(true_dst: np.ndarray, candidates: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """One corrupted destination per event: uniform over candidates, never the
    true destination. Deterministic for a given generator state."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size < 2:
        raise ContractViolation("need at least 2 candidate destinations")
    out = candidates[rng.integers(0, candidates.size, size=true_dst.shape[0])]
    clash = out == true_dst
    while clash.any():
        out[clash] = candidates[rng.integers(0, candidates.size, size=int(clash.sum()))]
        clash = out == true_dst
    return out


def combine_loss(task: Tensor, smooth: Tensor, alpha: float) -> Tensor:
    """loss = alpha * smoothness + task; the one place the tradeoff is applied."""
    return add(scale(smooth, alpha), task)


def total_loss(pos_scores: Tensor, neg_scores: Tensor, snapshots: Tensor,
               alpha: float):
    """Task BCE (labels 1/0 for positive/negative scores) plus the weighted
    time-smoothness penalty. Returns (loss, task, smooth)."""
    if pos_scores.data.size != neg_scores.data.size:
        raise ContractViolation("need equal counts of positive and negative scores")
    for s in (pos_scores, neg_scores):
        if np.any(s.data <= 0.0) or np.any(s.data >= 1.0):
            raise ContractViolation("scores must lie strictly inside (0,1)")
    task = scale(add(bce_mean(pos_scores, np.ones_like(pos_scores.data)),
                     bce_mean(neg_scores, np.zeros_like(neg_scores.data))), 0.5)
    smooth = smoothness_loss(snapshots)
    return combine_loss(task, smooth, alpha), task, smooth


def full_pipeline_loss(model: CtgnModel, store: EventStore, batch_size: int,
                       seed: int, alpha: float) -> Tensor:
    """Summed batch losses of a whole replay with the tape kept connected
    across batches (no detach), so gradients flow through every memory
    update. Pure in the parameters: each call resets memory and the negative
    stream, which is what the finite-difference audit requires."""
    model.reset_memory()
    neg_rng = subsystem_rng(seed, "negatives")
    candidates = np.unique(store.dst)
    mem_t = model.memory_tensor()
    total = None
    for batch in iterate_batches(store, batch_size):
        mem_t = model.begin_batch(batch, mem_t)
        neg_dst = sample_negatives(batch.dst, candidates, neg_rng)
        pos, neg = model.score_batch(batch, neg_dst, mem_t, store)
        snapshots = encoding_snapshots(batch.t, model.params["time_enc.omega"],
                                       model.params["time_enc.b"])
        loss, _, _ = total_loss(pos, neg, snapshots, alpha)
        total = loss if total is None else add(total, loss)
    return total


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class DataBundle:
    """Chronological splits plus the inductive node mask for one dataset."""

    full: EventStore
    train: EventStore
    val: EventStore
    test: EventStore
    unseen_nodes: np.ndarray
    train_size: int
    val_size: int

    @classmethod
    def prepare(cls, store: EventStore, spec: SplitSpec, seed: int) -> "DataBundle":
        train, val, test = chronological_split(store, spec)
        n_train, n_val = len(train), len(val)
        if spec.unseen_frac > 0:
            mask = mask_unseen_nodes(store, train, spec.unseen_frac,
                                     subsystem_rng(seed, "masking"))
            train = mask.filtered_train
            unseen = mask.unseen_nodes
        else:
            unseen = np.zeros(0, dtype=np.int64)
        return cls(store, train, val, test, unseen, n_train, n_train + n_val)

    def train_candidates(self) -> np.ndarray:
        return np.unique(self.train.dst)

    def eval_candidates(self) -> np.ndarray:
        return np.unique(self.full.dst)

    def inductive_mask(self, store: EventStore) -> np.ndarray:
        return (np.isin(store.src, self.unseen_nodes)
                | np.isin(store.dst, self.unseen_nodes))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    split: str
    mode: str
    n_events: int
    ap: float
    auc: float


@dataclass
class EvalReport:
    """Aggregate link-prediction metrics over evaluation runs."""

    split: str
    mode: str
    n_events: int
    runs: int
    ap_mean: float
    ap_std: float
    auc_mean: float
    auc_std: float
    ap_runs: list
    auc_runs: list

    @classmethod
    def from_results(cls, results) -> "EvalReport":
        aps = [r.ap for r in results]
        aucs = [r.auc for r in results]
        first = results[0]
        return cls(first.split, first.mode, first.n_events, len(results),
                   float(np.mean(aps)), float(np.std(aps)),
                   float(np.mean(aucs)), float(np.std(aucs)), aps, aucs)

    def to_dict(self) -> dict:
        return {
            "split": self.split, "mode": self.mode, "n_events": self.n_events,
            "runs": self.runs, "ap_mean": self.ap_mean, "ap_std": self.ap_std,
            "auc_mean": self.auc_mean, "auc_std": self.auc_std,
            "ap_runs": self.ap_runs, "auc_runs": self.auc_runs,
        }


def replay_link_scores(model: CtgnModel, events: EventStore,
                       sampler_store: EventStore, candidates: np.ndarray,
                       rng: np.random.Generator, batch_size: int):
    """Replay events chronologically with frozen parameters, continuing
    memory updates, scoring each event against one sampled negative."""
    pos_parts, neg_parts = [], []
    with no_grad():
        for batch in iterate_batches(events, batch_size):
            mem_t = model.begin_batch(batch)
            neg_dst = sample_negatives(batch.dst, candidates, rng)
            pos, neg = model.score_batch(batch, neg_dst, mem_t, sampler_store)
            pos_parts.append(pos.data.ravel())
            neg_parts.append(neg.data.ravel())
    return np.concatenate(pos_parts), np.concatenate(neg_parts)


def _mode_mask(bundle: DataBundle, store: EventStore, mode: str) -> np.ndarray:
    inductive = bundle.inductive_mask(store)
    if mode == "transductive":
        return ~inductive
    if mode == "inductive":
        if bundle.unseen_nodes.size == 0:
            raise ContractViolation("inductive mode with no unseen nodes")
        return inductive
    if mode == "all":
        return np.ones(len(store), dtype=bool)
    raise ContractViolation(f"unknown evaluation mode {mode!r}")


def _scores_to_result(split, mode, pos, neg, mask) -> EvalResult:
    scores = np.concatenate([pos[mask], neg[mask]])
    labels = np.concatenate([np.ones(int(mask.sum())), np.zeros(int(mask.sum()))])
    if scores.size == 0:
        raise ContractViolation(f"no events selected for split={split} mode={mode}")
    return EvalResult(split, mode, int(mask.sum()),
                      average_precision(scores, labels), roc_auc(scores, labels))


def evaluate(model: CtgnModel, bundle: DataBundle, split: str, mode: str,
             seed: int, batch_size: int, checkpoint_memory: MemoryState) -> EvalResult:
    """Metrics for one split/mode, replaying from the checkpointed memory.

    The train split replays from a reset memory; val starts from the
    end-of-training memory; test first rolls (unscored through the metric)
    across val so its memory context is complete.
    """
    rng = subsystem_rng(seed, "eval")
    if split == "train":
        model.reset_memory()
        events = bundle.train
        pos, neg = replay_link_scores(model, events, bundle.train,
                                      bundle.train_candidates(), rng, batch_size)
        return _scores_to_result(split, mode, pos, neg, _mode_mask(bundle, events, mode))
    model.memory = checkpoint_memory.clone()
    candidates = bundle.eval_candidates()
    if split == "val":
        events = bundle.val
        pos, neg = replay_link_scores(model, events, bundle.full, candidates,
                                      rng, batch_size)
    elif split == "test":
        replay_link_scores(model, bundle.val, bundle.full, candidates, rng, batch_size)
        events = bundle.test
        pos, neg = replay_link_scores(model, events, bundle.full, candidates,
                                      rng, batch_size)
    else:
        raise ContractViolation(f"unknown split {split!r}")
    return _scores_to_result(split, mode, pos, neg, _mode_mask(bundle, events, mode))


def evaluate_runs(model, bundle, split, mode, seeds, batch_size,
                  checkpoint_memory) -> EvalReport:
    results = [evaluate(model, bundle, split, mode, s, batch_size, checkpoint_memory)
               for s in seeds]
    return EvalReport.from_results(results)


# ---------------------------------------------------------------------------
# training


class EarlyStopper:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_value = -np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch's metric; True iff it improved on the best so far."""
        if value > self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_ap: float
    val_auc: float
    wall_time: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_ap": self.val_ap, "val_auc": self.val_auc,
                "wall_time": self.wall_time}


@dataclass
class TrainResult:
    records: list
    best_epoch: int
    best_val_ap: float
    params_state: dict
    optim_state: OptimState
    memory: MemoryState
    stats: DurationStats
    final_smoothness: float


def _memory_to_extras(memory: MemoryState) -> dict:
    extras = {
        "memory_s": memory.s,
        "memory_last_update": memory.last_update,
    }
    if memory.staged is not None:
        st = memory.staged
        extras.update(staged_nodes=st.nodes, staged_partners=st.partners,
                      staged_t=st.t, staged_duration=st.duration,
                      staged_edge_feat=st.edge_feat)
    return extras


def memory_from_extras(extras: dict, num_rows: int, dim: int) -> MemoryState:
    memory = MemoryState(num_rows, dim)
    memory.s = np.array(extras["memory_s"])
    memory.last_update = np.array(extras["memory_last_update"])
    if "staged_nodes" in extras:
        memory.staged = StagedMessages(
            np.array(extras["staged_nodes"]), np.array(extras["staged_partners"]),
            np.array(extras["staged_t"]), np.array(extras["staged_duration"]),
            np.array(extras["staged_edge_feat"]))
    return memory


def build_checkpoint(result: TrainResult, model: CtgnModel,
                     bundle: DataBundle) -> Checkpoint:
    extras = _memory_to_extras(result.memory)
    extras["duration_mean"] = np.asarray(result.stats.mean_duration)
    extras["duration_t_max"] = np.asarray(result.stats.t_max)
    extras["unseen_nodes"] = bundle.unseen_nodes
    extras["num_nodes"] = np.asarray(model.num_nodes)
    return Checkpoint(params=result.params_state, step=result.optim_state.step,
                      adam_m=result.optim_state.m, adam_v=result.optim_state.v,
                      extras=extras)


def restore_model(model: CtgnModel, ckpt: Checkpoint) -> MemoryState:
    """Load parameters/stats from a checkpoint; returns the saved memory."""
    model.params.load_state_dict(ckpt.params)
    model.stats = DurationStats(float(ckpt.extras["duration_mean"]),
                                float(ckpt.extras["duration_t_max"]))
    return memory_from_extras(ckpt.extras, model.num_nodes + 1, model.config.dim)


def train_link_model(model: CtgnModel, bundle: DataBundle, *, lr: float,
                     alpha: float, batch_size: int = 200, max_epochs: int = 50,
                     patience: int = 5, seed: int = 0,
                     co_train_classifier: bool = False,
                     log_fn=None) -> TrainResult:
    """Link-prediction training with early stopping on validation AP.

    Per epoch: reset memory, replay train batches (stage/apply -> encode ->
    evolve -> decode -> loss -> Adam), then score the val split from the
    end-of-epoch memory. Stops after `patience` consecutive epochs without
    val-AP improvement; the checkpointed state is the best epoch's.
    """
    model.stats = duration_stats_from_train(bundle.train, model.config.t_max)
    neg_rng = subsystem_rng(seed, "negatives")
    dropout_rng = subsystem_rng(seed, "dropout")
    optim = OptimState.for_params(model.params)
    candidates = bundle.train_candidates()

    records = []
    best = None
    stopper = EarlyStopper(patience)
    final_smooth = float("nan")
    for epoch in range(1, max_epochs + 1):
        t0 = time.perf_counter()
        model.reset_memory()
        losses = []
        for batch in iterate_batches(bundle.train, batch_size):
            mem_t = model.begin_batch(batch)
            neg_dst = sample_negatives(batch.dst, candidates, neg_rng)
            pos, neg = model.score_batch(batch, neg_dst, mem_t, bundle.train)
            snapshots = encoding_snapshots(batch.t, model.params["time_enc.omega"],
                                           model.params["time_enc.b"])
            loss, task, smooth = total_loss(pos, neg, snapshots, alpha)
            if co_train_classifier and bundle.train.has_labels:
                b = len(batch)
                mask = batch.label >= 0
                if mask.any():
                    h = model.encode(batch.src, batch.t, mem_t, bundle.train)
                    z = model.evolve(h, model.horizons(batch, batch.src))
                    probs = node_classify(z, model.params,
                                          dropout=model.config.clf_dropout,
                                          rng=dropout_rng)
                    p1 = slice_cols(probs, 1, 2)
                    loss = add(loss, bce_mean(gather_rows(p1, np.flatnonzero(mask)),
                                              batch.label[mask][:, None]))
            loss.backward()
            grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                     for name, t in model.params.items()}
            adam_step(model.params, grads, optim, lr)
            model.params.zero_grads()
            losses.append(float(loss.data))
            final_smooth = smooth.item()

        end_memory = model.memory.clone()
        val = evaluate(model, bundle, "val", "all", seed, batch_size, end_memory)
        model.memory = end_memory
        rec = EpochRecord(epoch, float(np.mean(losses)), val.ap, val.auc,
                          time.perf_counter() - t0)
        records.append(rec)
        if log_fn is not None:
            log_fn(rec)
        if stopper.update(epoch, val.ap):
            best = TrainResult(records=records, best_epoch=epoch, best_val_ap=val.ap,
                               params_state=model.params.state_dict(),
                               optim_state=OptimState(
                                   {k: v.copy() for k, v in optim.m.items()},
                                   {k: v.copy() for k, v in optim.v.items()},
                                   optim.step),
                               memory=end_memory.clone(), stats=model.stats,
                               final_smoothness=final_smooth)
        if stopper.should_stop:
            break
    best.records = records
    best.final_smoothness = final_smooth
    return best


# ---------------------------------------------------------------------------
# node classification (frozen-encoder protocol)


@dataclass
class ClassifierResult:
    records: list
    best_epoch: int
    best_val_auc: float
    test_auc: float
    params_state: dict


def collect_event_embeddings(model: CtgnModel, store: EventStore,
                             batch_size: int):
    """Replay with frozen parameters; evolved (z_src, z_dst) per event.

    batch_size=1 makes each event's arithmetic independent of what else is in
    its batch, which the exact-equality truncation audit relies on.
    """
    src_rows, dst_rows = [], []
    model.reset_memory()
    with no_grad():
        for batch in iterate_batches(store, batch_size):
            b = len(batch)
            mem_t = model.begin_batch(batch)
            ids = np.concatenate([batch.src, batch.dst])
            h = model.encode(ids, np.tile(batch.t, 2), mem_t, store)
            z = model.evolve(h, model.horizons(batch, ids))
            src_rows.append(z.data[:b])
            dst_rows.append(z.data[b:])
    return np.concatenate(src_rows, axis=0), np.concatenate(dst_rows, axis=0)


def collect_source_embeddings(model: CtgnModel, store: EventStore,
                              batch_size: int) -> np.ndarray:
    """Replay the full stream with frozen parameters; the evolved source-node
    embedding at each event is the classification input."""
    rows = []
    model.reset_memory()
    with no_grad():
        for batch in iterate_batches(store, batch_size):
            mem_t = model.begin_batch(batch)
            h = model.encode(batch.src, batch.t, mem_t, store)
            z = model.evolve(h, model.horizons(batch, batch.src))
            rows.append(z.data)
    return np.concatenate(rows, axis=0)


def train_node_classifier(model: CtgnModel, bundle: DataBundle, *, lr: float,
                          batch_size: int = 200, max_epochs: int = 50,
                          patience: int = 5, seed: int = 0,
                          log_fn=None) -> ClassifierResult:
    """Train the MLP head on frozen encoder embeddings, early-stopped on val AUC."""
    if not bundle.full.has_labels:
        raise ContractViolation("node classification needs a labeled store")
    z = collect_source_embeddings(model, bundle.full, batch_size)
    labels = bundle.full.label.astype(np.float64)
    i1, i2 = bundle.train_size, bundle.val_size
    clf_rng = subsystem_rng(seed, "classifier")
    dropout_rng = subsystem_rng(seed, "dropout")

    clf_names = [n for n in model.params.names() if n.startswith("node_clf.")]
    optim = OptimState.for_params(model.params)
    records = []
    stopper = EarlyStopper(patience)
    best_state = None

    def scores_for(rows) -> np.ndarray:
        with no_grad():
            probs = node_classify(Tensor(z[rows]), model.params)
        return probs.data[:, 1]

    for epoch in range(1, max_epochs + 1):
        t0 = time.perf_counter()
        order = clf_rng.permutation(i1)
        losses = []
        for j0 in range(0, i1, batch_size):
            rows = order[j0:j0 + batch_size]
            probs = node_classify(Tensor(z[rows]), model.params,
                                  dropout=model.config.clf_dropout, rng=dropout_rng)
            loss = bce_mean(slice_cols(probs, 1, 2), labels[rows][:, None])
            loss.backward()
            grads = {n: (model.params[n].grad if model.params[n].grad is not None
                         else np.zeros_like(model.params[n].data)) for n in clf_names}
            _adam_subset(model.params, grads, optim, lr, clf_names)
            model.params.zero_grads()
            losses.append(loss.item())
        val_auc = roc_auc(scores_for(np.arange(i1, i2)), labels[i1:i2])
        rec = EpochRecord(epoch, float(np.mean(losses)), float("nan"), val_auc,
                          time.perf_counter() - t0)
        records.append(rec)
        if log_fn is not None:
            log_fn(rec)
        if stopper.update(epoch, val_auc):
            best_state = {n: model.params[n].data.copy() for n in clf_names}
        if stopper.should_stop:
            break
    for n, arr in best_state.items():
        model.params.replace(n, arr)
    test_auc = roc_auc(scores_for(np.arange(i2, len(bundle.full))),
                       labels[i2:])
    return ClassifierResult(records, stopper.best_epoch, stopper.best_value,
                            test_auc, dict(best_state))


def _adam_subset(params: ParamSet, grads: dict, state: OptimState, lr: float,
                 names: list):
    state.step += 1
    for name in names:
        g = grads[name]
        new_p, new_m, new_v = kernels.adam_update(
            params[name].data, np.ascontiguousarray(g), state.m[name],
            state.v[name], state.step, lr, 0.9, 0.999, 1e-8)
        params.replace(name, new_p)
        state.m[name] = new_m
        state.v[name] = new_v
