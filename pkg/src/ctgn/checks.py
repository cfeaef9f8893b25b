"""Gradient-audit fixtures: one seeded finite-difference check per subsystem."""

import numpy as np

from .attention import encode_nodes, init_attention_params
from .data import Batch, EventStore, iterate_batches
from .decoders import (
    init_link_decoder,
    init_node_classifier,
    link_score,
    node_classify,
)
from .diffcore import (
    GradCheckReport,
    ParamSet,
    Tensor,
    add,
    fan_in_uniform,
    grad_check,
    matmul,
    mean_all,
    sigmoid,
    slice_cols,
    sum_all,
    tanh,
)
from .errors import ContractViolation
from .memory import MemoryState, compute_messages, init_memory_params, update_memory
from .model import CtgnModel, ModelConfig
from .ode import SolverConfig, init_ode_func, make_mlp_field, ode_solve
from .time_encoding import (
    encode_time,
    encoding_snapshots,
    init_time_encoder,
    smoothness_loss,
)
from .training import full_pipeline_loss


def toy_event_store(n_nodes: int = 6, n_events: int = 20, seed: int = 0,
                    edge_dim: int = 3, has_duration: bool = True) -> EventStore:
    """Small random interaction stream for end-to-end checks.

    Time scale is kept at a few seconds: finite differences on the encoder
    frequencies have curvature ~(t^3), so second-scale timestamps keep the
    h=1e-5 central-difference audit in its truncation-free regime.
    """
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n_nodes, size=n_events)
    shift = rng.integers(1, n_nodes, size=n_events)
    dst = (src + shift) % n_nodes
    t = np.cumsum(rng.exponential(0.5, size=n_events))
    duration = rng.uniform(0.05, 2.0, size=n_events)
    feats = rng.normal(0, 1, size=(n_events, edge_dim))
    return EventStore(src, dst, t, duration, feats,
                      has_duration=has_duration, num_nodes=n_nodes)


def _rng():
    return np.random.default_rng(7)


def check_diffcore(tolerance=1e-4) -> GradCheckReport:
    rng = _rng()
    ps = ParamSet()
    w1 = ps.add("w1", fan_in_uniform(rng, (4, 5)))
    w2 = ps.add("w2", fan_in_uniform(rng, (5, 3)))
    b = ps.add("b", rng.normal(0, 0.3, size=3))
    x = Tensor(rng.normal(size=(6, 4)))

    def loss():
        h = tanh(matmul(x, ps["w1"]))
        out = sigmoid(add(matmul(h, ps["w2"]), ps["b"]))
        return mean_all(out)

    return grad_check(loss, ps, tolerance)


def check_time_codec(tolerance=1e-4) -> GradCheckReport:
    ps = ParamSet()
    init_time_encoder(ps, dim=6)
    deltas = np.array([0.0, 0.4, 3.5, 12.0, 120.0])

    def loss():
        enc = encode_time(deltas, ps["time_enc.omega"], ps["time_enc.b"])
        return add(sum_all(enc), smoothness_loss(enc))

    return grad_check(loss, ps, tolerance)


def check_memory(tolerance=1e-4) -> GradCheckReport:
    rng = _rng()
    ps = ParamSet()
    init_time_encoder(ps, dim=4)
    init_memory_params(ps, rng, dim=5, time_dim=4, edge_dim=3)
    store = toy_event_store(n_nodes=5, n_events=8, seed=3)
    batch = next(iterate_batches(store, 8))
    base = rng.normal(0, 0.5, size=(5, 5))

    def loss():
        memory = MemoryState(5, 5)
        memory.s = base.copy()
        staged = compute_messages(batch, memory)
        mem_t = update_memory(staged, Tensor(memory.s), memory, ps, True)
        return sum_all(tanh(mem_t))

    return grad_check(loss, ps, tolerance)


def check_attention(tolerance=1e-4) -> GradCheckReport:
    rng = _rng()
    ps = ParamSet()
    cfg = ModelConfig(dim=4, time_dim=4, edge_dim=3, heads=2, layers=1,
                      n_neighbors=3)
    init_time_encoder(ps, dim=4)
    init_attention_params(ps, rng, dim=4, time_dim=4, edge_dim=3, d_k=4,
                          heads=2, layers=1)
    store = toy_event_store(n_nodes=5, n_events=12, seed=5)
    mem = rng.normal(0, 0.5, size=(5, 4))
    ids = np.array([0, 1, 2, 3, 4])
    ts = np.full(5, store.t[-1] + 1.0)

    def loss():
        h = encode_nodes(ids, ts, Tensor(mem), store, ps, cfg)
        return mean_all(tanh(h))

    return grad_check(loss, ps, tolerance)


def check_ode(tolerance=1e-4) -> GradCheckReport:
    rng = _rng()
    ps = ParamSet()
    init_ode_func(ps, rng, dim=4, hidden=5)
    z0 = ps.add("z0", rng.normal(0, 0.5, size=(3, 4)))
    horizons = np.array([0.7, 1.3, 0.0])
    config = SolverConfig(method="rk4", steps=4)

    def loss():
        field = make_mlp_field(ps)
        z = ode_solve(field, ps["z0"], horizons, config)
        return mean_all(tanh(z))

    return grad_check(loss, ps, tolerance)


def check_decoders(tolerance=1e-4) -> GradCheckReport:
    rng = _rng()
    ps = ParamSet()
    init_link_decoder(ps, rng, dim=4)
    init_node_classifier(ps, rng, dim=4, hidden=5)
    zs = Tensor(rng.normal(0, 0.5, size=(3, 4)))
    zd = Tensor(rng.normal(0, 0.5, size=(3, 4)))

    def loss():
        p = link_score(zs, zd, ps)
        probs = node_classify(zs, ps)
        return add(mean_all(p), mean_all(slice_cols(probs, 1, 2)))

    return grad_check(loss, ps, tolerance)


def check_pipeline(tolerance=1e-4, n_nodes=6, n_events=20, dim=5,
                   seed=0) -> GradCheckReport:
    """Full-chain audit: ingest -> memory -> attention -> ODE -> decoder -> loss.

    The replay keeps the tape connected across batches (no per-batch detach)
    so the analytic gradient covers the whole history, matching what finite
    differences see. Four-plus batches guarantee some nodes take two memory
    updates, which is what puts gradient on the recurrent GRU weights.
    """
    store = toy_event_store(n_nodes=n_nodes, n_events=n_events, seed=seed)
    cfg = ModelConfig(dim=dim, time_dim=4, edge_dim=store.edge_dim, heads=1,
                      layers=1, n_neighbors=3, ode_hidden=dim,
                      solver=SolverConfig(method="rk4", steps=2),
                      has_duration=True)
    model = CtgnModel(cfg, store.num_nodes, seed=seed)

    def loss():
        return full_pipeline_loss(model, store, batch_size=max(2, n_events // 4),
                                  seed=seed, alpha=0.7)

    return grad_check(loss, model.params, tolerance)


MODULE_CHECKS = {
    "diffcore": check_diffcore,
    "time_codec": check_time_codec,
    "memory": check_memory,
    "attention": check_attention,
    "ode": check_ode,
    "decoders": check_decoders,
    "pipeline": check_pipeline,
}


def run_checks(selection: str, tolerance: float = 1e-4) -> dict:
    if selection == "all":
        names = list(MODULE_CHECKS)
    elif selection in MODULE_CHECKS:
        names = [selection]
    else:
        raise ContractViolation(
            f"unknown gradcheck module {selection!r}; choose from "
            f"{['all'] + list(MODULE_CHECKS)}")
    return {name: MODULE_CHECKS[name](tolerance) for name in names}
