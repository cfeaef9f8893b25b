"""Continuous embedding evolution: z(t) = z(0) + integral of f(z, tau).

The derivative f is a small tanh MLP taking (state, tau). Solvers backprop
through their own steps (discretize-then-optimize); every event in a batch
integrates over its own horizon, so fixed-step methods take per-row step
sizes while the adaptive pair rescales each row onto a shared [0, 1] clock.
"""

from dataclasses import dataclass

import numpy as np

from .diffcore import (
    ParamSet,
    Tensor,
    add,
    concat_cols,
    fan_in_uniform,
    matmul,
    scale,
    scale_rows,
    sum_list,
    tanh,
    where_rows,
)
from .errors import ContractViolation, NumericError

FIXED_STEP_METHODS = ("euler", "rk4")

# Dormand-Prince 5(4): 7 stages, FSAL; propagate the 5th-order solution
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    steps: int = 8
    rtol: float = 1e-5
    atol: float = 1e-7
    max_steps: int = 1000

    def __post_init__(self):
        if self.method not in FIXED_STEP_METHODS + ("adaptive",):
            raise ContractViolation(f"unknown solver method {self.method!r}")
        if self.steps < 1 or self.max_steps < 1:
            raise ContractViolation("step counts must be >= 1")
        if self.rtol <= 0 or self.atol <= 0:
            raise ContractViolation("tolerances must be positive")


@dataclass
class DurationStats:
    """Train-split duration scale for normalizing integration horizons."""

    mean_duration: float
    t_max: float = 2.0


def duration_stats_from_train(train_store, t_max: float = 2.0) -> DurationStats:
    """Mean positive duration (event-based) or inter-event gap (contact)."""
    if train_store.has_duration:
        vals = train_store.duration
    else:
        # per-source gaps between consecutive interactions
        order = np.lexsort((train_store.t, train_store.src))
        s = train_store.src[order]
        t = train_store.t[order]
        same = s[1:] == s[:-1]
        vals = (t[1:] - t[:-1])[same]
    pos = vals[vals > 0]
    mean = float(pos.mean()) if pos.size else 1.0
    return DurationStats(mean_duration=mean, t_max=t_max)


def normalize_duration(dt_raw, stats: DurationStats):
    """tau_end = min(dt / mean_duration, t_max); accepts scalars or arrays."""
    dt = np.asarray(dt_raw, dtype=np.float64)
    if np.any(dt < 0):
        raise ContractViolation("durations must be non-negative")
    return np.minimum(dt / stats.mean_duration, stats.t_max)


def init_ode_func(ps: ParamSet, rng, dim: int, hidden: int, prefix: str = "ode_func"):
    ps.add(f"{prefix}.W0", fan_in_uniform(rng, (dim + 1, hidden)))
    ps.add(f"{prefix}.b0", np.zeros(hidden))
    ps.add(f"{prefix}.W1", fan_in_uniform(rng, (hidden, hidden)))
    ps.add(f"{prefix}.b1", np.zeros(hidden))
    ps.add(f"{prefix}.W2", fan_in_uniform(rng, (hidden, dim)))
    ps.add(f"{prefix}.b2", np.zeros(dim))


def make_mlp_field(ps: ParamSet, prefix: str = "ode_func"):
    """f(tau, z): two tanh hidden layers over [z || tau]."""

    def field(tau: np.ndarray, z: Tensor) -> Tensor:
        x = concat_cols([z, Tensor(tau[:, None])])
        h = tanh(add(matmul(x, ps[f"{prefix}.W0"]), ps[f"{prefix}.b0"]))
        h = tanh(add(matmul(h, ps[f"{prefix}.W1"]), ps[f"{prefix}.b1"]))
        return add(matmul(h, ps[f"{prefix}.W2"]), ps[f"{prefix}.b2"])

    return field


def _as_horizon(t_end, rows: int) -> np.ndarray:
    h = np.asarray(t_end, dtype=np.float64)
    if h.ndim == 0:
        h = np.full(rows, float(h))
    if h.shape != (rows,):
        raise ContractViolation(f"horizon shape {h.shape} for {rows} rows")
    if np.any(h < 0):
        raise ContractViolation("integration horizon must be non-negative")
    return h


def _check_state(z: Tensor, step: int, method: str):
    if not np.all(np.isfinite(z.data)):
        raise NumericError(f"non-finite state at {method} step {step}")


def ode_solve(field, z0: Tensor, t_end, config: SolverConfig,
              t_start=0.0) -> Tensor:
    """Integrate dz/dtau = field(tau, z) from t_start to t_end per row.

    t_end (and t_start) may be a scalar or a per-row vector. A row whose
    horizon length is zero passes through bitwise unchanged.
    """
    rows = z0.data.shape[0]
    hi = _as_horizon(t_end, rows)
    lo = np.asarray(t_start, dtype=np.float64)
    if lo.ndim == 0:
        lo = np.full(rows, float(lo))
    span = hi - lo
    if np.any(span < 0):
        raise ContractViolation("t_end must be >= t_start")
    if not np.any(span > 0):
        return z0
    if config.method == "euler":
        z = _fixed_steps(field, z0, lo, span, config.steps, _euler_step)
    elif config.method == "rk4":
        z = _fixed_steps(field, z0, lo, span, config.steps, _rk4_step)
    else:
        z = _adaptive_dp(field, z0, lo, span, config)
    if np.all(span > 0):
        return z
    return where_rows(span > 0, z, z0)


def _euler_step(field, z, tau, h):
    k1 = field(tau, z)
    return add(z, scale_rows(k1, h))


def _rk4_step(field, z, tau, h):
    half = 0.5 * h
    k1 = field(tau, z)
    k2 = field(tau + half, add(z, scale_rows(k1, half)))
    k3 = field(tau + half, add(z, scale_rows(k2, half)))
    k4 = field(tau + h, add(z, scale_rows(k3, h)))
    combo = sum_list([k1, scale(k2, 2.0), scale(k3, 2.0), k4])
    return add(z, scale_rows(combo, h / 6.0))


def _fixed_steps(field, z, lo, span, steps, step_fn):
    h = span / steps
    for k in range(steps):
        tau = lo + k * h
        z = step_fn(field, z, tau, h)
        _check_state(z, k, "fixed-step")
    return z


def _adaptive_dp(field, z, lo, span, config: SolverConfig):
    """Dormand-Prince 5(4) on a shared [0,1] clock; per-row horizon scaling."""

    def scaled_field(sigma: float, state: Tensor) -> Tensor:
        return scale_rows(field(lo + sigma * span, state), span)

    sigma = 0.0
    h = 1.0
    k_first = scaled_field(0.0, z)
    for iteration in range(config.max_steps):
        if sigma >= 1.0 - 1e-14:
            return z
        h = min(h, 1.0 - sigma)
        ks = [k_first]
        for s in range(1, 7):
            zs = z
            acc = [scale(ks[j], _DP_A[s][j]) for j in range(s) if _DP_A[s][j] != 0.0]
            if acc:
                zs = add(z, scale(sum_list(acc), h))
            ks.append(scaled_field(sigma + _DP_C[s] * h, zs))
        z5 = add(z, scale(sum_list([scale(ks[j], _DP_B5[j])
                                    for j in range(7) if _DP_B5[j] != 0.0]), h))
        err_vec = sum(float(_DP_B5[j] - _DP_B4[j]) * ks[j].data
                      for j in range(7)) * h
        tol = config.atol + config.rtol * np.maximum(np.abs(z.data), np.abs(z5.data))
        err = float(np.sqrt(np.mean((err_vec / tol) ** 2)))
        _check_state(z5, iteration, "adaptive")
        if err <= 1.0:
            sigma += h
            z = z5
            k_first = ks[6]  # FSAL
        factor = 0.9 * (1.0 / max(err, 1e-10)) ** 0.2
        h *= min(5.0, max(0.2, factor))
        if not err <= 1.0:
            k_first = scaled_field(sigma, z)
    raise NumericError(f"adaptive solver exceeded max_steps={config.max_steps}")


def evolve_embedding(h: Tensor, dt_raw, field, config: SolverConfig,
                     stats: DurationStats, duration_blind: bool = False) -> Tensor:
    """z = ODE-solve from the encoder state over the normalized link duration."""
    if duration_blind:
        return h
    tau_end = normalize_duration(dt_raw, stats)
    return ode_solve(field, h, tau_end, config)
