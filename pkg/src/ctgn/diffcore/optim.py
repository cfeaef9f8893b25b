"""Adam optimizer over a ParamSet."""

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import ContractViolation
from .params import ParamSet
from .tensor import Tensor


@dataclass
class OptimState:
    """First/second moment estimates plus the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamSet) -> "OptimState":
        return cls(
            m={k: np.zeros_like(t.data) for k, t in params.items()},
            v={k: np.zeros_like(t.data) for k, t in params.items()},
            step=0,
        )


def adam_step(params: ParamSet, grads: dict, state: OptimState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimState:
    """One Adam update with bias correction; mutates params and state in place."""
    state.step += 1
    for name, tensor in list(params.items()):
        g = grads.get(name)
        if g is None:
            raise ContractViolation(f"missing gradient for {name!r}")
        g_arr = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        if g_arr.shape != tensor.data.shape:
            raise ContractViolation(
                f"gradient shape {g_arr.shape} vs parameter {tensor.data.shape} for {name!r}")
        new_p, new_m, new_v = kernels.adam_update(
            tensor.data, np.ascontiguousarray(g_arr), state.m[name], state.v[name],
            state.step, lr, beta1, beta2, eps)
        params.replace(name, new_p)
        state.m[name] = new_m
        state.v[name] = new_v
    return state
