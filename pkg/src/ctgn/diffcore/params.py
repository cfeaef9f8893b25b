"""Named parameter collection with deterministic iteration order."""

import numpy as np

from ..errors import ContractViolation
from .tensor import Tensor


class ParamSet:
    """Ordered name -> Tensor map for every trainable parameter of a model.

    Insertion order is the iteration order, so a fixed construction sequence
    gives identical ordering across runs (which the optimizer, checkpoints
    and gradient checks all rely on).
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._tensors:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._tensors[name] = t
        return t

    def replace(self, name: str, data) -> Tensor:
        old = self[name]
        arr = np.asarray(data, dtype=np.float64)
        if arr.shape != old.data.shape:
            raise ContractViolation(
                f"replace {name!r}: shape {arr.shape} vs {old.data.shape}")
        t = Tensor(arr, requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ContractViolation(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def num_values(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def zero_grads(self):
        for t in self._tensors.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_state_dict(self, state: dict):
        missing = set(self._tensors) - set(state)
        extra = set(state) - set(self._tensors)
        if missing or extra:
            raise ContractViolation(
                f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in state.items():
            self.replace(name, arr)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in=None) -> np.ndarray:
    """Weight init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if fan_in is None:
        fan_in = shape[0]
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
