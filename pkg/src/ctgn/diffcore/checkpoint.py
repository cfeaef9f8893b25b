"""Checkpoint container: named float64 arrays + step counter, bit-exact."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation

_PARAM = "param/"
_ADAM_M = "adam_m/"
_ADAM_V = "adam_v/"
_EXTRA = "extra/"


@dataclass
class Checkpoint:
    """Everything needed to resume or evaluate a trained model exactly."""

    params: dict
    step: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint):
    payload = {"step": np.asarray(ckpt.step, dtype=np.int64)}
    for name, arr in ckpt.params.items():
        payload[_PARAM + name] = np.asarray(arr, dtype=np.float64)
    for name, arr in ckpt.adam_m.items():
        payload[_ADAM_M + name] = np.asarray(arr, dtype=np.float64)
    for name, arr in ckpt.adam_v.items():
        payload[_ADAM_V + name] = np.asarray(arr, dtype=np.float64)
    for name, arr in ckpt.extras.items():
        payload[_EXTRA + name] = np.asarray(arr)
    np.savez(path, **payload)


def load_checkpoint(path) -> Checkpoint:
    with np.load(path) as data:
        if "step" not in data:
            raise ContractViolation(f"{path}: not a checkpoint (no step counter)")
        ckpt = Checkpoint(params={}, step=int(data["step"]))
        for key in data.files:
            if key == "step":
                continue
            if key.startswith(_PARAM):
                ckpt.params[key[len(_PARAM):]] = data[key]
            elif key.startswith(_ADAM_M):
                ckpt.adam_m[key[len(_ADAM_M):]] = data[key]
            elif key.startswith(_ADAM_V):
                ckpt.adam_v[key[len(_ADAM_V):]] = data[key]
            elif key.startswith(_EXTRA):
                ckpt.extras[key[len(_EXTRA):]] = data[key]
            else:
                raise ContractViolation(f"{path}: unknown checkpoint entry {key!r}")
    return ckpt
