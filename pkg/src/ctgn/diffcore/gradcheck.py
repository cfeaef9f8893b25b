"""Gradient audit: analytic reverse-mode vs central finite differences."""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, NumericError
from .params import ParamSet
from .tensor import Tensor, no_grad

# Entries where both gradients are below this magnitude are compared on an
# absolute scale; plain relative error there would amplify roundoff noise of
# the finite differences into spurious failures.
_REL_FLOOR = 1e-6


def grad(loss_fn, params: ParamSet) -> dict:
    """Gradient of a scalar loss w.r.t. every parameter in the set.

    loss_fn is a zero-argument callable that recomputes the loss from the
    live tensors in `params`. Parameters the loss never touches come back
    with an exact zero gradient.
    """
    params.zero_grads()
    loss = loss_fn()
    if not isinstance(loss, Tensor) or loss.data.shape != ():
        raise ContractViolation("loss_computation must produce a scalar tensor")
    if not np.isfinite(loss.data):
        raise NumericError("non-finite values produced by op 'loss'")
    loss.backward()
    out = {}
    for name, t in params.items():
        out[name] = Tensor(t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
    params.zero_grads()
    return out


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    entries: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def format_table(self) -> str:
        width = max([len(e.name) for e in self.entries] + [9])
        lines = [f"{'parameter':<{width}}  {'max_rel_err':>12}  status"]
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            lines.append(f"{e.name:<{width}}  {e.max_rel_err:>12.3e}  {status}")
        tag = "PASS" if self.passed else "FAIL"
        lines.append(f"overall: {tag} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def grad_check(loss_fn, params: ParamSet, tolerance: float = 1e-4,
               step: float = 1e-5, names=None) -> GradCheckReport:
    """Compare analytic gradients with central differences per parameter.

    Perturbs every entry of every (selected) parameter in place, so the
    callable must read the live tensors on each evaluation. Restores the
    original values afterwards.
    """
    analytic = grad(loss_fn, params)
    check_names = list(names) if names is not None else params.names()
    entries = []
    for name in check_names:
        tensor = params[name]
        a = analytic[name].data
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.ravel()
        num_flat = numeric.ravel()
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = loss_fn().item()
                flat[i] = orig - step
                lo = loss_fn().item()
                flat[i] = orig
                num_flat[i] = (hi - lo) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), _REL_FLOOR)
        err = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
        entries.append(GradCheckEntry(name, err, err < tolerance))
    return GradCheckReport(entries, tolerance)
