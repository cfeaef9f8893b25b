"""Differentiable computation substrate: tensors, autodiff, Adam, checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad, grad_check
from .optim import OptimState, adam_step
from .params import ParamSet, fan_in_uniform
from .tensor import (
    Tensor,
    add,
    add_const,
    as_tensor,
    bce_mean,
    clip_open_unit,
    concat_cols,
    exp,
    gather_rows,
    grad_enabled,
    log,
    masked_softmax,
    matmul,
    mean_all,
    mul,
    mul_const,
    no_grad,
    row_sum,
    scale,
    scale_rows,
    scatter_rows,
    segment_mix,
    segment_scores,
    sigmoid,
    slice_cols,
    softmax,
    sqrt,
    sub,
    sum_all,
    sum_list,
    tanh,
    time_encode_core,
    where_rows,
)

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "GradCheckReport", "grad", "grad_check",
    "OptimState", "adam_step",
    "ParamSet", "fan_in_uniform",
    "Tensor", "add", "add_const", "as_tensor", "bce_mean", "clip_open_unit", "concat_cols",
    "exp", "gather_rows", "grad_enabled", "log", "masked_softmax", "matmul",
    "mean_all", "mul", "mul_const", "no_grad", "row_sum", "scale",
    "scale_rows", "scatter_rows", "segment_mix", "segment_scores", "sigmoid",
    "slice_cols", "softmax", "sqrt", "sub", "sum_all", "sum_list", "tanh",
    "time_encode_core", "where_rows",
]
