"""Hot numeric kernels with two interchangeable backends.

``CTGN_BACKEND=numpy`` forces the pure-numpy path, ``CTGN_BACKEND=numba``
requires the jitted path, anything else (default ``auto``) uses numba when it
imports and falls back to numpy otherwise. Both paths implement identical
semantics; see benchmarks/bench_kernels.py for the speed comparison.
"""

import os

_requested = os.environ.get("CTGN_BACKEND", "auto").lower()

if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"CTGN_BACKEND must be auto|numba|numpy, got {_requested!r}")

if _requested == "numpy":
    from . import numpy_impl as _impl

    _active = "numpy"
else:
    try:
        from . import numba_impl as _impl

        _active = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_impl as _impl

        _active = "numpy"


def active_backend() -> str:
    return _active


sigmoid_fwd = _impl.sigmoid_fwd
sigmoid_bwd = _impl.sigmoid_bwd
tanh_fwd = _impl.tanh_fwd
tanh_bwd = _impl.tanh_bwd
time_encode_fwd = _impl.time_encode_fwd
time_encode_bwd = _impl.time_encode_bwd
masked_softmax_fwd = _impl.masked_softmax_fwd
masked_softmax_bwd = _impl.masked_softmax_bwd
segment_scores_fwd = _impl.segment_scores_fwd
segment_scores_bwd = _impl.segment_scores_bwd
segment_mix_fwd = _impl.segment_mix_fwd
segment_mix_bwd = _impl.segment_mix_bwd
scatter_add_rows = _impl.scatter_add_rows
adam_update = _impl.adam_update
recent_neighbors = _impl.recent_neighbors


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs.

    A no-op on the numpy backend; on numba the first real call would
    otherwise pay the compile cost inside a timed run.
    """
    import numpy as np

    x = np.array([[0.1, -0.2], [0.3, 0.4]])
    sigmoid_bwd(sigmoid_fwd(x), x)
    tanh_bwd(tanh_fwd(x), x)
    d = np.array([0.5, 1.0])
    om = np.array([0.2, 0.3])
    time_encode_bwd(d, om, om, 0.5, time_encode_fwd(d, om, om, 0.5))
    mask = np.array([[True, False], [True, True]])
    masked_softmax_bwd(masked_softmax_fwd(x, mask), x)
    k = np.arange(8.0).reshape(4, 2)
    segment_scores_bwd(x, k, segment_scores_fwd(x, k, 2), 2)
    segment_mix_bwd(x, k, segment_mix_fwd(x, k, 2), 2)
    acc = np.zeros((3, 2))
    scatter_add_rows(acc, np.array([0, 2, 0], dtype=np.int64), np.ones((3, 2)))
    adam_update(x, x, np.zeros_like(x), np.zeros_like(x), 1, 1e-3, 0.9, 0.999, 1e-8)
    indptr = np.array([0, 2, 2], dtype=np.int64)
    ids = np.array([1, 1], dtype=np.int64)
    ts = np.array([1.0, 2.0])
    eidx = np.array([0, 1], dtype=np.int64)
    recent_neighbors(indptr, ids, ts, eidx, np.array([0, 1], dtype=np.int64),
                     np.array([3.0, 3.0]), 2)
