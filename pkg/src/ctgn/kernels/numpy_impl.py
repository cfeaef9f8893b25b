"""Pure-numpy implementations of the hot kernels.

Every function here has a numba twin in :mod:`ctgn.kernels.numba_impl` with
the same signature; the active backend is picked in the package __init__.
These are the reference semantics.
"""

import numpy as np

NEG_INF = -1e30


def sigmoid_fwd(x):
    return 1.0 / (1.0 + np.exp(-x))


def sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, g):
    return g * (1.0 - y * y)


def time_encode_fwd(delta, omega, b, scale):
    # (m,) x (d,) -> (m, d): scale * cos(delta_i * omega_k + b_k)
    return scale * np.cos(delta[:, None] * omega[None, :] + b[None, :])


def time_encode_bwd(delta, omega, b, scale, g):
    s = -scale * np.sin(delta[:, None] * omega[None, :] + b[None, :]) * g
    d_omega = (s * delta[:, None]).sum(axis=0)
    d_b = s.sum(axis=0)
    return d_omega, d_b


def masked_softmax_fwd(logits, mask):
    # Row softmax over the True entries of mask; masked entries get weight 0.
    # Every row must have at least one True entry.
    z = np.where(mask, logits, NEG_INF)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z) * mask
    return e / e.sum(axis=1, keepdims=True)


def masked_softmax_bwd(w, g):
    # w already carries the mask (zeros at masked entries).
    dot = (w * g).sum(axis=1, keepdims=True)
    return w * (g - dot)


def segment_scores_fwd(q, k, n):
    # q: (B, d), k: (B*n, d) -> scores (B, n), s[b, j] = q[b] . k[b*n + j]
    B, d = q.shape
    return np.einsum("bd,bjd->bj", q, k.reshape(B, n, d))


def segment_scores_bwd(q, k, g, n):
    B, d = q.shape
    k3 = k.reshape(B, n, d)
    dq = np.einsum("bj,bjd->bd", g, k3)
    dk = np.einsum("bj,bd->bjd", g, q).reshape(B * n, d)
    return dq, dk


def segment_mix_fwd(w, v, n):
    # w: (B, n), v: (B*n, d) -> out (B, d) = sum_j w[b, j] * v[b*n + j]
    B = w.shape[0]
    d = v.shape[1]
    return np.einsum("bj,bjd->bd", w, v.reshape(B, n, d))


def segment_mix_bwd(w, v, g, n):
    B = w.shape[0]
    d = v.shape[1]
    v3 = v.reshape(B, n, d)
    dw = np.einsum("bd,bjd->bj", g, v3)
    dv = np.einsum("bj,bd->bjd", w, g).reshape(B * n, d)
    return dw, dv


def scatter_add_rows(acc, idx, rows):
    # acc[idx[i], :] += rows[i, :], duplicates accumulate.
    np.add.at(acc, idx, rows)


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    new_m = beta1 * m + (1.0 - beta1) * g
    new_v = beta2 * v + (1.0 - beta2) * g * g
    m_hat = new_m / (1.0 - beta1 ** step)
    v_hat = new_v / (1.0 - beta2 ** step)
    new_p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_p, new_m, new_v


def recent_neighbors(indptr, nbr_ids, nbr_ts, nbr_eidx, nodes, times, n):
    """Most recent <n> events strictly before times[i] for each queried node.

    Adjacency is CSR-like: node u's incident events live in
    nbr_*[indptr[u]:indptr[u+1]], sorted by time ascending. Returns padded
    (m, n) arrays (newest last within the valid prefix) plus per-row counts;
    padded slots hold id 0 / time 0 / event -1.
    """
    m = nodes.shape[0]
    out_ids = np.zeros((m, n), dtype=np.int64)
    out_ts = np.zeros((m, n), dtype=np.float64)
    out_eidx = np.full((m, n), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        u = nodes[i]
        lo, hi = indptr[u], indptr[u + 1]
        cut = lo + np.searchsorted(nbr_ts[lo:hi], times[i], side="left")
        take = min(n, cut - lo)
        if take > 0:
            out_ids[i, :take] = nbr_ids[cut - take:cut]
            out_ts[i, :take] = nbr_ts[cut - take:cut]
            out_eidx[i, :take] = nbr_eidx[cut - take:cut]
            counts[i] = take
    return out_ids, out_ts, out_eidx, counts
