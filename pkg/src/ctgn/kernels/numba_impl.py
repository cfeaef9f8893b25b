"""Numba-jitted twins of the numpy kernels.

Same signatures and semantics as :mod:`ctgn.kernels.numpy_impl`. No fastmath:
results should track the numpy path to rounding noise, and each path is
bitwise-deterministic on its own.
"""

import numpy as np
from numba import njit

NEG_INF = -1e30


@njit(cache=True)
def sigmoid_fwd(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = 1.0 / (1.0 + np.exp(-flat[i]))
    return out.reshape(x.shape)


@njit(cache=True)
def sigmoid_bwd(y, g):
    yf = y.ravel()
    gf = g.ravel()
    out = np.empty_like(yf)
    for i in range(yf.shape[0]):
        out[i] = gf[i] * yf[i] * (1.0 - yf[i])
    return out.reshape(y.shape)


@njit(cache=True)
def tanh_fwd(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = np.tanh(flat[i])
    return out.reshape(x.shape)


@njit(cache=True)
def tanh_bwd(y, g):
    yf = y.ravel()
    gf = g.ravel()
    out = np.empty_like(yf)
    for i in range(yf.shape[0]):
        out[i] = gf[i] * (1.0 - yf[i] * yf[i])
    return out.reshape(y.shape)


@njit(cache=True)
def time_encode_fwd(delta, omega, b, scale):
    m = delta.shape[0]
    d = omega.shape[0]
    out = np.empty((m, d))
    for i in range(m):
        for k in range(d):
            out[i, k] = scale * np.cos(delta[i] * omega[k] + b[k])
    return out


@njit(cache=True)
def time_encode_bwd(delta, omega, b, scale, g):
    m = delta.shape[0]
    d = omega.shape[0]
    d_omega = np.zeros(d)
    d_b = np.zeros(d)
    for i in range(m):
        for k in range(d):
            s = -scale * np.sin(delta[i] * omega[k] + b[k]) * g[i, k]
            d_omega[k] += s * delta[i]
            d_b[k] += s
    return d_omega, d_b


@njit(cache=True)
def masked_softmax_fwd(logits, mask):
    B, n = logits.shape
    out = np.zeros((B, n))
    for b in range(B):
        hi = NEG_INF
        for j in range(n):
            if mask[b, j] and logits[b, j] > hi:
                hi = logits[b, j]
        tot = 0.0
        for j in range(n):
            if mask[b, j]:
                e = np.exp(logits[b, j] - hi)
                out[b, j] = e
                tot += e
        for j in range(n):
            out[b, j] /= tot
    return out


@njit(cache=True)
def masked_softmax_bwd(w, g):
    B, n = w.shape
    out = np.empty((B, n))
    for b in range(B):
        dot = 0.0
        for j in range(n):
            dot += w[b, j] * g[b, j]
        for j in range(n):
            out[b, j] = w[b, j] * (g[b, j] - dot)
    return out


@njit(cache=True)
def segment_scores_fwd(q, k, n):
    B, d = q.shape
    out = np.empty((B, n))
    for b in range(B):
        for j in range(n):
            acc = 0.0
            row = b * n + j
            for c in range(d):
                acc += q[b, c] * k[row, c]
            out[b, j] = acc
    return out


@njit(cache=True)
def segment_scores_bwd(q, k, g, n):
    B, d = q.shape
    dq = np.zeros((B, d))
    dk = np.zeros((B * n, d))
    for b in range(B):
        for j in range(n):
            row = b * n + j
            gv = g[b, j]
            for c in range(d):
                dq[b, c] += gv * k[row, c]
                dk[row, c] = gv * q[b, c]
    return dq, dk


@njit(cache=True)
def segment_mix_fwd(w, v, n):
    B = w.shape[0]
    d = v.shape[1]
    out = np.zeros((B, d))
    for b in range(B):
        for j in range(n):
            row = b * n + j
            wv = w[b, j]
            for c in range(d):
                out[b, c] += wv * v[row, c]
    return out


@njit(cache=True)
def segment_mix_bwd(w, v, g, n):
    B = w.shape[0]
    d = v.shape[1]
    dw = np.zeros((B, n))
    dv = np.zeros((B * n, d))
    for b in range(B):
        for j in range(n):
            row = b * n + j
            acc = 0.0
            wv = w[b, j]
            for c in range(d):
                acc += g[b, c] * v[row, c]
                dv[row, c] = wv * g[b, c]
            dw[b, j] = acc
    return dw, dv


@njit(cache=True)
def scatter_add_rows(acc, idx, rows):
    for i in range(idx.shape[0]):
        r = idx[i]
        for c in range(rows.shape[1]):
            acc[r, c] += rows[i, c]


@njit(cache=True)
def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    pf = p.ravel()
    gf = g.ravel()
    mf = m.ravel()
    vf = v.ravel()
    new_p = np.empty_like(pf)
    new_m = np.empty_like(mf)
    new_v = np.empty_like(vf)
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for i in range(pf.shape[0]):
        new_m[i] = beta1 * mf[i] + (1.0 - beta1) * gf[i]
        new_v[i] = beta2 * vf[i] + (1.0 - beta2) * gf[i] * gf[i]
        m_hat = new_m[i] / c1
        v_hat = new_v[i] / c2
        new_p[i] = pf[i] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_p.reshape(p.shape), new_m.reshape(m.shape), new_v.reshape(v.shape)


@njit(cache=True)
def recent_neighbors(indptr, nbr_ids, nbr_ts, nbr_eidx, nodes, times, n):
    m = nodes.shape[0]
    out_ids = np.zeros((m, n), dtype=np.int64)
    out_ts = np.zeros((m, n), dtype=np.float64)
    out_eidx = np.full((m, n), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        u = nodes[i]
        lo = indptr[u]
        hi = indptr[u + 1]
        t = times[i]
        # binary search: first index with time >= t
        a, bnd = lo, hi
        while a < bnd:
            mid = (a + bnd) // 2
            if nbr_ts[mid] < t:
                a = mid + 1
            else:
                bnd = mid
        cut = a
        take = cut - lo
        if take > n:
            take = n
        if take > 0:
            for j in range(take):
                src = cut - take + j
                out_ids[i, j] = nbr_ids[src]
                out_ts[i, j] = nbr_ts[src]
                out_eidx[i, j] = nbr_eidx[src]
            counts[i] = take
    return out_ids, out_ts, out_eidx, counts
