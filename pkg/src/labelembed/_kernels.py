"""Compiled inner loops.

Every reduction here runs in a fixed sequential order so results are bitwise
reproducible regardless of how callers batch or parallelise the work. BLAS is
deliberately avoided on these paths for the same reason.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def half_sq_norms(cols):
    C, n = cols.shape
    out = np.empty(C)
    for i in range(C):
        s = 0.0
        for k in range(n):
            s += cols[i, k] * cols[i, k]
        out[i] = 0.5 * s
    return out


@njit(cache=True, nogil=True)
def decode_keys(P, cols, half_norms):
    """Best and runner-up of <p, g_i> - |g_i|^2 / 2 for each row of P.

    Ties keep the smaller index (strict comparison while scanning upward).
    """
    m, n = P.shape
    C = cols.shape[0]
    best = np.empty(m, dtype=np.int64)
    second = np.empty(m, dtype=np.int64)
    best_key = np.empty(m)
    second_key = np.empty(m)
    for q in range(m):
        b, s = -1, -1
        bk, sk = -np.inf, -np.inf
        for i in range(C):
            dot = 0.0
            for k in range(n):
                dot += P[q, k] * cols[i, k]
            key = dot - half_norms[i]
            if b < 0 or key > bk:
                s, sk = b, bk
                b, bk = i, key
            elif s < 0 or key > sk:
                s, sk = i, key
        best[q] = b
        second[q] = s
        best_key[q] = bk
        second_key[q] = sk
    return best, best_key, second, second_key


@njit(cache=True, nogil=True)
def sq_dist_rows(P, cols, idx):
    m, n = P.shape
    out = np.empty(m)
    for q in range(m):
        if idx[q] < 0:
            out[q] = np.nan
            continue
        s = 0.0
        for k in range(n):
            d = P[q, k] - cols[idx[q], k]
            s += d * d
        out[q] = s
    return out


@njit(cache=True, nogil=True)
def sparse_matmul_rows(indptr, indices, data, W, bias, use_bias):
    """Row-wise X @ W for CSR X, accumulating nonzeros in stored order."""
    N = indptr.shape[0] - 1
    n = W.shape[1]
    out = np.zeros((N, n))
    for i in range(N):
        if use_bias:
            for j in range(n):
                out[i, j] = bias[j]
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            v = data[p]
            for j in range(n):
                out[i, j] += v * W[k, j]
    return out


@njit(cache=True, nogil=True)
def _objective(r, w, l1, l2):
    s = 0.0
    for i in range(r.shape[0]):
        s += r[i] * r[i]
    a = 0.0
    b = 0.0
    for k in range(w.shape[0]):
        a += abs(w[k])
        b += w[k] * w[k]
    return 0.5 * s + l1 * a + l2 * b


@njit(cache=True, nogil=True)
def cd_elastic_net(indptr, indices, data, sqnorm, y, l1, l2, max_iters, tol,
                   fit_bias, record):
    """Cyclic coordinate descent for one output column.

    Minimises 1/2 |y - Xw - b|^2 + l1 |w|_1 + l2 |w|_2^2 with X in CSC form.
    Returns (w, b, sweeps_run, objective_trace); the trace holds the objective
    before the first sweep and after each sweep when ``record`` is set.
    """
    D = sqnorm.shape[0]
    N = y.shape[0]
    w = np.zeros(D)
    r = y.copy()
    b = 0.0
    if fit_bias and N > 0:
        s = 0.0
        for i in range(N):
            s += r[i]
        b = s / N
        for i in range(N):
            r[i] -= b
    trace = np.empty(max_iters + 1 if record else 0)
    if record:
        trace[0] = _objective(r, w, l1, l2)
    sweeps = 0
    for it in range(max_iters):
        max_delta = 0.0
        for k in range(D):
            a = sqnorm[k]
            if a == 0.0:
                continue
            wk = w[k]
            rho = 0.0
            for p in range(indptr[k], indptr[k + 1]):
                rho += data[p] * r[indices[p]]
            rho += a * wk
            if rho > l1:
                new = (rho - l1) / (a + 2.0 * l2)
            elif rho < -l1:
                new = (rho + l1) / (a + 2.0 * l2)
            else:
                new = 0.0
            delta = new - wk
            if delta != 0.0:
                for p in range(indptr[k], indptr[k + 1]):
                    r[indices[p]] -= data[p] * delta
                w[k] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if fit_bias and N > 0:
            s = 0.0
            for i in range(N):
                s += r[i]
            shift = s / N
            b += shift
            for i in range(N):
                r[i] -= shift
            if abs(shift) > max_delta:
                max_delta = abs(shift)
        sweeps = it + 1
        if record:
            trace[sweeps] = _objective(r, w, l1, l2)
        if max_delta < tol:
            break
    if record:
        trace = trace[:sweeps + 1]
    return w, b, sweeps, trace
