"""Compiled inner loops for the scaled forward and forward-backward passes.

All routines take a log-emission matrix ``log_e`` of shape (n, K); each row is
shifted by its maximum before exponentiation so the linear-space recursions
never overflow. The shift is added back into the per-step log-normalizers.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def forward(log_e, pi, Q):
    """Scaled forward filter.

    Returns ``(pred, log_norm)``: ``pred[t]`` is p(X_t | y_1^{t-1}) and
    ``log_norm[t]`` is log p(y_t | y_1^{t-1}). If some step has zero
    likelihood, that entry and all later ones are -inf and later predictors NaN.
    """
    n, K = log_e.shape
    pred = np.full((n, K), np.nan)
    log_norm = np.full(n, -np.inf)
    cur = pi.copy()
    a = np.empty(K)
    for t in range(n):
        for i in range(K):
            pred[t, i] = cur[i]
        m = -np.inf
        for i in range(K):
            if log_e[t, i] > m:
                m = log_e[t, i]
        if m == -np.inf:
            return pred, log_norm
        c = 0.0
        for i in range(K):
            a[i] = cur[i] * np.exp(log_e[t, i] - m)
            c += a[i]
        if c <= 0.0:
            return pred, log_norm
        log_norm[t] = np.log(c) + m
        for j in range(K):
            s = 0.0
            for i in range(K):
                s += a[i] * Q[i, j]
            cur[j] = s / c
    return pred, log_norm


@njit(cache=True)
def forward_backward(log_e, pi, Q):
    """Smoothed marginals and pairwise marginals.

    Returns ``(post, pair, log_lik)`` with ``post[t, i] = p(X_t=i | y_1^n)`` and
    ``pair[t, i, j] = p(X_t=i, X_{t+1}=j | y_1^n)``. ``log_lik`` is -inf when the
    sequence has zero likelihood, in which case the posteriors are NaN.
    """
    n, K = log_e.shape
    e = np.empty((n, K))
    shift = np.empty(n)
    for t in range(n):
        m = -np.inf
        for i in range(K):
            if log_e[t, i] > m:
                m = log_e[t, i]
        shift[t] = m
        for i in range(K):
            e[t, i] = np.exp(log_e[t, i] - m) if m > -np.inf else 0.0

    alpha = np.empty((n, K))
    c = np.empty(n)
    post = np.full((n, K), np.nan)
    pair = np.full((max(n - 1, 0), K, K), np.nan)
    log_lik = 0.0
    cur = pi.copy()
    for t in range(n):
        s = 0.0
        for i in range(K):
            alpha[t, i] = cur[i] * e[t, i]
            s += alpha[t, i]
        if not (s > 0.0):
            return post, pair, -np.inf
        c[t] = s
        log_lik += np.log(s) + shift[t]
        for i in range(K):
            alpha[t, i] /= s
        for j in range(K):
            acc = 0.0
            for i in range(K):
                acc += alpha[t, i] * Q[i, j]
            cur[j] = acc

    beta = np.ones(K)
    nxt = np.empty(K)
    for i in range(K):
        post[n - 1, i] = alpha[n - 1, i]
    for t in range(n - 2, -1, -1):
        for i in range(K):
            acc = 0.0
            for j in range(K):
                w = Q[i, j] * e[t + 1, j] * beta[j] / c[t + 1]
                pair[t, i, j] = alpha[t, i] * w
                acc += w
            nxt[i] = acc
        tot = 0.0
        for i in range(K):
            beta[i] = nxt[i]
            post[t, i] = alpha[t, i] * beta[i]
            tot += post[t, i]
        # renormalize against rounding drift
        for i in range(K):
            post[t, i] /= tot
            for j in range(K):
                pair[t, i, j] /= tot
    return post, pair, log_lik
