"""Compiled inner loops for the order-statistic regularizers and the prox oracle."""

import numpy as np
from numba import njit

CE, TV2, LEC2 = 0, 1, 2


@njit(cache=True)
def cut_weights(kind, k):
    """Descending coefficient vector q with g(x) = q . sort_desc(x)."""
    q = np.zeros(k)
    if k < 2:
        return q
    h = 1 if kind == TV2 else k // 2
    for i in range(h):
        q[i] = 1.0
        q[k - 1 - i] = -1.0
    return q


@njit(cache=True)
def _order_value(x, q):
    order = np.argsort(-x, kind="mergesort")
    g = 0.0
    for i in range(x.shape[0]):
        g += q[i] * x[order[i]]
    return g


@njit(cache=True)
def _pav_decreasing(z):
    """Least-squares fit of ``z`` under v_1 >= v_2 >= ... (pool adjacent violators)."""
    n = z.shape[0]
    val = np.empty(n)
    cnt = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        val[top] = z[i]
        cnt[top] = 1
        while top > 0 and val[top - 1] < val[top]:
            w = cnt[top - 1] + cnt[top]
            val[top - 1] = (val[top - 1] * cnt[top - 1] + val[top] * cnt[top]) / w
            cnt[top - 1] = w
            top -= 1
        top += 1
    out = np.empty(n)
    pos = 0
    for b in range(top):
        for _ in range(cnt[b]):
            out[pos] = val[b]
            pos += 1
    return out


@njit(cache=True)
def _prox_linear(y, q, c, order):
    # prox of c * (q . sort_desc(x)) = isotonic fit of sorted(y) - c q, unsorted
    k = y.shape[0]
    z = np.empty(k)
    for i in range(k):
        z[i] = y[order[i]] - c * q[i]
    v = _pav_decreasing(z)
    x = np.empty(k)
    for i in range(k):
        x[order[i]] = v[i]
    return x


@njit(cache=True)
def prox_squared_column(y, q, s, tol, max_iter):
    """argmin_x s * (q . sort_desc(x))^2 + 0.5 ||x - y||^2 for one column.

    Solves for the multiplier c = 2 s g(x(c)) by bisection, where x(c) is the
    exact prox of the positively homogeneous piece c * g.
    Returns (x, residual, iterations).
    """
    order = np.argsort(-y, kind="mergesort")
    g0 = 0.0
    for i in range(y.shape[0]):
        g0 += q[i] * y[order[i]]
    if g0 <= 0.0:
        return y.copy(), 0.0, 0
    lo, hi = 0.0, 2.0 * s * g0
    it = 0
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        x = _prox_linear(y, q, mid, order)
        if mid - 2.0 * s * _order_value(x, q) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * 1e-3 * max(1.0, hi):
            break
    c = 0.5 * (lo + hi)
    x = _prox_linear(y, q, c, order)
    resid = abs(c - 2.0 * s * _order_value(x, q))
    return x, resid, it


@njit(cache=True)
def reg_value(kind, X):
    rows, cols = X.shape
    total = 0.0
    for j in range(cols):
        col = X[:, j].copy()
        if kind == CE:
            mu = col.mean()
            acc = 0.0
            for i in range(rows):
                acc += (col[i] - mu) ** 2
            total += 2.0 * rows * acc
        else:
            g = _order_value(col, cut_weights(kind, rows))
            total += g * g
    return total


@njit(cache=True)
def _value_and_subgradient(kind, X, Y, s, q, order, G):
    """Prox objective at X; writes a subgradient of the regularizer into G."""
    rows, cols = X.shape
    fit = 0.0
    reg = 0.0
    for j in range(cols):
        if kind == CE:
            mu = 0.0
            for i in range(rows):
                mu += X[i, j]
            mu /= rows
            acc = 0.0
            for i in range(rows):
                dev = X[i, j] - mu
                acc += dev * dev
                G[i, j] = 4.0 * rows * dev
            reg += 2.0 * rows * acc
        else:
            # insertion sort of row indices, descending by value
            for i in range(rows):
                order[i] = i
            for i in range(1, rows):
                cur = order[i]
                p = i - 1
                while p >= 0 and X[order[p], j] < X[cur, j]:
                    order[p + 1] = order[p]
                    p -= 1
                order[p + 1] = cur
            g = 0.0
            for i in range(rows):
                g += q[i] * X[order[i], j]
            for i in range(rows):
                G[order[i], j] = 2.0 * g * q[i]
            reg += g * g
        for i in range(rows):
            fit += 0.5 * (X[i, j] - Y[i, j]) ** 2
    return s * reg + fit


@njit(cache=True)
def subgradient_oracle(kind, Y, s, starts, base_steps, n_steps, decay):
    """Multi-start subgradient descent with diminishing steps; best iterate wins."""
    rows = Y.shape[0]
    q = cut_weights(kind, rows)
    order = np.empty(rows, dtype=np.int64)
    G = np.empty_like(Y)
    best = Y.copy()
    best_val = _value_and_subgradient(kind, Y, Y, s, q, order, G)
    schedule = 1.0 / np.sqrt(1.0 + np.arange(n_steps + 1) / decay)
    for r in range(starts.shape[0]):
        X = starts[r].copy()
        eta0 = base_steps[r]
        for t in range(n_steps + 1):
            val = _value_and_subgradient(kind, X, Y, s, q, order, G)
            if not val < 1e300:  # diverged or nan
                break
            if val < best_val:
                best_val = val
                for i in range(rows):
                    for j in range(X.shape[1]):
                        best[i, j] = X[i, j]
            eta = eta0 * schedule[t]
            moved = False
            for i in range(rows):
                for j in range(X.shape[1]):
                    new = X[i, j] - eta * (X[i, j] - Y[i, j] + s * G[i, j])
                    if new != X[i, j]:
                        moved = True
                    X[i, j] = new
            if not moved:  # exact fixed point in floating point
                break
    return best, best_val
