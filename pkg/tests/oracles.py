"""Brute-force reference implementations written as explicit loops over
observations, independent of the vectorized library code."""
import math

import numpy as np


def _s(x, sigma):
    z = x / sigma
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _s1(x, sigma):
    s = _s(x, sigma)
    return s * (1.0 - s) / sigma


def _s2(x, sigma):
    s = _s(x, sigma)
    return s * (1.0 - s) * (1.0 - 2.0 * s) / sigma**2


def _dot(a, b):
    return sum(ai * bi for ai, bi in zip(a, b))


def pr_objective(beta, time, event, X):
    n = len(time)
    total = 0
    for i in range(n):
        for l in range(n):
            if i != l and event[l] == 1 and time[i] > time[l]:
                if _dot(beta, X[i]) - _dot(beta, X[l]) > 0:
                    total += 1
    return total / (n * (n - 1))


def spr_objective(beta, time, event, X, sigma):
    n = len(time)
    total = 0.0
    for i in range(n):
        for l in range(n):
            if i != l and event[l] == 1 and time[i] > time[l]:
                total += _s(_dot(beta, X[i]) - _dot(beta, X[l]), sigma)
    return total / (n * (n - 1))


def spr_gradient(beta, time, event, X, sigma):
    n, p = len(time), len(beta)
    g = [0.0] * p
    for i in range(n):
        for l in range(n):
            if i != l and event[l] == 1 and time[i] > time[l]:
                w = _s1(_dot(beta, X[i]) - _dot(beta, X[l]), sigma)
                for j in range(p):
                    g[j] += w * (X[i][j] - X[l][j])
    return np.array(g) / (n * (n - 1))


def spr_hessian(beta, time, event, X, sigma):
    """Minus the second derivative of the smoothed objective."""
    n, p = len(time), len(beta)
    H = [[0.0] * p for _ in range(p)]
    for i in range(n):
        for l in range(n):
            if i != l and event[l] == 1 and time[i] > time[l]:
                w = _s2(_dot(beta, X[i]) - _dot(beta, X[l]), sigma)
                d = [X[i][j] - X[l][j] for j in range(p)]
                for a in range(p):
                    for b in range(p):
                        H[a][b] -= w * d[a] * d[b]
    return np.array(H) / (n * (n - 1))


def c_index(beta, time, event, X):
    num = den = 0
    n = len(time)
    for i in range(n):
        for l in range(n):
            if event[l] == 1 and time[i] > time[l]:
                den += 1
                if _dot(beta, X[i]) > _dot(beta, X[l]):
                    num += 1
    return num / den


def variance_sandwich(beta, time, event, X, sigma):
    """G = n^-1 sum_l g_l g_l' with g_l the averaged two-term kernel at V_l."""
    n, p = len(time), len(beta)
    G = [[0.0] * p for _ in range(p)]
    for l in range(n):
        y, dl, x = time[l], event[l], X[l]
        g = [0.0] * p
        for i in range(n):
            sx, si = _dot(beta, x), _dot(beta, X[i])
            t1 = event[i] * (1.0 if y >= time[i] else 0.0) * _s1(sx - si, sigma)
            t2 = dl * (1.0 if time[i] >= y else 0.0) * _s1(si - sx, sigma)
            for j in range(p):
                g[j] += t1 * (x[j] - X[i][j]) + t2 * (X[i][j] - x[j])
        g = [v / n for v in g]
        for a in range(p):
            for b in range(p):
                G[a][b] += g[a] * g[b]
    return np.array(G) / n


def logrank(time, event, group):
    """Observed-minus-expected table for group 1, then chi-square."""
    times = sorted({t for t, e in zip(time, event) if e == 1})
    o_minus_e = 0.0
    var = 0.0
    for t in times:
        n_t = sum(1 for s in time if s >= t)
        n1 = sum(1 for s, g in zip(time, group) if s >= t and g == 1)
        d_t = sum(1 for s, e in zip(time, event) if s == t and e == 1)
        d1 = sum(1 for s, e, g in zip(time, event, group) if s == t and e == 1 and g == 1)
        o_minus_e += d1 - d_t * n1 / n_t
        if n_t > 1:
            var += d_t * (n1 / n_t) * (1 - n1 / n_t) * (n_t - d_t) / (n_t - 1)
    return o_minus_e**2 / var


def erc(b0, bk):
    """Kendall-type agreement of coordinate orderings, strict inequalities."""
    p = len(b0)
    num = den = 0
    for a in range(p):
        for b in range(p):
            if b0[a] > b0[b]:
                den += 1
                if bk[a] > bk[b]:
                    num += 1
    return num / den


def lasso_orthogonal(b_ls, lam):
    """Soft thresholding: minimizer of 0.5 ||b - b_ls||^2 + lam ||b||_1."""
    return np.sign(b_ls) * np.maximum(np.abs(b_ls) - lam, 0.0)
