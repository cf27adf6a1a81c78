"""Fused elementwise kernels for the classifier hot loops.

Plain numpy spends several full-array passes (and temporaries) on the
activation and batch-norm elementwise work, which dominates training time on
memory-bandwidth-limited machines; these numba kernels do each step in a
single pass.  All kernels operate on 2D arrays and are dtype-generic.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def elu_backward_(g, y):
    """In-place ELU gradient: g <- g * (1 if y > 0 else y + 1).

    Uses the forward output y, valid because y > 0 iff the input was > 0
    and dELU/dx = exp(x) = y + 1 on the negative branch.
    """
    n, c = g.shape
    for i in range(n):
        for j in range(c):
            if y[i, j] <= 0.0:
                g[i, j] *= y[i, j] + 1.0


@njit(cache=True)
def scale_shift(x, a, b):
    """Column-wise affine map: returns x * a + b in one pass."""
    n, c = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for j in range(c):
            out[i, j] = x[i, j] * a[j] + b[j]
    return out


@njit(cache=True)
def center_scale_(x, mu, istd):
    """In-place normalization: x <- (x - mu) * istd, column-wise."""
    n, c = x.shape
    for i in range(n):
        for j in range(c):
            x[i, j] = (x[i, j] - mu[j]) * istd[j]


@njit(cache=True)
def column_sums(g, xhat):
    """Per-column sums of g and of g * xhat in a single pass."""
    n, c = g.shape
    s_g = np.zeros(c, dtype=g.dtype)
    s_gx = np.zeros(c, dtype=g.dtype)
    for i in range(n):
        for j in range(c):
            v = g[i, j]
            s_g[j] += v
            s_gx[j] += v * xhat[i, j]
    return s_g, s_gx


@njit(cache=True)
def weighted_stats(x, w):
    """Weighted column mean and biased variance in a single pass.

    Rows carry multiplicity weights w; equivalent to the plain statistics of
    the expanded array where row i appears w[i] times.
    """
    n, c = x.shape
    sx = np.zeros(c, dtype=np.float64)
    sxx = np.zeros(c, dtype=np.float64)
    total = 0.0
    for i in range(n):
        wi = w[i]
        total += wi
        for j in range(c):
            v = x[i, j]
            sx[j] += wi * v
            sxx[j] += wi * v * v
    mu = np.empty(c, dtype=x.dtype)
    var = np.empty(c, dtype=x.dtype)
    for j in range(c):
        m = sx[j] / total
        mu[j] = m
        v = sxx[j] / total - m * m
        var[j] = v if v > 0.0 else 0.0
    return mu, var


@njit(cache=True)
def bn_backward_weighted_(g, xhat, istd, gamma, s1, s2, w, inv_total):
    """In-place batch-norm input gradient with multiplicity-weighted stats.

    g <- istd * (g * gamma - w * (s1 + xhat * s2) * inv_total)

    where s1 = gamma * sum_rows g and s2 = gamma * sum_rows (g * xhat) are
    unweighted row sums (each unique row's upstream gradient already
    aggregates its duplicates) and inv_total is one over the total weight.
    """
    n, c = g.shape
    for i in range(n):
        wi = w[i] * inv_total
        for j in range(c):
            g[i, j] = istd[j] * (g[i, j] * gamma[j]
                                 - wi * (s1[j] + xhat[i, j] * s2[j]))
