"""Compiled Gaussian-kernel sums over samples on a uniform 1D node set.

These are the workhorses of density estimation and kernel regression.  The
kernel is truncated at ``cutoff`` bandwidths; at the default of 7 the
neglected weight is below 1e-11.  Sums run sample by sample in input order,
so results are reproducible bit for bit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

CUTOFF = 7.0


@njit(cache=True)
def _node_range(xi, g0, dg, n_nodes, reach):
    lo = int(math.ceil((xi - reach - g0) / dg))
    hi = int(math.floor((xi + reach - g0) / dg))
    if lo < 0:
        lo = 0
    if hi > n_nodes - 1:
        hi = n_nodes - 1
    return lo, hi


@njit(cache=True)
def kernel_moments(x, w, y, g0, dg, n_nodes, bw, cutoff):
    """Local moments of a weighted sample at each node g.

    Columns: count of weight within one bandwidth, S0 = sum K, S1 = sum K dx,
    S2 = sum K dx^2, then sum K y_c and sum K y_c dx for every column c of y,
    where dx = x - g and K = w exp(-dx^2 / 2 bw^2).
    """
    q = y.shape[1]
    out = np.zeros((n_nodes, 4 + 2 * q))
    reach = cutoff * bw
    for i in range(x.shape[0]):
        xi = x[i]
        wi = w[i]
        if wi == 0.0:
            continue
        lo, hi = _node_range(xi, g0, dg, n_nodes, reach)
        for j in range(lo, hi + 1):
            dx = xi - (g0 + j * dg)
            z = dx / bw
            k = wi * math.exp(-0.5 * z * z)
            if abs(z) <= 1.0:
                out[j, 0] += wi
            out[j, 1] += k
            out[j, 2] += k * dx
            out[j, 3] += k * dx * dx
            for c in range(q):
                out[j, 4 + c] += k * y[i, c]
                out[j, 4 + q + c] += k * y[i, c] * dx
    return out


@njit(cache=True)
def kernel_sums(x, w, g0, dg, n_nodes, bw, cutoff):
    """Plain weighted kernel sums sum_i w_i exp(-(x_i - g)^2 / 2 bw^2)."""
    out = np.zeros(n_nodes)
    reach = cutoff * bw
    for i in range(x.shape[0]):
        xi = x[i]
        wi = w[i]
        if wi == 0.0:
            continue
        lo, hi = _node_range(xi, g0, dg, n_nodes, reach)
        for j in range(lo, hi + 1):
            z = (xi - (g0 + j * dg)) / bw
            out[j] += wi * math.exp(-0.5 * z * z)
    return out


@njit(cache=True)
def kernel_matrix(x, g0, dg, n_nodes, bw, cutoff):
    """Sparse (node, sample, weight) triplets of the truncated kernel."""
    reach = cutoff * bw
    nnz = 0
    for i in range(x.shape[0]):
        lo, hi = _node_range(x[i], g0, dg, n_nodes, reach)
        if hi >= lo:
            nnz += hi - lo + 1
    rows = np.empty(nnz, np.int64)
    cols = np.empty(nnz, np.int64)
    vals = np.empty(nnz)
    k = 0
    for i in range(x.shape[0]):
        lo, hi = _node_range(x[i], g0, dg, n_nodes, reach)
        for j in range(lo, hi + 1):
            z = (x[i] - (g0 + j * dg)) / bw
            rows[k] = j
            cols[k] = i
            vals[k] = math.exp(-0.5 * z * z)
            k += 1
    return rows, cols, vals
