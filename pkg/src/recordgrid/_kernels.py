"""Compiled inner loops for permutation tests."""

import numpy as np
from numba import njit


@njit(cache=True)
def subset_labels(uniforms, total, chosen):
    """Rows with ``chosen`` ones placed by a partial Fisher-Yates pass.

    Row ``b`` of ``uniforms`` (``chosen`` columns) drives one pass.
    """
    n_perm = uniforms.shape[0]
    out = np.zeros((n_perm, total), dtype=np.uint8)
    idx = np.empty(total, dtype=np.int64)
    for b in range(n_perm):
        for i in range(total):
            idx[i] = i
        for i in range(chosen):
            j = i + int(uniforms[b, i] * (total - i))
            if j >= total:
                j = total - 1
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            out[b, idx[i]] = 1
    return out


@njit(cache=True)
def fisher_yates(perm, uniforms):
    n = perm.shape[0]
    for step in range(n - 1):
        i = n - 1 - step
        j = int(uniforms[step] * (i + 1))
        if j > i:
            j = i
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


@njit(cache=True, fastmath=True)
def sorted_energy(labels_t, orders, gaps, n_a, n_b):
    """Sum over projections of ``2 * sum(gap * (F - G)^2)`` per relabeling.

    ``labels_t`` is ``(total, n_perm)`` so the innermost loop runs over
    relabelings with contiguous memory.
    """
    n_perm = labels_t.shape[1]
    n_dir, m = gaps.shape
    alpha = 1.0 / n_a + 1.0 / n_b
    beta = 1.0 / n_b
    acc = np.zeros(n_perm)
    c = np.zeros(n_perm)
    for l in range(n_dir):
        c[:] = 0.0
        for k in range(m):
            row = labels_t[orders[l, k]]
            g = gaps[l, k]
            shift = (k + 1) * beta
            for b in range(n_perm):
                c[b] += row[b]
                d = c[b] * alpha - shift
                acc[b] += g * d * d
    return 2.0 * acc


@njit(cache=True)
def sorted_ks(labels, order, gaps, n_a, n_b):
    """``max |F - G|`` over boundaries between distinct pooled values."""
    n_perm = labels.shape[0]
    m = gaps.shape[0]
    alpha = 1.0 / n_a + 1.0 / n_b
    beta = 1.0 / n_b
    out = np.zeros(n_perm)
    for b in range(n_perm):
        c = 0
        best = 0.0
        for k in range(m):
            c += labels[b, order[k]]
            if gaps[k] > 0:
                d = abs(c * alpha - (k + 1) * beta)
                if d > best:
                    best = d
        out[b] = best
    return out
