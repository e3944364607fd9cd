"""Numba-jitted evaluation kernels (default backend).

Loop forms of the same computations as `_kernels_np`; the RNG keying,
clamping, and tie handling match slot for slot so results are bit-identical
across backends and across thread counts.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53_INV = 2.0 ** -53
_STEP_COMPARE = np.uint64(2)
_STEP_EQUAL = np.uint64(4)


@njit(cache=True, inline="always")
def _mix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _u01(seed_h, row, step, node):
    h = _mix64(seed_h ^ row)
    h = _mix64(h ^ step)
    h = _mix64(h ^ node)
    return (h >> np.uint64(11)) * _U53_INV


@njit(cache=True, inline="always")
def _draw_k(v, k_values, k_cum):
    j = 0
    while j < k_cum.shape[0] - 1 and v >= k_cum[j]:
        j += 1
    return k_values[j]


@njit(cache=True, parallel=True)
def run_bundle(X, row_ids, feat_idx, slot_real, cmp_tables, C, leaf_tlu,
               eq_tables, leaf_values, root_leaf, offset, p_error,
               k_values, k_cum, seed):
    n = X.shape[0]
    N, M = feat_idx.shape
    Lv = C.shape[1]
    W1 = cmp_tables.shape[2]
    W2 = eq_tables.shape[2]
    seed_h = _mix64(np.uint64(seed))

    tree_sums = np.zeros((n, N), dtype=np.int64)
    s_sums = np.zeros((n, N), dtype=np.int64)
    s_first = np.full((n, N), -1, dtype=np.int64)
    fails = np.zeros(n, dtype=np.int64)

    for r in prange(n):
        row = row_ids[r]
        nfail = 0
        q = np.empty(M, dtype=np.int64)
        for k in range(N):
            if root_leaf[k]:
                tree_sums[r, k] = leaf_values[k, 0]
                s_sums[r, k] = 1
                s_first[r, k] = 0
                continue
            for i in range(M):
                if not slot_real[k, i]:
                    q[i] = 0
                    continue
                idx = X[r, feat_idx[k, i]]
                if p_error > 0.0:
                    u = _u01(seed_h, row, _STEP_COMPARE, np.uint64(k * M + i))
                    if u < p_error:
                        nfail += 1
                        idx = idx + _draw_k(u / p_error, k_values, k_cum)
                if idx < 0:
                    idx = 0
                elif idx > W1 - 1:
                    idx = W1 - 1
                q[i] = cmp_tables[k, i, idx]
            tsum = np.int64(0)
            ssum = np.int64(0)
            sfirst = np.int64(-1)
            for l in range(Lv):
                if not leaf_tlu[k, l]:
                    continue
                acc = np.int64(0)
                for i in range(M):
                    c = C[k, l, i]
                    if c != 0:
                        acc += c * q[i]
                idx2 = acc + offset
                if p_error > 0.0:
                    u = _u01(seed_h, row, _STEP_EQUAL, np.uint64(k * Lv + l))
                    if u < p_error:
                        nfail += 1
                        idx2 = idx2 + _draw_k(u / p_error, k_values, k_cum)
                if idx2 < 0:
                    idx2 = 0
                elif idx2 > W2 - 1:
                    idx2 = W2 - 1
                if eq_tables[k, l, idx2]:
                    ssum += 1
                    if sfirst < 0:
                        sfirst = l
                    tsum += leaf_values[k, l]
            tree_sums[r, k] = tsum
            s_sums[r, k] = ssum
            s_first[r, k] = sfirst
        fails[r] = nfail
    return tree_sums, s_sums, s_first, fails


@njit(cache=True, parallel=True)
def walk_trees(X, root, feature, threshold, left, right, is_leaf, n_steps):
    n = X.shape[0]
    N = root.shape[0]
    cur = np.empty((n, N), dtype=np.int64)
    for r in prange(n):
        for k in range(N):
            node = np.int64(root[k])
            for _ in range(n_steps):
                if is_leaf[k, node]:
                    break
                if X[r, feature[k, node]] < threshold[k, node]:
                    node = np.int64(left[k, node])
                else:
                    node = np.int64(right[k, node])
            cur[r, k] = node
    return cur
