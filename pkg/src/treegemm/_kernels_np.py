"""Pure-numpy evaluation kernels (fallback backend).

Vectorized implementations of the compiled-bundle execution and the packed
tree walk. Must stay bit-identical to the numba backend: same RNG keying,
same clamping, same tie handling.
"""

from __future__ import annotations

import numpy as np

from ._rng import STEP_COMPARE, STEP_EQUAL, key_hash, uniforms

NAME = "numpy"


def _displacements(u, p_error, k_values, k_cum, mask):
    """Displacement per slot: 0 where the draw passes, else the sampled k."""
    fail = (u < p_error) & mask
    v = np.where(fail, u / p_error, 0.0)
    j = np.minimum(np.searchsorted(k_cum, v, side="right"), len(k_cum) - 1)
    return np.where(fail, k_values[j], 0), fail


def run_bundle(X, row_ids, feat_idx, slot_real, cmp_tables, C, leaf_tlu,
               eq_tables, leaf_values, root_leaf, offset, p_error,
               k_values, k_cum, seed, collect_trace=False):
    n = X.shape[0]
    N, M = feat_idx.shape
    Lv = C.shape[1]
    W1 = cmp_tables.shape[2]
    W2 = eq_tables.shape[2]

    kk = np.arange(N)[None, :, None]
    ii = np.arange(M)[None, None, :]
    safe_feat = np.where(feat_idx >= 0, feat_idx, 0)
    P = X[:, safe_feat]                                   # (n, N, M)

    fails = np.zeros(n, dtype=np.int64)
    idx = P
    if p_error > 0.0 and M > 0:
        nodes = (np.arange(N)[:, None] * M + np.arange(M)[None, :])
        h = key_hash(seed, np.asarray(row_ids)[:, None, None], STEP_COMPARE, nodes[None, :, :])
        disp, fail = _displacements(uniforms(h), p_error, k_values, k_cum, slot_real[None, :, :])
        idx = P + disp
        fails += fail.sum(axis=(1, 2), dtype=np.int64)
    idx = np.clip(idx, 0, W1 - 1)
    Q = cmp_tables[kk, ii, idx] if M > 0 else np.zeros((n, N, 0), dtype=np.uint8)

    R = np.einsum("nkm,klm->nkl", Q.astype(np.int64), C.astype(np.int64))
    idx2 = R + offset
    if p_error > 0.0:
        nodes2 = (np.arange(N)[:, None] * Lv + np.arange(Lv)[None, :])
        h2 = key_hash(seed, np.asarray(row_ids)[:, None, None], STEP_EQUAL, nodes2[None, :, :])
        disp2, fail2 = _displacements(uniforms(h2), p_error, k_values, k_cum, leaf_tlu[None, :, :])
        idx2 = idx2 + disp2
        fails += fail2.sum(axis=(1, 2), dtype=np.int64)
    idx2 = np.clip(idx2, 0, W2 - 1)
    ll = np.arange(Lv)[None, None, :]
    S = eq_tables[np.arange(N)[None, :, None], ll, idx2]  # (n, N, Lv)

    s_sums = S.sum(axis=2, dtype=np.int64)
    s_first = np.where(s_sums > 0, S.argmax(axis=2), -1).astype(np.int64)
    tree_sums = np.einsum("nkl,kl->nk", S.astype(np.int64), leaf_values)

    # Trees without internal nodes contribute their constant leaf, no TLUs.
    if root_leaf.any():
        tree_sums = np.where(root_leaf[None, :], leaf_values[:, 0][None, :], tree_sums)
        s_sums = np.where(root_leaf[None, :], 1, s_sums)
        s_first = np.where(root_leaf[None, :], 0, s_first)

    if collect_trace:
        return tree_sums, s_sums, s_first, fails, (P, Q, R, S)
    return tree_sums, s_sums, s_first, fails, None


def walk_trees(X, root, feature, threshold, left, right, is_leaf, n_steps):
    """Route every row through every packed tree; returns final node slots."""
    n = X.shape[0]
    N = root.shape[0]
    kk = np.arange(N)[None, :]
    rows = np.arange(n)[:, None]
    cur = np.broadcast_to(root[None, :], (n, N)).copy()
    for _ in range(n_steps):
        leaf_now = is_leaf[kk, cur].astype(bool)
        if leaf_now.all():
            break
        f = feature[kk, cur]
        t = threshold[kk, cur]
        xv = X[rows, np.where(f >= 0, f, 0)]
        nxt = np.where(xv < t, left[kk, cur], right[kk, cur])
        cur = np.where(leaf_now, cur, nxt)
    return cur.astype(np.int64)
