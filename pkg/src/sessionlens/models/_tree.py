"""Compiled CART (Gini) growth and traversal kernels for the random forest.

Trees are stored as flat arrays: ``feature[node]`` is -1 for leaves,
``threshold`` routes ``x <= threshold`` to ``left``, and ``counts`` holds the
per-class training counts reaching each node.
"""
import numpy as np
from numba import njit

_U13 = np.uint64(13)
_U7 = np.uint64(7)
_U17 = np.uint64(17)


@njit(cache=True, nogil=True)
def _xorshift(state):
    x = state[0]
    x ^= x << _U13
    x ^= x >> _U7
    x ^= x << _U17
    state[0] = x
    return x


@njit(cache=True, nogil=True)
def grow_tree(X, y, sample_idx, n_classes, max_features, min_leaf, seed):
    n_feat = X.shape[1]
    m_total = sample_idx.shape[0]
    cap = 2 * m_total + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.float64)

    samples = sample_idx.copy()
    feats = np.arange(n_feat)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed) | np.uint64(1)

    # explicit DFS stack of (node, start, end)
    stack = np.empty((cap, 3), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m_total
    top = 1
    n_nodes = 1

    vals = np.empty(m_total, dtype=np.float64)
    left_c = np.empty(n_classes, dtype=np.float64)
    right_c = np.empty(n_classes, dtype=np.float64)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        m = end - start
        for i in range(start, end):
            counts[node, y[samples[i]]] += 1.0
        n_present = 0
        parent_sq = 0.0
        for c in range(n_classes):
            if counts[node, c] > 0:
                n_present += 1
            parent_sq += counts[node, c] * counts[node, c]
        if n_present <= 1 or m < 2 * min_leaf:
            continue

        parent_score = parent_sq / m
        best_score = parent_score + 1e-12
        best_feat = -1
        best_thr = 0.0
        visited = 0
        examined = 0
        while visited < n_feat and examined < max_features:
            j = visited + np.int64(_xorshift(state) % np.uint64(n_feat - visited))
            tmp = feats[visited]
            feats[visited] = feats[j]
            feats[j] = tmp
            f = feats[visited]
            visited += 1

            for i in range(m):
                vals[i] = X[samples[start + i], f]
            order = np.argsort(vals[:m], kind="mergesort")
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            examined += 1

            for c in range(n_classes):
                left_c[c] = 0.0
                right_c[c] = counts[node, c]
            for k in range(m - 1):
                cls = y[samples[start + order[k]]]
                left_c[cls] += 1.0
                right_c[cls] -= 1.0
                lo = vals[order[k]]
                hi = vals[order[k + 1]]
                if lo == hi:
                    continue
                n_l = k + 1
                n_r = m - n_l
                if n_l < min_leaf or n_r < min_leaf:
                    continue
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += left_c[c] * left_c[c]
                    sr += right_c[c] * right_c[c]
                score = sl / n_l + sr / n_r
                if score > best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (lo + hi)
                    if thr >= hi:
                        thr = lo
                    best_thr = thr

        if best_feat < 0:
            continue

        # partition samples[start:end] in place
        i = start
        k = end - 1
        while i <= k:
            if X[samples[i], best_feat] <= best_thr:
                i += 1
            else:
                tmp = samples[i]
                samples[i] = samples[k]
                samples[k] = tmp
                k -= 1
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right child pushed first so the left subtree is grown first
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = i
        stack[top, 2] = end
        top += 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = i
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row of ``X``."""
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@njit(cache=True, nogil=True)
def leaf_votes(counts):
    """Majority class per node, ties going to the smaller class index."""
    out = np.empty(counts.shape[0], dtype=np.int64)
    for i in range(counts.shape[0]):
        best = 0
        for c in range(1, counts.shape[1]):
            if counts[i, c] > counts[i, best]:
                best = c
        out[i] = best
    return out
