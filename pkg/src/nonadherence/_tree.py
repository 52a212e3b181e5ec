"""Compiled kernels for axis-aligned regression/classification trees.

Split quality is the weighted sum-of-squares reduction; on 0/1 targets that is
proportional to the Gini decrease, so one kernel serves both forests.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _best_split(X, y, idx, start, end, f, min_leaf, vals, order):
    n = end - start
    for k in range(n):
        vals[k] = X[idx[start + k], f]
    ord_ = np.argsort(vals[:n])
    for k in range(n):
        order[k] = ord_[k]
    total = 0.0
    for k in range(n):
        total += y[idx[start + order[k]]]
    best = -1.0
    best_pos = -1
    left_sum = 0.0
    for k in range(n - 1):
        left_sum += y[idx[start + order[k]]]
        nl = k + 1
        nr = n - nl
        if nl < min_leaf:
            continue
        if nr < min_leaf:
            break
        a = vals[order[k]]
        b = vals[order[k + 1]]
        if a == b:
            continue
        right_sum = total - left_sum
        proxy = left_sum * left_sum / nl + right_sum * right_sum / nr
        if proxy > best:
            best = proxy
            best_pos = k
    if best_pos < 0:
        return -1.0, 0.0
    a = vals[order[best_pos]]
    b = vals[order[best_pos + 1]]
    thr = 0.5 * (a + b)
    if thr >= b or thr < a:
        thr = a
    return best, thr


@njit(cache=True)
def _best_split_buckets(codes, y, idx, start, end, f, n_unique, uniq, min_leaf, cnt, sm):
    """Same scan as ``_best_split`` but over value buckets (no sort)."""
    for b in range(n_unique):
        cnt[b] = 0
        sm[b] = 0.0
    total = 0.0
    for k in range(start, end):
        i = idx[k]
        c = codes[i, f]
        cnt[c] += 1
        sm[c] += y[i]
        total += y[i]
    n = end - start
    best = -1.0
    best_a = -1
    best_b = -1
    nl = 0
    left_sum = 0.0
    prev = -1
    for b in range(n_unique):
        if cnt[b] == 0:
            continue
        if prev >= 0:
            nr = n - nl
            if nl >= min_leaf and nr >= min_leaf:
                right_sum = total - left_sum
                proxy = left_sum * left_sum / nl + right_sum * right_sum / nr
                if proxy > best:
                    best = proxy
                    best_a = prev
                    best_b = b
            elif nr < min_leaf:
                break
        nl += cnt[b]
        left_sum += sm[b]
        prev = b
    if best_a < 0:
        return -1.0, 0.0
    a = uniq[f, best_a]
    bv = uniq[f, best_b]
    thr = 0.5 * (a + bv)
    if thr >= bv or thr < a:
        thr = a
    return best, thr


@njit(cache=True)
def _grow(X, codes, n_unique, uniq, y, idx, min_leaf, n_candidates, feature, threshold, left, right,
          value):
    """Grow one tree over rows ``idx`` (with repeats); returns the node count."""
    n_rows = idx.shape[0]
    p = X.shape[1]
    vals = np.empty(n_rows)
    order = np.empty(n_rows, dtype=np.int64)
    buf = np.empty(n_rows, dtype=np.int64)
    perm = np.arange(p)
    max_u = uniq.shape[1]
    cnt = np.empty(max_u, dtype=np.int64)
    sm = np.empty(max_u)
    stack_node = np.empty(2 * n_rows + 2, dtype=np.int64)
    stack_start = np.empty(2 * n_rows + 2, dtype=np.int64)
    stack_end = np.empty(2 * n_rows + 2, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_rows
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        n = end - start
        s = 0.0
        ss = 0.0
        for k in range(start, end):
            v = y[idx[k]]
            s += v
            ss += v * v
        mean = s / n
        value[node] = mean
        feature[node] = LEAF
        left[node] = LEAF
        right[node] = LEAF
        if n < 2 * min_leaf or ss - s * s / n <= 1e-12:
            continue
        # visit features in random order until n_candidates non-constant ones are seen
        best = -1.0
        best_f = -1
        best_thr = 0.0
        seen = 0
        for j in range(p):
            r = j + np.random.randint(0, p - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            lo = X[idx[start], f]
            hi = lo
            for k in range(start + 1, end):
                v = X[idx[k], f]
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            if lo == hi:
                continue
            seen += 1
            if n_unique[f] <= 4 * n:
                proxy, thr = _best_split_buckets(codes, y, idx, start, end, f, n_unique[f], uniq,
                                                 min_leaf, cnt, sm)
            else:
                proxy, thr = _best_split(X, y, idx, start, end, f, min_leaf, vals, order)
            if proxy > best:
                best = proxy
                best_f = f
                best_thr = thr
            if seen >= n_candidates:
                break
        if best_f < 0:
            continue
        nl = 0
        nr = 0
        for k in range(start, end):
            if X[idx[k], best_f] <= best_thr:
                idx[start + nl] = idx[k]
                nl += 1
            else:
                buf[nr] = idx[k]
                nr += 1
        for k in range(nr):
            idx[start + nl + k] = buf[k]
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack_node[sp] = rnode
        stack_start[sp] = start + nl
        stack_end[sp] = end
        sp += 1
        stack_node[sp] = lnode
        stack_start[sp] = start
        stack_end[sp] = start + nl
        sp += 1
    return n_nodes


@njit(cache=True)
def fit_trees(X, codes, n_unique, uniq, y, n_trees, min_leaf, n_candidates, seed, bootstrap):
    """Fit ``n_trees`` trees; tree t uses its own stream seeded with ``seed + t``."""
    n = X.shape[0]
    cap = 2 * n + 1
    feature = np.full((n_trees, cap), LEAF, dtype=np.int64)
    threshold = np.zeros((n_trees, cap))
    left = np.full((n_trees, cap), LEAF, dtype=np.int64)
    right = np.full((n_trees, cap), LEAF, dtype=np.int64)
    value = np.zeros((n_trees, cap))
    counts = np.zeros(n_trees, dtype=np.int64)
    for t in range(n_trees):
        np.random.seed(seed + t)
        if bootstrap:
            idx = np.random.randint(0, n, n).astype(np.int64)
        else:
            idx = np.arange(n).astype(np.int64)
        counts[t] = _grow(X, codes, n_unique, uniq, y, idx, min_leaf, n_candidates,
                          feature[t], threshold[t], left[t], right[t], value[t])
    return feature, threshold, left, right, value, counts


@njit(cache=True)
def predict_trees(X, feature, threshold, left, right, value):
    n = X.shape[0]
    n_trees = feature.shape[0]
    out = np.zeros(n)
    for t in range(n_trees):
        for i in range(n):
            node = 0
            while feature[t, node] != LEAF:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            out[i] += value[t, node]
    return out / n_trees


def value_codes(X):
    """Dense per-column value ranks, unique counts and the padded unique values."""
    n, p = X.shape
    codes = np.empty((n, p), dtype=np.int64)
    n_unique = np.empty(p, dtype=np.int64)
    uniques = []
    for j in range(p):
        u, inv = np.unique(X[:, j], return_inverse=True)
        codes[:, j] = inv
        n_unique[j] = u.size
        uniques.append(u)
    uniq = np.zeros((p, max(1, int(n_unique.max()))))
    for j, u in enumerate(uniques):
        uniq[j, : u.size] = u
    return codes, n_unique, uniq
