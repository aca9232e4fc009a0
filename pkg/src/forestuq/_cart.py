"""Numba kernels for multiplicity-weighted CART growth and tree traversal.

Trees are stored as flat node arrays. A node with ``feature == -1`` is a leaf.
Samples go left when ``x[feature] <= threshold``.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True, nogil=True)
def _splitmix_next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _randint(state, high):
    # uniform integer in [0, high) from the top 53 bits
    u = (_splitmix_next(state) >> _S11) * (1.0 / 9007199254740992.0)
    r = int(u * high)
    if r >= high:
        r = high - 1
    return r


@njit(cache=True, nogil=True)
def _node_stats(samples, start, end, y, yc, counts, n_classes, out):
    """Fill ``out`` with the node prediction; return (weight, is_pure)."""
    w = 0.0
    if n_classes == 0:
        s = 0.0
        first = y[samples[start]]
        pure = True
        for a in range(start, end):
            j = samples[a]
            c = counts[j]
            w += c
            s += c * y[j]
            if y[j] != first:
                pure = False
        out[0] = s / w
        return w, pure
    for c in range(n_classes):
        out[c] = 0.0
    for a in range(start, end):
        j = samples[a]
        out[yc[j]] += counts[j]
        w += counts[j]
    nonzero = 0
    for c in range(n_classes):
        if out[c] > 0:
            nonzero += 1
        out[c] /= w
    return w, nonzero <= 1


@njit(cache=True, nogil=True)
def grow_tree(X, y, yc, n_classes, counts, max_features, min_leaf, max_depth, seed):
    """Grow one tree on the in-bag multiset given by ``counts``.

    ``n_classes == 0`` selects regression on ``y``; otherwise Gini on the
    integer labels ``yc``. ``max_depth < 0`` means unlimited.
    """
    n, p = X.shape
    n_out = 1 if n_classes == 0 else n_classes

    n_in = 0
    for j in range(n):
        if counts[j] > 0:
            n_in += 1
    samples = np.empty(n_in, dtype=np.int64)
    a = 0
    for j in range(n):
        if counts[j] > 0:
            samples[a] = j
            a += 1

    cap = 2 * n_in + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_out), dtype=np.float64)
    weight = np.zeros(cap, dtype=np.float64)

    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_start[0] = 0
    st_end[0] = n_in
    st_node[0] = 0
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    perm = np.arange(p)
    xs = np.empty(n_in, dtype=np.float64)
    buf = np.empty(n_in, dtype=np.int64)
    left_cnt = np.empty(n_out, dtype=np.float64)
    tot_cnt = np.empty(n_out, dtype=np.float64)

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        node = st_node[top]
        depth = st_depth[top]

        w, pure = _node_stats(samples, start, end, y, yc, counts, n_classes, value[node])
        weight[node] = w
        if pure or w < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        tot_sum = value[node, 0] * w
        if n_classes > 0:
            for c in range(n_out):
                tot_cnt[c] = value[node, c] * w

        best_score = -np.inf
        best_feat = -1
        best_thr = 0.0
        m = end - start
        visited = 0
        for i in range(p):
            if visited >= max_features:
                break
            r = i + _randint(state, p - i)
            tmp = perm[i]
            perm[i] = perm[r]
            perm[r] = tmp
            f = perm[i]

            lo = np.inf
            hi = -np.inf
            for a in range(m):
                v = X[samples[start + a], f]
                xs[a] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if lo == hi:
                continue
            visited += 1

            order = np.argsort(xs[:m], kind="mergesort")
            wl = 0.0
            sl = 0.0
            if n_classes > 0:
                for c in range(n_out):
                    left_cnt[c] = 0.0
            for a in range(m - 1):
                j = samples[start + order[a]]
                cj = counts[j]
                wl += cj
                if n_classes == 0:
                    sl += cj * y[j]
                else:
                    left_cnt[yc[j]] += cj
                x_here = xs[order[a]]
                x_next = xs[order[a + 1]]
                if x_here == x_next:
                    continue
                wr = w - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                if n_classes == 0:
                    sr = tot_sum - sl
                    score = sl * sl / wl + sr * sr / wr
                else:
                    gl = 0.0
                    gr = 0.0
                    for c in range(n_out):
                        gl += left_cnt[c] * left_cnt[c]
                        rc = tot_cnt[c] - left_cnt[c]
                        gr += rc * rc
                    score = gl / wl + gr / wr
                if score > best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (x_here + x_next)
                    if thr >= x_next:
                        thr = x_here
                    best_thr = thr

        if best_feat < 0:
            continue

        # stable partition: x <= thr to the left
        nl = 0
        nr = 0
        for a in range(start, end):
            j = samples[a]
            if X[j, best_feat] <= best_thr:
                samples[start + nl] = j
                nl += 1
            else:
                buf[nr] = j
                nr += 1
        for a in range(nr):
            samples[start + nl + a] = buf[a]

        feature[node] = best_feat
        threshold[node] = best_thr
        lc = n_nodes
        rc_ = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc_
        # push right first so the left subtree is grown first
        st_start[top] = start + nl
        st_end[top] = end
        st_node[top] = rc_
        st_depth[top] = depth + 1
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_node[top] = lc
        st_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        weight[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def apply_packed(X, feature, threshold, left, right, roots):
    """Global leaf id of every row of ``X`` in every tree; shape (n, B)."""
    n = X.shape[0]
    n_trees = roots.shape[0]
    out = np.empty((n, n_trees), dtype=np.int64)
    for i in range(n):
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = node
    return out
