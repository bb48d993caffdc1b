"""Pure-Python/numpy tree grower, the fallback for ``krf._tree_ext``.

Both implementations perform the same floating-point operations in the same
order, so they grow bit-identical trees for the same inputs and seed:

* rows of a node are ordered by ``(feature value, row id)`` before a scan;
* label sums are accumulated sequentially in that order;
* the split score is ``sum_k sL_k*sL_k/nL + sR_k*sR_k/nR`` (maximised),
  summed over outputs in index order, first maximum wins;
* features per node come from a splitmix64 stream (partial Fisher-Yates).
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state):
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def build_tree(X, Y, samples, max_depth, min_split, min_leaf, mtry, seed):
    """Grow one multi-output CART regression tree.

    Returns ``(feature, threshold, left, right, value, n_node_samples)``;
    ``feature == -1`` marks a leaf.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    idx = np.array(samples, dtype=np.int64, copy=True)
    m = idx.shape[0]
    n_features = X.shape[1]
    n_outputs = Y.shape[1]
    cap = max(1, 2 * m - 1)

    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_outputs), dtype=np.float64)
    n_node = np.zeros(cap, dtype=np.int64)

    state = int(seed) & _MASK
    stack = [(0, m, 0, -1, False)]
    count = 0
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = count
        count += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        rows = idx[start:end]
        n = end - start
        ys = Y[rows]
        n_node[node] = n
        value[node] = np.cumsum(ys, axis=0)[-1] / n

        if (depth >= max_depth or n < min_split or n < 2 * min_leaf
                or bool((ys == ys[0]).all())):
            continue

        feats = list(range(n_features))
        for i in range(mtry):
            state, r = splitmix64(state)
            j = i + r % (n_features - i)
            feats[i], feats[j] = feats[j], feats[i]

        best_proxy = -np.inf
        best_f = -1
        best_nl = 0
        best_order = None
        best_xs = None
        nl = np.arange(min_leaf, n - min_leaf + 1)
        nlf = nl.astype(np.float64)[:, None]
        nrf = (n - nl).astype(np.float64)[:, None]
        for f in feats[:mtry]:
            xs_raw = X[rows, f]
            order = np.lexsort((rows, xs_raw))
            xs = xs_raw[order]
            cs = np.cumsum(ys[order], axis=0)
            tot = cs[-1]
            sl = cs[nl - 1]
            sr = tot - sl
            terms = sl * sl / nlf + sr * sr / nrf
            proxy = terms[:, 0].copy()
            for k in range(1, n_outputs):
                proxy = proxy + terms[:, k]
            proxy[~(xs[nl - 1] < xs[nl])] = -np.inf
            p = int(np.argmax(proxy))
            if proxy[p] > best_proxy:
                best_proxy = proxy[p]
                best_f = f
                best_nl = int(nl[p])
                best_order = order
                best_xs = xs

        if best_f < 0:
            continue

        a = best_xs[best_nl - 1]
        b = best_xs[best_nl]
        thr = 0.5 * (a + b)
        if thr >= b:
            thr = a
        feature[node] = best_f
        threshold[node] = thr
        idx[start:end] = rows[best_order]
        stack.append((start + best_nl, end, depth + 1, node, False))
        stack.append((start, start + best_nl, depth + 1, node, True))

    return (feature[:count].copy(), threshold[:count].copy(), left[:count].copy(),
            right[:count].copy(), value[:count].copy(), n_node[:count].copy())
