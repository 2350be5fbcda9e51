"""Hot loops of the extra-trees learner.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy version
with the same signature. The module-level names (``node_ranges``,
``best_split``, ``predict_trees``) are bound to one of them according to
:mod:`soilfusion._accel`. Both variants are importable directly so that tests
and the benchmark can compare them.

Tree arrays follow one layout: ``feature[i] < 0`` marks a leaf, children are
stored as absolute node indices into the concatenated forest arrays, and
``roots[t]`` is the index of tree ``t``'s root.
"""
import numpy as np

from .._accel import HAVE_NUMBA, USE_NUMBA


# --------------------------------------------------------------------------- numpy


def node_ranges_numpy(X, idx):
    sub = X[idx]
    return sub.min(axis=0), sub.max(axis=0)


def best_split_numpy(X, y, idx, feats, thresholds):
    """Return ``(j, score)`` of the best candidate; ``j == -1`` if none is valid.

    ``score`` is the variance reduction Var(S) - nL/n Var(L) - nR/n Var(R),
    evaluated as sL**2 / (nL * nR) with sL the sum of node-centred targets
    falling left.
    """
    # sums run sequentially over samples, in the same order as the numba
    # kernel, so both backends see bit-identical scores and break ties alike
    ys = y[idx]
    yc = ys - np.cumsum(ys)[-1] / idx.shape[0]
    left = X[np.ix_(idx, feats)] <= thresholds
    n_left = left.sum(axis=0)
    n_right = idx.shape[0] - n_left
    s_left = np.where(left, yc[:, None], 0.0).sum(axis=0)
    valid = (n_left > 0) & (n_right > 0)
    scores = np.full(feats.shape[0], -1.0)
    scores[valid] = s_left[valid] ** 2 / (n_left[valid] * n_right[valid])
    j = int(np.argmax(scores))
    if scores[j] < 0.0:
        return -1, 0.0
    return j, float(scores[j])


def predict_trees_numpy(X, roots, feature, threshold, left, right, value):
    n = X.shape[0]
    rows = np.arange(n)
    first = None
    acc = np.zeros(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            a = node[active]
            go_left = X[rows[active], feature[a]] <= threshold[a]
            node[active] = np.where(go_left, left[a], right[a])
            active = feature[node] >= 0
        leaf = value[node]
        if first is None:
            first = leaf
        else:
            acc += leaf - first
    if first is None:
        return acc
    # deviations from the first tree keep the mean exact when all trees agree
    return first + acc / len(roots)


# --------------------------------------------------------------------------- numba

if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True, nogil=True)
    def node_ranges_numba(X, idx):
        d = X.shape[1]
        mins = np.empty(d)
        maxs = np.empty(d)
        for f in range(d):
            v = X[idx[0], f]
            mins[f] = v
            maxs[f] = v
        for k in range(1, idx.shape[0]):
            i = idx[k]
            for f in range(d):
                v = X[i, f]
                if v < mins[f]:
                    mins[f] = v
                elif v > maxs[f]:
                    maxs[f] = v
        return mins, maxs

    @njit(cache=True, nogil=True)
    def best_split_numba(X, y, idx, feats, thresholds):
        n = idx.shape[0]
        mean = 0.0
        for k in range(n):
            mean += y[idx[k]]
        mean /= n
        best_j = -1
        best = -1.0
        for j in range(feats.shape[0]):
            f = feats[j]
            t = thresholds[j]
            s_left = 0.0
            n_left = 0
            for k in range(n):
                i = idx[k]
                if X[i, f] <= t:
                    s_left += y[i] - mean
                    n_left += 1
            n_right = n - n_left
            if n_left == 0 or n_right == 0:
                continue
            score = s_left * s_left / (n_left * n_right)
            if score > best:
                best = score
                best_j = j
        if best_j < 0:
            return -1, 0.0
        return best_j, best

    @njit(cache=True, nogil=True)
    def predict_trees_numba(X, roots, feature, threshold, left, right, value):
        n = X.shape[0]
        m = roots.shape[0]
        out = np.zeros(n)
        for i in range(n):
            first = 0.0
            acc = 0.0
            for t in range(m):
                node = roots[t]
                while feature[node] >= 0:
                    if X[i, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                if t == 0:
                    first = value[node]
                else:
                    acc += value[node] - first
            if m > 0:
                out[i] = first + acc / m
        return out


if USE_NUMBA:
    node_ranges = node_ranges_numba
    best_split = best_split_numba
    predict_trees = predict_trees_numba
else:
    node_ranges = node_ranges_numpy
    best_split = best_split_numpy
    predict_trees = predict_trees_numpy
