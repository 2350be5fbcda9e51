"""Extremely randomized trees for regression.

Every tree sees the full training sample (no bootstrap). At each node up to
``k_features`` candidate features are drawn without replacement among the
features that are non-constant in the node, one cut-point per candidate is
drawn uniformly in the open interval (min, max) of that feature, and the
candidate with the largest variance reduction wins. Splitting stops when the
node holds at most ``min_samples_split`` samples, its targets are constant,
or all its features are constant.

Tree ``t`` draws from ``np.random.default_rng(SeedSequence(seed, spawn_key=(t,)))``,
so the forest does not depend on the order in which trees are built.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, InsufficientDataError, SoilFusionError
from . import _kernels


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    k_features: int | None = None  # None -> number of features
    min_samples_split: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise SoilFusionError(f"n_trees must be positive, got {self.n_trees}")
        if self.k_features is not None and self.k_features < 1:
            raise SoilFusionError(f"k_features must be >= 1, got {self.k_features}")
        if self.min_samples_split < 2:
            raise SoilFusionError(
                f"min_samples_split must be >= 2, got {self.min_samples_split}"
            )
        if self.seed < 0:
            raise SoilFusionError(f"seed must be unsigned, got {self.seed}")

    def resolved_k(self, n_features: int) -> int:
        k = n_features if self.k_features is None else self.k_features
        if k > n_features:
            raise SoilFusionError(f"k_features={k} exceeds the {n_features} features")
        return k


@dataclass(frozen=True)
class Tree:
    """One fitted tree as flat preorder arrays (node 0 is the root).

    ``feature[i] == -1`` marks a leaf. ``left``/``right`` are -1 on leaves.
    ``impurity_decrease`` is 0 on leaves.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def equals(self, other: "Tree") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in _TREE_FIELDS
        )


_TREE_FIELDS = (
    "feature",
    "threshold",
    "left",
    "right",
    "value",
    "n_samples",
    "impurity_decrease",
)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    params: ForestParams
    n_features: int
    feature_importances: np.ndarray
    _flat: tuple = field(default=(), repr=False, compare=False)

    def flat_arrays(self):
        """Concatenated node arrays with absolute child indices, for the kernels."""
        if self._flat:
            return self._flat
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]]).astype(np.int64)

        def shift(a, off):
            return np.where(a >= 0, a + off, -1)

        flat = (
            offsets,
            np.concatenate([t.feature for t in self.trees]).astype(np.int64),
            np.concatenate([t.threshold for t in self.trees]).astype(np.float64),
            np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]).astype(np.int64),
            np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]).astype(np.int64),
            np.concatenate([t.value for t in self.trees]).astype(np.float64),
        )
        object.__setattr__(self, "_flat", flat)
        return flat

    def equals(self, other: "ForestModel") -> bool:
        return (
            self.params == other.params
            and self.n_features == other.n_features
            and len(self.trees) == len(other.trees)
            and all(a.equals(b) for a, b in zip(self.trees, other.trees))
            and np.array_equal(self.feature_importances, other.feature_importances)
        )


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise InsufficientDataError(f"need a non-empty 2-D feature matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"target shape {y.shape} does not match {X.shape[0]} rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise SoilFusionError("non-finite entry in training data")
    return X, y


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index,)))


def _draw_cut_points(rng, lo, hi):
    thr = rng.uniform(lo, hi)
    bad = (thr <= lo) | (thr >= hi)
    while bad.any():
        # rounding can land on an endpoint when the range is a few ulps wide
        thr[bad] = rng.uniform(lo[bad], hi[bad])
        bad = (thr <= lo) | (thr >= hi)
    return thr


def build_tree(X, y, k: int, min_samples_split: int, rng: np.random.Generator) -> Tree:
    """Grow one tree on (X, y); arrays must already be validated float64."""
    feature, threshold, left, right = [], [], [], []
    value, n_samples, decrease = [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[idx])))
        n_samples.append(int(idx.shape[0]))
        decrease.append(0.0)
        return len(feature) - 1

    # stack of (sample indices, parent node, is_left); left child popped first -> preorder
    stack = [(np.arange(X.shape[0], dtype=np.int64), -1, False)]
    while stack:
        idx, parent, is_left = stack.pop()
        node = new_node(idx)
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        n = idx.shape[0]
        if n <= min_samples_split:
            continue
        ys = y[idx]
        if ys.min() == ys.max():
            continue
        mins, maxs = _kernels.node_ranges(X, idx)
        candidates = np.flatnonzero(maxs > mins)
        if candidates.shape[0] == 0:
            continue
        if candidates.shape[0] > k:
            candidates = np.sort(rng.choice(candidates, size=k, replace=False))
        feats = candidates.astype(np.int64)
        thr = _draw_cut_points(rng, mins[feats], maxs[feats])
        j, score = _kernels.best_split(X, y, idx, feats, thr)
        if j < 0:
            continue
        f = int(feats[j])
        t = float(thr[j])
        go_left = X[idx, f] <= t
        feature[node] = f
        threshold[node] = t
        decrease[node] = max(score, 0.0)
        stack.append((idx[~go_left], node, False))
        stack.append((idx[go_left], node, True))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        impurity_decrease=np.asarray(decrease, dtype=np.float64),
    )


def _importances(trees, n_features: int, n_total: int) -> np.ndarray:
    imp = np.zeros(n_features)
    for tree in trees:
        internal = tree.feature >= 0
        np.add.at(
            imp,
            tree.feature[internal],
            tree.n_samples[internal] / n_total * tree.impurity_decrease[internal],
        )
    total = imp.sum()
    if total > 0:
        imp = imp / total
    return imp


def fit_extra_trees(X, y, params: ForestParams | None = None, n_jobs: int = 1) -> ForestModel:
    """Fit an extra-trees regressor.

    ``n_jobs > 1`` builds trees on a thread pool; the result is identical to
    the sequential build because every tree owns its random stream.
    """
    params = params or ForestParams()
    X, y = _check_xy(X, y)
    k = params.resolved_k(X.shape[1])

    def grow(t):
        return build_tree(X, y, k, params.min_samples_split, tree_rng(params.seed, t))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = tuple(pool.map(grow, range(params.n_trees)))
    else:
        trees = tuple(grow(t) for t in range(params.n_trees))

    return ForestModel(
        trees=trees,
        params=params,
        n_features=X.shape[1],
        feature_importances=_importances(trees, X.shape[1], X.shape[0]),
    )


def predict_forest(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionError(
            f"model expects {model.n_features} features, got shape {X.shape}"
        )
    roots, feature, threshold, left, right, value = model.flat_arrays()
    return _kernels.predict_trees(X, roots, feature, threshold, left, right, value)


def feature_importance(model: ForestModel) -> np.ndarray:
    return model.feature_importances.copy()
