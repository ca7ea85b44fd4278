"""Random forest regression built on from-scratch CART trees.

Each tree greedily minimizes the summed squared error of its children
(variance reduction) over candidate thresholds placed midway between
consecutive sorted feature values. Leaves predict their training mean;
the forest averages trees. Per-tree substreams make training
bit-deterministic for a given seed regardless of thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..rng import substream
from .base import NotFittedError, as_feature_matrix, as_targets


class _TreeArrays:
    """Flattened tree: node i splits on feature[i] at threshold[i], or is a
    leaf when feature[i] < 0, predicting value[i]."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for r, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                if row[self.feature[node]] <= self.threshold[node]:
                    node = self.left[node]
                else:
                    node = self.right[node]
            out[r] = self.value[node]
        return out


def best_split(
    X: np.ndarray, y: np.ndarray, feature_ids, min_samples_leaf: int
) -> tuple[int, float, float] | None:
    """Lowest-SSE split over the given features; None if no legal split.

    Returns (feature, threshold, sse); thresholds are midpoints between
    consecutive distinct sorted values. Ties resolve to the first
    (feature, threshold) in scan order.
    """
    n = len(y)
    best = None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum, total_sq = csum[-1], csq[-1]
        for i in range(min_samples_leaf - 1, n - min_samples_leaf):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sse_l = csq[i] - csum[i] ** 2 / nl
            sse_r = (total_sq - csq[i]) - (total_sum - csum[i]) ** 2 / nr
            sse = sse_l + sse_r
            if best is None or sse < best[2] - 1e-15:
                best = (f, (xs[i] + xs[i + 1]) / 2.0, sse)
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator | None,
    max_depth: int | None,
    min_samples_leaf: int,
    n_split_features: int,
) -> _TreeArrays:
    tree = _TreeArrays()
    n_features = X.shape[1]

    def recurse(idx: np.ndarray, depth: int) -> int:
        node = tree.add_node()
        ys = y[idx]
        tree.value[node] = float(ys.mean())
        if (
            len(idx) < 2 * min_samples_leaf
            or (max_depth is not None and depth >= max_depth)
            or np.all(ys == ys[0])
        ):
            return node
        if rng is not None and n_split_features < n_features:
            feats = np.sort(rng.choice(n_features, n_split_features, replace=False))
        else:
            feats = np.arange(n_features)
        split = best_split(X[idx], ys, feats, min_samples_leaf)
        if split is None:
            return node
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = recurse(idx[go_left], depth + 1)
        tree.right[node] = recurse(idx[~go_left], depth + 1)
        return node

    recurse(np.arange(len(y)), 0)
    return tree


class RandomForestBiomass(BaseEstimator, RegressorMixin):
    """Bagged CART regression forest.

    Parameters
    ----------
    n_trees : number of trees to average.
    max_depth : depth cap per tree; None = unlimited.
    min_samples_leaf : minimum samples on each side of a split.
    features_per_split : "sqrt" (ceil of sqrt(d)), an int, or None for all.
    bootstrap : draw each tree's training set with replacement.
    seed : substream root; fixed seed gives bit-identical forests for
        any n_threads.
    n_threads : trees built in parallel; results are ordered by tree
        index so the average is schedule-independent.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int | None = None,
        min_samples_leaf: int = 2,
        features_per_split="sqrt",
        bootstrap: bool = True,
        seed: int = 0,
        n_threads: int = 1,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.features_per_split = features_per_split
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_threads = n_threads

    def _n_split_features(self, d: int) -> int:
        if self.features_per_split is None:
            return d
        if self.features_per_split == "sqrt":
            return min(d, math.ceil(math.sqrt(d)))
        return min(d, int(self.features_per_split))

    def fit(self, X, y):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        X = as_feature_matrix(X)
        y = as_targets(y, len(X))
        d = X.shape[1]
        n_split = self._n_split_features(d)

        def build(t: int) -> _TreeArrays:
            rng = substream(self.seed, "tree", t)
            if self.bootstrap:
                idx = rng.integers(0, len(y), size=len(y))
                Xt, yt = X[idx], y[idx]
            else:
                Xt, yt = X, y
            node_rng = rng if n_split < d else None
            return _grow_tree(
                Xt, yt, node_rng, self.max_depth, self.min_samples_leaf, n_split
            )

        if self.n_threads > 1:
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                self.trees_ = list(pool.map(build, range(self.n_trees)))
        else:
            self.trees_ = [build(t) for t in range(self.n_trees)]
        self.n_features_ = d
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise NotFittedError("fit must be called before predict")
        X = as_feature_matrix(X, self.n_features_)
        acc = np.zeros(len(X))
        for tree in self.trees_:  # fixed order: average is reproducible
            acc += tree.predict(X)
        return acc / self.n_trees
