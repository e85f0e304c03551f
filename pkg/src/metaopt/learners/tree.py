"""Variance-reduction regression trees and random forests.

Tree growth and traversal are compiled with numba; a fitted tree is a set of
flat node arrays (``feature``, ``threshold``, ``left``, ``right``, ``value``),
where ``feature == -1`` marks a leaf.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .base import Dataset, FitError, RegressionModel


@njit(cache=True)
def _best_split(X, y, idx, lo, hi, min_leaf, features, mtry):
    """Search the candidate features for the split with the lowest child SSE.

    Features are scanned in the given order until ``mtry`` of them turned out
    to be non-constant on the node. Returns (feature, threshold, sse) with
    feature == -1 when no admissible split exists.
    """
    n = hi - lo
    best_feat = -1
    best_thr = 0.0
    best_sse = np.inf
    vals = np.empty(n)
    ys = np.empty(n)
    tried = 0
    for fi in range(features.shape[0]):
        if tried >= mtry:
            break
        f = features[fi]
        for j in range(n):
            vals[j] = X[idx[lo + j], f]
        if vals.max() <= vals.min():
            continue
        tried += 1
        order = np.argsort(vals, kind="mergesort")
        total = 0.0
        total_sq = 0.0
        for j in range(n):
            ys[j] = y[idx[lo + order[j]]]
            total += ys[j]
            total_sq += ys[j] * ys[j]
        s = 0.0
        s_sq = 0.0
        for j in range(n - 1):
            s += ys[j]
            s_sq += ys[j] * ys[j]
            nl = j + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            a = vals[order[j]]
            b = vals[order[j + 1]]
            if b <= a:
                continue
            sse_l = s_sq - s * s / nl
            sse_r = (total_sq - s_sq) - (total - s) * (total - s) / nr
            sse = sse_l + sse_r
            if sse < best_sse:
                best_sse = sse
                best_feat = f
                best_thr = 0.5 * (a + b)
                if best_thr >= b:  # midpoint rounding between adjacent floats
                    best_thr = a
    return best_feat, best_thr, best_sse


@njit(cache=True)
def _grow(X, y, idx, min_leaf, mtry, seed):
    np.random.seed(seed)
    n = idx.shape[0]
    k = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    work = idx.copy()
    tmp = np.empty(n, dtype=np.int64)
    # stack of (node, lo, hi)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    top = 0
    n_nodes = 1
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    top = 1
    features = np.arange(k)
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        m = hi - lo
        s = 0.0
        s_sq = 0.0
        for j in range(lo, hi):
            v = y[work[j]]
            s += v
            s_sq += v * v
        mean = s / m
        value[node] = mean
        count[node] = m
        sse = s_sq - s * s / m
        if m < 2 * min_leaf or sse <= 1e-12 * max(1.0, abs(s_sq)):
            continue
        if mtry < k:
            np.random.shuffle(features)
        f, thr, child_sse = _best_split(X, y, work, lo, hi, min_leaf, features, mtry)
        if f < 0 or child_sse >= sse - 1e-14 * max(1.0, abs(s_sq)):
            continue
        # stable partition: samples with x_f <= thr first
        mid = lo
        nr = 0
        for j in range(lo, hi):
            if X[work[j], f] <= thr:
                work[mid] = work[j]
                mid += 1
            else:
                tmp[nr] = work[j]
                nr += 1
        for j in range(nr):
            work[mid + j] = tmp[j]
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top] = n_nodes
        st_lo[top] = lo
        st_hi[top] = mid
        top += 1
        st_node[top] = n_nodes + 1
        st_lo[top] = mid
        st_hi[top] = hi
        top += 1
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes], count[:n_nodes])


@njit(cache=True)
def _leaf_of(feature, threshold, left, right, x):
    node = 0
    while feature[node] != -1:
        if x[feature[node]] <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = value[_leaf_of(feature, threshold, left, right, X[i])]
    return out


@njit(cache=True)
def _predict_forest(feature, threshold, left, right, value, X):
    n_trees = feature.shape[0]
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            node = 0
            while feature[t, node] != -1:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc / n_trees
    return out


@njit(cache=True)
def _reduced_error_prune(feature, threshold, left, right, value, Xp, yp):
    """Bottom-up reduced-error pruning against a held-out set (in place).

    A subtree is collapsed into a leaf whenever that does not increase the
    squared error on the pruning samples that reach it.
    """
    n_nodes = feature.shape[0]
    leaf_err = np.zeros(n_nodes)
    # route pruning samples, accumulating node-as-leaf error along the path
    for i in range(Xp.shape[0]):
        node = 0
        while True:
            d = yp[i] - value[node]
            leaf_err[node] += d * d
            if feature[node] == -1:
                break
            if Xp[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
    # children always have larger ids than parents, so reverse order is bottom-up
    sub_err = leaf_err.copy()
    for node in range(n_nodes - 1, -1, -1):
        if feature[node] == -1:
            continue
        sub = sub_err[left[node]] + sub_err[right[node]]
        if leaf_err[node] <= sub:
            feature[node] = -1
            sub_err[node] = leaf_err[node]
        else:
            sub_err[node] = sub


class TreeModel(RegressionModel):
    family = "TREE"

    def __init__(self, k, arrays):
        super().__init__(k)
        self.feature, self.threshold, self.left, self.right, self.value = arrays

    @property
    def n_leaves(self) -> int:
        return int(self._reachable_leaves())

    def _reachable_leaves(self):
        stack, leaves = [0], 0
        while stack:
            node = stack.pop()
            if self.feature[node] == -1:
                leaves += 1
            else:
                stack.extend((self.left[node], self.right[node]))
        return leaves

    def _predict(self, X):
        return _predict_tree(self.feature, self.threshold, self.left, self.right,
                             self.value, np.ascontiguousarray(X))


class ForestModel(RegressionModel):
    family = "RF"

    def __init__(self, k, trees):
        super().__init__(k)
        width = max(t[0].shape[0] for t in trees)
        n = len(trees)
        self.feature = np.full((n, width), -1, dtype=np.int64)
        self.threshold = np.zeros((n, width))
        self.left = np.full((n, width), -1, dtype=np.int64)
        self.right = np.full((n, width), -1, dtype=np.int64)
        self.value = np.zeros((n, width))
        for t, (f, thr, l, r, v) in enumerate(trees):
            m = f.shape[0]
            self.feature[t, :m] = f
            self.threshold[t, :m] = thr
            self.left[t, :m] = l
            self.right[t, :m] = r
            self.value[t, :m] = v

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    def _predict(self, X):
        return _predict_forest(self.feature, self.threshold, self.left, self.right,
                               self.value, np.ascontiguousarray(X))


TREE_DEFAULTS = {"min_leaf": 2, "prune_fraction": 0.25, "prune": True}
RF_DEFAULTS = {"n_trees": 100, "min_leaf": 1, "max_features": None}


def fit_tree(data: Dataset, params: dict, seed: int) -> TreeModel:
    p = {**TREE_DEFAULTS, **params}
    X, y = data.inputs, data.targets
    n, k = X.shape
    rng = np.random.default_rng(seed)
    min_leaf = int(p["min_leaf"])
    if min_leaf < 1:
        raise FitError("min_leaf must be >= 1")
    n_prune = int(round(p["prune_fraction"] * n)) if p["prune"] else 0
    if n - n_prune < 2 * min_leaf:
        n_prune = 0
    perm = rng.permutation(n)
    prune_idx, grow_idx = np.sort(perm[:n_prune]), np.sort(perm[n_prune:])
    arrays = _grow(X, y, grow_idx.astype(np.int64), min_leaf, k, int(rng.integers(2**31 - 1)))
    feature, threshold, left, right, value, _ = arrays
    feature = feature.copy()
    if n_prune:
        _reduced_error_prune(feature, threshold, left, right, value, X[prune_idx], y[prune_idx])
    return TreeModel(k, (feature, threshold, left, right, value))


def grow_unpruned(data: Dataset, min_leaf: int = 2, seed: int = 0) -> TreeModel:
    X = data.inputs
    arrays = _grow(X, data.targets, np.arange(X.shape[0], dtype=np.int64), min_leaf, X.shape[1], seed)
    return TreeModel(X.shape[1], arrays[:5])


def prune(tree: TreeModel, X, y) -> TreeModel:
    feature = tree.feature.copy()
    _reduced_error_prune(feature, tree.threshold, tree.left, tree.right, tree.value,
                         np.ascontiguousarray(X, dtype=float), np.asarray(y, dtype=float))
    return TreeModel(tree.k, (feature, tree.threshold, tree.left, tree.right, tree.value))


def fit_forest(data: Dataset, params: dict, seed: int) -> ForestModel:
    p = {**RF_DEFAULTS, **params}
    X, y = data.inputs, data.targets
    n, k = X.shape
    n_trees = int(p["n_trees"])
    if n_trees < 1:
        raise FitError("n_trees must be >= 1")
    mtry = p["max_features"]
    if mtry is None:
        mtry = int(math.floor(math.log2(k))) + 1
    mtry = max(1, min(k, int(mtry)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        arrays = _grow(X, y, boot, int(p["min_leaf"]), mtry, int(rng.integers(2**31 - 1)))
        trees.append(arrays[:5])
    return ForestModel(k, trees)
