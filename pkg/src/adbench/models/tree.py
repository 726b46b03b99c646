"""CART regression trees and random forests.

Trees are stored as flat node arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); a leaf has ``feature == -1``. Splits minimize the
summed squared error, candidate thresholds are midpoints between distinct
sorted values, and ties go to the lowest feature index and then the lowest
threshold.
"""

import math

import numpy as np
from numba import njit

from .base import Regressor


@njit(cache=True)
def _build(X, y, idx, min_leaf, max_depth, max_features, seed):
    np.random.seed(seed)
    idx = idx.copy()
    n = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n, 0
    top = 1
    n_nodes = 1
    pool = np.arange(d)
    xs = np.empty(n)
    ys = np.empty(n)

    while top > 0:
        top -= 1
        node, start, end, depth = st_node[top], st_start[top], st_end[top], st_depth[top]
        m = end - start
        total = 0.0
        y_min, y_max = np.inf, -np.inf
        for k in range(start, end):
            v = y[idx[k]]
            total += v
            if v < y_min:
                y_min = v
            if v > y_max:
                y_max = v
        value[node] = total / m
        if m < 2 * min_leaf or y_max == y_min or (max_depth >= 0 and depth >= max_depth):
            continue

        if max_features < d:
            for k in range(max_features):
                r = k + np.random.randint(d - k)
                pool[k], pool[r] = pool[r], pool[k]
            cand = np.sort(pool[:max_features].copy())
        else:
            cand = np.arange(d)

        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for f in cand:
            for k in range(m):
                xs[k] = X[idx[start + k], f]
                ys[k] = y[idx[start + k]]
            order = np.argsort(xs[:m], kind="mergesort")
            cum = 0.0
            for k in range(m - 1):
                cum += ys[order[k]]
                nl = k + 1
                nr = m - nl
                if nr < min_leaf:
                    break
                if nl < min_leaf:
                    continue
                xa = xs[order[k]]
                xb = xs[order[k + 1]]
                if xb <= xa:
                    continue
                rest = total - cum
                score = cum * cum / nl + rest * rest / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (xa + xb)
                    if thr >= xb:
                        thr = xa
                    best_thr = thr
        if best_f < 0:
            continue

        # partition idx[start:end] so that x <= thr comes first
        i, j = start, end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                idx[i], idx[j] = idx[j], idx[i]
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        lc, rc = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = lc, rc
        st_node[top], st_start[top], st_end[top], st_depth[top] = rc, i, end, depth + 1
        top += 1
        st_node[top], st_start[top], st_end[top], st_depth[top] = lc, start, i, depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _apply(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


_NODE_FIELDS = ("feature", "threshold", "left", "right", "value")


class DecisionTree(Regressor):
    """CART regressor; fully grown by default (``min_leaf=1``, no depth cap)."""

    kind = "decision_tree"

    def __init__(self, min_leaf=1, max_depth=None, max_features=None, seed=0):
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        super().__init__(min_leaf=min_leaf, max_depth=max_depth, max_features=max_features, seed=seed)

    def _n_candidates(self, d):
        mf = self.hyperparameters["max_features"]
        if mf is None:
            return d
        if isinstance(mf, float) and mf <= 1.0:
            return max(1, math.ceil(mf * d))
        return max(1, min(d, int(mf)))

    def fit_indices(self, X, y, idx):
        """Grow the tree on rows ``idx`` (duplicates allowed, as in a bootstrap)."""
        hp = self.hyperparameters
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        max_depth = -1 if hp["max_depth"] is None else int(hp["max_depth"])
        nodes = _build(
            X, y, np.asarray(idx, dtype=np.int64), int(hp["min_leaf"]), max_depth,
            self._n_candidates(X.shape[1]), int(hp["seed"]) % (2**32),
        )
        self.nodes_ = dict(zip(_NODE_FIELDS, nodes))
        self.n_features_ = X.shape[1]
        return self

    def _fit(self, X, y):
        self.fit_indices(X, y, np.arange(X.shape[0]))

    def _predict(self, X):
        nd = self.nodes_
        return _apply(np.ascontiguousarray(X), nd["feature"], nd["threshold"], nd["left"], nd["right"], nd["value"])

    @property
    def n_nodes(self):
        return self.nodes_["feature"].shape[0]

    def get_state(self):
        return {**self.nodes_, "n_features": np.int64(self.n_features_)}

    def set_state(self, state):
        self.nodes_ = {k: np.asarray(state[k]) for k in _NODE_FIELDS}
        self.n_features_ = int(state["n_features"])


class RandomForest(Regressor):
    """Bagged CART trees with per-split feature subsampling.

    Tree ``i`` is grown on a bootstrap resample drawn with seed ``seed + i``.
    ``max_features`` defaults to a third of the features, the classic
    choice for regression forests.
    """

    kind = "random_forest"

    def __init__(self, n_estimators=50, min_leaf=1, max_depth=None, max_features=1 / 3, seed=0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        super().__init__(
            n_estimators=n_estimators, min_leaf=min_leaf, max_depth=max_depth,
            max_features=max_features, seed=seed,
        )

    def _fit(self, X, y):
        hp = self.hyperparameters
        n = X.shape[0]
        self.trees_ = []
        for i in range(int(hp["n_estimators"])):
            rng = np.random.default_rng(hp["seed"] + i)
            idx = rng.integers(0, n, size=n)
            tree = DecisionTree(
                min_leaf=hp["min_leaf"], max_depth=hp["max_depth"],
                max_features=hp["max_features"], seed=hp["seed"] + i,
            )
            self.trees_.append(tree.fit_indices(X, y, idx))

    def predict_members(self, X) -> np.ndarray:
        """Per-tree predictions, shape ``(n_estimators, n_rows)``."""
        X = self._check_X(X)
        return np.vstack([t._predict(X) for t in self.trees_])

    def _predict(self, X):
        return np.vstack([t._predict(X) for t in self.trees_]).mean(axis=0)

    def get_state(self):
        state = {"n_features": np.int64(self.n_features_)}
        for i, t in enumerate(self.trees_):
            for k, v in t.get_state().items():
                state[f"tree{i}/{k}"] = v
        return state

    def set_state(self, state):
        self.n_features_ = int(state["n_features"])
        self.trees_ = []
        for i in range(int(self.hyperparameters["n_estimators"])):
            t = DecisionTree()
            t.set_state({k.split("/", 1)[1]: v for k, v in state.items() if k.startswith(f"tree{i}/")})
            self.trees_.append(t)
