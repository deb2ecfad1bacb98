"""Random forest classifier (Gini splits, bootstrap, random feature subsets).

Only the impurity-decrease importances are used downstream, for picking
n-gram features; predictions exist for out-of-bag checks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 5
    max_features: str = "sqrt"  # "sqrt", "all", or a fraction like "0.3"
    bootstrap: bool = True

    def to_json(self) -> dict:
        return asdict(self)

    def features_per_split(self, d: int) -> int:
        if self.max_features == "sqrt":
            m = int(math.sqrt(d))
        elif self.max_features == "all":
            m = d
        else:
            m = int(float(self.max_features) * d)
        return max(1, min(d, m))


@dataclass
class Tree:
    # parallel node arrays; leaves have feature == -1
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[np.ndarray] = field(default_factory=list)
    importance: Optional[np.ndarray] = None

    def add_node(self, dist: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(dist)
        return len(self.feature) - 1

    @property
    def n_splits(self) -> int:
        return sum(1 for f in self.feature if f >= 0)

    def leaf_distribution(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], len(self.value[0])))
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = self.value[node]
        return out


@dataclass
class RandomForest:
    trees: List[Tree]
    params: ForestParams
    seed: int
    n_features: int
    n_classes: int
    oob_score: Optional[float] = None


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _best_split_sorted(Xn: np.ndarray, yn: np.ndarray, n_classes: int, min_leaf: int):
    """Best Gini split over arbitrary numeric columns. Returns (column, threshold, child impurity)."""
    n, f = Xn.shape
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    onehot = (ys[:, :, None] == np.arange(n_classes)).astype(np.float64)
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total[None, :, :] - left
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    gini_l = 1.0 - np.sum(left * left, axis=2) / (nl * nl)
    gini_r = 1.0 - np.sum(right * right, axis=2) / (nr * nr)
    weighted = (nl * gini_l + nr * gini_r) / n
    valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    weighted = np.where(valid, weighted, np.inf)
    flat = int(np.argmin(weighted))
    pos, col = divmod(flat, f)
    threshold = 0.5 * (xs[pos, col] + xs[pos + 1, col])
    return col, float(threshold), float(weighted[pos, col])


def _best_split_binary(Xn: np.ndarray, yn: np.ndarray, n_classes: int, min_leaf: int):
    """Same as the sorted search, specialised to 0/1 columns (one candidate threshold each)."""
    n = Xn.shape[0]
    onehot = (yn[:, None] == np.arange(n_classes)).astype(np.float64)
    right = onehot.T @ Xn  # class counts where x == 1, shape (C, f)
    left = onehot.sum(axis=0)[:, None] - right
    nr = right.sum(axis=0)
    nl = n - nr
    valid = (nl >= max(min_leaf, 1)) & (nr >= max(min_leaf, 1))
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gini_l = 1.0 - np.sum(left * left, axis=0) / (nl * nl)
        gini_r = 1.0 - np.sum(right * right, axis=0) / (nr * nr)
        weighted = (nl * gini_l + nr * gini_r) / n
    weighted = np.where(valid, weighted, np.inf)
    col = int(np.argmin(weighted))
    return col, 0.5, float(weighted[col])


def _grow(X, y, idx, tree: Tree, depth: int, params: ForestParams, n_classes: int,
          m_features: int, rng: np.random.Generator, n_total: int, binary: bool) -> int:
    counts = np.bincount(y[idx], minlength=n_classes).astype(float)
    node = tree.add_node(counts / counts.sum())
    impurity = _gini(counts)
    if depth >= params.max_depth or impurity == 0.0 or len(idx) < 2 * params.min_samples_leaf:
        return node

    # draw features until m non-constant ones are found, as in CART forests
    perm = rng.permutation(X.shape[1])
    chosen: List[int] = []
    blocks: List[np.ndarray] = []
    for start in range(0, len(perm), m_features):
        block = perm[start:start + m_features]
        cols = X[np.ix_(idx, block)]
        keep = np.flatnonzero(cols.min(axis=0) < cols.max(axis=0))[: m_features - len(chosen)]
        chosen.extend(block[keep].tolist())
        blocks.append(cols[:, keep])
        if len(chosen) >= m_features:
            break
    if not chosen:
        return node

    Xn = np.hstack(blocks).astype(np.float64)
    search = _best_split_binary if binary else _best_split_sorted
    found = search(Xn, y[idx], n_classes, params.min_samples_leaf)
    if found is None:
        return node
    col, threshold, child_impurity = found
    decrease = impurity - child_impurity
    if decrease <= 1e-12:
        return node
    feat = chosen[col]
    tree.importance[feat] += len(idx) / n_total * decrease
    go_left = Xn[:, col] <= threshold
    tree.feature[node] = feat
    tree.threshold[node] = threshold
    tree.left[node] = _grow(X, y, idx[go_left], tree, depth + 1, params, n_classes, m_features, rng,
                            n_total, binary)
    tree.right[node] = _grow(X, y, idx[~go_left], tree, depth + 1, params, n_classes, m_features, rng,
                             n_total, binary)
    return node


def fit_random_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0) -> RandomForest:
    X = np.atleast_2d(np.asarray(X))
    y = np.asarray(y).astype(int).ravel()
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two training rows")
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    if y.min() < 0:
        raise ValueError("class labels must be non-negative integers")
    n_classes = int(y.max()) + 1
    m_features = params.features_per_split(d)
    rng = np.random.default_rng(seed)
    binary = bool(np.all((X == 0) | (X == 1)))

    trees = []
    oob_votes = np.zeros((n, n_classes))
    for _ in range(params.n_trees):
        tree_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        if params.bootstrap:
            sample = tree_rng.integers(0, n, n)
        else:
            sample = np.arange(n)
        tree = Tree(importance=np.zeros(d))
        _grow(X, y, np.sort(sample), tree, 0, params, n_classes, m_features, tree_rng, len(sample), binary)
        trees.append(tree)
        if params.bootstrap:
            oob = np.setdiff1d(np.arange(n), sample)
            if len(oob):
                oob_votes[oob] += tree.leaf_distribution(X[oob])

    oob_score = None
    voted = oob_votes.sum(axis=1) > 0
    if params.bootstrap and voted.any():
        oob_score = float(np.mean(np.argmax(oob_votes[voted], axis=1) == y[voted]))
    return RandomForest(trees, params, seed, d, n_classes, oob_score)


def predict_forest(forest: RandomForest, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X))
    if X.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got {X.shape[1]}")
    votes = sum(t.leaf_distribution(X) for t in forest.trees)
    return np.argmax(votes, axis=1)


def feature_importances(forest: RandomForest) -> np.ndarray:
    """Mean normalized impurity decrease per feature; all zeros when no tree split."""
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        s = tree.importance.sum()
        if s > 0:
            total += tree.importance / s
    s = total.sum()
    return total / s if s > 0 else total
