"""Small deterministic classifier training, used to exercise the pipeline
end-to-end without external model files.

Logistic models are trained by full-batch gradient descent; forests are CART
trees (Gini splits) on bootstrap samples with majority-vote leaves, uniform
weights 1/T and threshold 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scorers import LinearModel, Tree, TreeEnsemble, TreeNode, assign_leaf_ids


@dataclass(frozen=True)
class TrainConfig:
    kind: str  # logistic | forest
    seed: int
    learning_rate: float = 0.5
    iterations: int = 500
    n_trees: int = 10
    max_depth: int = 3
    subsample_features: float = 1.0
    label_column: str = "label"

    def __post_init__(self):
        if self.kind not in ("logistic", "forest"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n_trees < 1 or self.max_depth < 1 or self.iterations < 1:
            raise ValueError("counts must be positive")
        if not 0 < self.subsample_features <= 1:
            raise ValueError("feature subsample fraction must lie in (0, 1]")


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if not set(np.unique(labels)) <= {-1, 1}:
        raise ValueError("labels must be +1 / -1")
    if len(np.unique(labels)) < 2:
        raise ValueError("training needs both classes present")
    return labels


def train_logistic(x, labels, config: TrainConfig) -> LinearModel:
    """Full-batch gradient descent on the logistic loss; threshold 0."""
    x = np.asarray(x, dtype=float)
    labels = _check_labels(labels)
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    lr = config.learning_rate
    for _ in range(config.iterations):
        margin = labels * (x @ w + b)
        # d/dm log(1 + exp(-m)) = -sigmoid(-m)
        g = -_sigmoid(-margin) * labels
        w -= lr * (x.T @ g) / n
        b -= lr * float(g.sum()) / n
    return LinearModel(weights=w, intercept=b, nu=0.0)


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _gini_split(col, labels):
    """Best threshold for one column; returns (impurity, threshold) or None."""
    order = np.argsort(col, kind="stable")
    xs = col[order]
    ys = labels[order]
    n = len(ys)
    pos_left = np.cumsum(ys == 1)
    total_pos = pos_left[-1]
    best = None
    for k in range(n - 1):
        if xs[k] == xs[k + 1]:
            continue
        nl = k + 1
        nr = n - nl
        pl = pos_left[k] / nl
        pr = (total_pos - pos_left[k]) / nr
        gini = nl / n * 2 * pl * (1 - pl) + nr / n * 2 * pr * (1 - pr)
        thresh = 0.5 * (xs[k] + xs[k + 1])
        if best is None or gini < best[0] - 1e-12:
            best = (gini, thresh)
    return best


def _grow_tree(x, labels, depth, max_depth, n_feat_split, rng):
    n = len(labels)
    pos = int(np.sum(labels == 1))
    majority = 1 if pos * 2 > n else -1  # ties go negative
    if depth >= max_depth or pos == 0 or pos == n:
        return TreeNode(leaf_id=0, output=majority)
    d = x.shape[1]
    feats = sorted(rng.choice(d, size=n_feat_split, replace=False).tolist()) \
        if n_feat_split < d else list(range(d))
    best = None
    for j in feats:
        found = _gini_split(x[:, j], labels)
        if found is not None and (best is None or found[0] < best[0] - 1e-12):
            best = (found[0], j, found[1])
    if best is None:
        return TreeNode(leaf_id=0, output=majority)
    _, j, thresh = best
    mask = x[:, j] <= thresh
    left = _grow_tree(x[mask], labels[mask], depth + 1, max_depth, n_feat_split, rng)
    right = _grow_tree(x[~mask], labels[~mask], depth + 1, max_depth, n_feat_split, rng)
    return TreeNode(split_feature=j, threshold=thresh, left=left, right=right)


def train_forest(x, labels, config: TrainConfig, epsilon: float = 1e-5) -> TreeEnsemble:
    """Bootstrap CART forest with uniform weights and majority-vote threshold."""
    x = np.asarray(x, dtype=float)
    labels = _check_labels(labels)
    rng = np.random.default_rng(config.seed)
    n, d = x.shape
    n_feat_split = max(1, int(round(config.subsample_features * d)))
    trees = []
    for _ in range(config.n_trees):
        idx = rng.integers(0, n, size=n)
        root = _grow_tree(x[idx], labels[idx], 0, config.max_depth, n_feat_split, rng)
        trees.append(Tree(root=assign_leaf_ids(root), weight=1.0 / config.n_trees))
    return TreeEnsemble(trees=tuple(trees), nu=0.5, epsilon=epsilon)


def train(x, labels, config: TrainConfig):
    if config.kind == "logistic":
        return train_logistic(x, labels, config)
    return train_forest(x, labels, config)
