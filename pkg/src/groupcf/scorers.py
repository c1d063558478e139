"""Score-based classifiers: linear models and additive tree ensembles.

A scorer assigns class +1 to an instance x whenever score(x) >= nu. Tree
ensembles score x as the total weight of trees whose reached leaf votes +1.
Split convention: x[feature] <= threshold goes left, > goes right.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def score(self, x) -> float:
        return linear_score(self, x)


@dataclass(frozen=True)
class TreeNode:
    """Internal node (split_feature/threshold/left/right) or leaf (leaf_id/output)."""

    split_feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    leaf_id: Optional[int] = None
    output: Optional[int] = None  # +1 or -1 at leaves

    @property
    def is_leaf(self) -> bool:
        return self.leaf_id is not None

    def __post_init__(self):
        if self.is_leaf:
            if self.output not in (1, -1):
                raise ValueError("leaf output must be +1 or -1")
        else:
            if self.split_feature is None or self.threshold is None:
                raise ValueError("internal node needs split_feature and threshold")
            if self.left is None or self.right is None:
                raise ValueError("internal node needs both children")


def assign_leaf_ids(root: TreeNode) -> TreeNode:
    """Rebuild a tree with dense leaf ids in left-to-right order."""
    counter = [0]

    def rebuild(node: TreeNode) -> TreeNode:
        if node.is_leaf:
            nid = counter[0]
            counter[0] += 1
            return TreeNode(leaf_id=nid, output=node.output)
        return TreeNode(split_feature=node.split_feature, threshold=node.threshold,
                        left=rebuild(node.left), right=rebuild(node.right))

    return rebuild(root)


def leaves_of(root: TreeNode) -> list:
    """All leaves in left-to-right order."""
    out = []

    def walk(node):
        if node.is_leaf:
            out.append(node)
        else:
            walk(node.left)
            walk(node.right)

    walk(root)
    return out


@dataclass(frozen=True)
class Tree:
    root: TreeNode
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("tree weights must be nonnegative")
        ids = [l.leaf_id for l in leaves_of(self.root)]
        if len(set(ids)) != len(ids):
            raise ValueError("leaf ids must be unique within a tree")


@dataclass(frozen=True)
class TreeEnsemble:
    trees: tuple  # tuple[Tree, ...]
    nu: float
    epsilon: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if len(self.trees) < 1:
            raise ValueError("ensemble needs at least one tree")
        if self.epsilon <= 0:
            raise ValueError("split margin epsilon must be positive "
                             "(zero is applied per-feature for one-hot dummies)")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def score(self, x) -> float:
        return ensemble_score(self, x)


Scorer = Union[LinearModel, TreeEnsemble]


def linear_score(model: LinearModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != model.weights.shape:
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, weights {model.weights.shape}")
    return float(model.weights @ x + model.intercept)


def leaf_of(root: TreeNode, x) -> int:
    """Leaf id reached by x; boundary values (x == threshold) go left."""
    x = np.asarray(x, dtype=float)
    node = root
    while not node.is_leaf:
        node = node.left if x[node.split_feature] <= node.threshold else node.right
    return node.leaf_id


def _leaf_output(root: TreeNode, leaf_id: int) -> int:
    for l in leaves_of(root):
        if l.leaf_id == leaf_id:
            return l.output
    raise KeyError(f"unknown leaf id {leaf_id}")


def ensemble_score(ens: TreeEnsemble, x) -> float:
    total = 0.0
    for tree in ens.trees:
        lid = leaf_of(tree.root, x)
        if _leaf_output(tree.root, lid) == 1:
            total += tree.weight
    return total


def ancestor_splits(root: TreeNode, leaf_id: int):
    """Root-to-leaf path splits, partitioned into (left_splits, right_splits).

    Each split is a (feature, threshold) pair; left means the path took the
    "condition true" branch (x[feature] <= threshold).
    """

    def search(node, left_acc, right_acc):
        if node.is_leaf:
            return (left_acc, right_acc) if node.leaf_id == leaf_id else None
        split = (node.split_feature, node.threshold)
        found = search(node.left, left_acc + [split], right_acc)
        if found is not None:
            return found
        return search(node.right, left_acc, right_acc + [split])

    result = search(root, [], [])
    if result is None:
        raise KeyError(f"unknown leaf id {leaf_id}")
    return result


def predict(scorer: Scorer, x, nu: Optional[float] = None) -> int:
    """+1 iff score(x) >= nu (threshold taken from the model unless overridden)."""
    threshold = scorer.nu if nu is None else nu
    return 1 if scorer.score(x) >= threshold else -1


def predict_group(scorer: Scorer, x0, nu: Optional[float] = None) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    return np.array([predict(scorer, row, nu) for row in x0], dtype=int)
