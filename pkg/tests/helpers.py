"""Shared helpers for the test suite: randomized case generators, the
indicator-row deactivation audit, and solution validity checks."""

import itertools
import os

import numpy as np

from groupcf.domain import CostParams, FeatureSpec, FeasibleSet, InstanceGroup
from groupcf.formulation import build_colce_atm, build_colce_lr
from groupcf.scorers import (LinearModel, Tree, TreeEnsemble, TreeNode,
                             assign_leaf_ids, ensemble_score, linear_score,
                             leaves_of)

DATA_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "data")
HOUSING_CSV = os.path.join(DATA_DIR, "housing.csv")
HOUSING_SPEC = os.path.join(DATA_DIR, "housing.spec.json")


def random_feasible_set(rng, n_features, lo=-1.0, hi=2.0):
    feats = []
    for j in range(n_features):
        a, b = sorted(rng.uniform(lo, hi, size=2))
        if b - a < 0.5:
            b = a + 0.5
        feats.append(FeatureSpec(name=f"f{j}", kind="continuous",
                                 lower=float(a), upper=float(b)))
    return FeasibleSet(features=tuple(feats))


def random_group(rng, fs, n_instances):
    lo, hi = fs.lower, fs.upper
    x0 = rng.uniform(lo, hi, size=(n_instances, fs.n_features))
    return InstanceGroup.from_matrix(x0)


def random_linear_case(rng, max_instances=3, max_features=3, allow_budget=True):
    """A small random linear-scorer case; sized so the oracle stays tractable."""
    I = int(rng.integers(1, max_instances + 1))
    J = int(rng.integers(2, max_features + 1))
    fs = random_feasible_set(rng, J)
    group = random_group(rng, fs, I)
    w = rng.normal(size=J)
    bias = -float(np.median(group.x0 @ w)) + float(rng.normal(0, 0.2))
    model = LinearModel(weights=w, intercept=bias, nu=float(rng.uniform(-0.2, 0.2)))
    i_star = int(rng.integers(1, I + 1))
    f_max = None
    lam_ind = float(rng.choice([0.0, 0.1, 0.5]))
    lam_glob = float(rng.choice([0.0, 0.2, 1.0]))
    if allow_budget and rng.random() < 0.3:
        lam_glob = 0.0
        f_max = int(rng.integers(1, J + 1))
    cp = CostParams(lambda_ind=lam_ind, lambda_glob=lam_glob)
    return group, model, fs, cp, i_star, f_max


def random_tree_node(rng, J, depth, lo, hi):
    if depth == 0 or rng.random() < 0.3:
        return TreeNode(leaf_id=0, output=int(rng.choice([1, -1])))
    j = int(rng.integers(0, J))
    c = float(rng.uniform(lo[j] + 0.1, hi[j] - 0.1))
    return TreeNode(split_feature=j, threshold=c,
                    left=random_tree_node(rng, J, depth - 1, lo, hi),
                    right=random_tree_node(rng, J, depth - 1, lo, hi))


def random_ensemble_case(rng, max_instances=2):
    """A small random tree-ensemble case kept within the oracle's size cap."""
    for _ in range(50):
        I = int(rng.integers(1, max_instances + 1))
        J = 2
        fs = random_feasible_set(rng, J)
        group = random_group(rng, fs, I)
        lo, hi = fs.lower, fs.upper
        n_trees = int(rng.integers(1, 3))
        trees = []
        for _ in range(n_trees):
            root = random_tree_node(rng, J, 2, lo, hi)
            if all(l.output == root.output for l in leaves_of(root)) \
                    and leaves_of(root)[0].output == -1 and len(leaves_of(root)) == 1:
                root = TreeNode(split_feature=0,
                                threshold=float(0.5 * (lo[0] + hi[0])),
                                left=TreeNode(leaf_id=0, output=1), right=root)
            trees.append(Tree(root=assign_leaf_ids(root), weight=1.0 / n_trees))
        ens = TreeEnsemble(trees=tuple(trees), nu=0.5, epsilon=1e-5)
        i_star = int(rng.integers(1, I + 1))
        cp = CostParams(lambda_ind=float(rng.choice([0.0, 0.1])),
                        lambda_glob=float(rng.choice([0.0, 0.2])))
        problem = build_colce_atm(group, ens, fs, cp, i_star)
        free = [i for i in problem.integer_indices()
                if problem.lb[i] < problem.ub[i] - 1e-12]
        if len(free) <= 20:
            return group, ens, fs, cp, i_star, problem
    raise RuntimeError("failed to draw a small enough ensemble case")


def build_linear(case):
    group, model, fs, cp, i_star, f_max = case
    return build_colce_lr(group, model, fs, cp, i_star, f_max=f_max)


def audit_indicator_rows(problem, tol=1e-9, corner_cap=12):
    """Big-M deactivation audit: with the switching binary at its relax value,
    every indicator row must hold at every corner of the variable box.

    Rows with few variables are checked at all corners literally; wider rows
    use the worst corner (coefficient-signed bound choice), which dominates
    all corners of a linear row.
    """
    A = problem.A
    for row, bidx, relax in problem.indicator_rows:
        assert problem.senses[row] == "<="
        start, end = A.indptr[row], A.indptr[row + 1]
        idxs = A.indices[start:end]
        coefs = A.data[start:end]
        others = [(int(i), float(c)) for i, c in zip(idxs, coefs) if i != bidx]
        b_coef = sum(float(c) for i, c in zip(idxs, coefs) if i == bidx)
        base = b_coef * relax
        rhs = problem.rhs[row]
        if len(others) <= corner_cap:
            for corner in itertools.product(*[(problem.lb[i], problem.ub[i])
                                              for i, _ in others]):
                lhs = base + sum(c * v for (_, c), v in zip(others, corner))
                assert lhs <= rhs + tol, (
                    f"row {row}: indicator at relax value {relax} leaves the row "
                    f"active at a box corner ({lhs} > {rhs})")
        else:
            lhs = base + sum(c * (problem.ub[i] if c > 0 else problem.lb[i])
                             for i, c in others)
            assert lhs <= rhs + tol, (
                f"row {row}: indicator at relax value {relax} leaves the row "
                f"active at the worst box corner ({lhs} > {rhs})")


def check_validity(expl, scorer, i_star, nu=None, tol=1e-6):
    """Re-score an optimal explanation outside the MIQP.

    Selected instances must score at least nu; unselected rows must equal the
    originals coordinatewise within tol.
    """
    assert expl.status == "optimal"
    threshold = scorer.nu if nu is None else nu
    assert int(expl.y.sum()) == i_star
    for i in range(expl.x0.shape[0]):
        if expl.y[i]:
            if isinstance(scorer, LinearModel):
                score = linear_score(scorer, expl.x[i])
            else:
                score = ensemble_score(scorer, expl.x[i])
            assert score >= threshold - 1e-9, (
                f"selected instance {i} scores {score} < {threshold}")
        else:
            assert np.abs(expl.x[i] - expl.x0[i]).max() <= tol, (
                f"unselected instance {i} was moved")


def check_atm_leaf_agreement(problem, assignment, ens, tol=1e-6):
    """At an optimal solution, the activated leaf flags must match plain tree
    traversal of the counterfactual, and the MIQP score row must agree with
    the ensemble score."""
    from groupcf.scorers import leaf_of

    I = problem.meta["n_instances"]
    for i in range(I):
        x = np.array([assignment[problem.tags[("x", i, j)]]
                      for j in range(problem.meta["n_features"])])
        for t, tree in enumerate(ens.trees):
            active = [l.leaf_id for l in leaves_of(tree.root)
                      if assignment[problem.tags[("z", i, t, l.leaf_id)]] > 0.5]
            assert len(active) == 1, f"instance {i} tree {t}: {len(active)} leaves on"
            assert active[0] == leaf_of(tree.root, x), (
                f"instance {i} tree {t}: flag {active[0]} vs traversal "
                f"{leaf_of(tree.root, x)}")
