"""Compilation of counterfactual programs into MIQP form.

Builders turn (instance group, scorer, feasible set, cost parameters, number of
instances to flip, optional global-sparsity budget) into a MiqpProblem:

* linear scorers get an exact product linearization between the selection flag
  and the affine score (Fortet rows with a per-instance big-M);
* tree ensembles get a leaf-activation encoding: one binary per (instance,
  tree, leaf), split rows switched by per-split big-Ms, and binary product
  variables linking leaf choice with instance selection;
* changed-coordinate flags and global changed-feature flags linearize the two
  l0 cost terms, with per-coordinate big-Ms.

All big-Ms are tightened from the feature boxes and carry safety floors so an
indicator at its relax value makes its row hold everywhere in the box.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .domain import CostParams, FeasibleSet, InstanceGroup, changed_features, cost_decomposition
from .miqp import MiqpBuilder, MiqpProblem
from .scorers import (LinearModel, Tree, TreeEnsemble, ancestor_splits,
                      leaf_of, leaves_of)


def big_m_feature(x0_ij: float, lb: float, ub: float) -> tuple:
    """Directional switch constants (down, up) for the changed-coordinate rows.

    The largest possible move below / above the original value inside the box;
    these are the tightest valid coefficients, so a fractional change flag
    already reflects how far the coordinate actually moved.
    """
    if not (math.isfinite(lb) and math.isfinite(ub)):
        raise ValueError("feature bounds must be finite (compact feasible set)")
    return max(x0_ij - lb, 0.0), max(ub - x0_ij, 0.0)


def big_m_score(model: LinearModel, lb, ub) -> float:
    """Bound on |w.x + b| over the box [lb, ub]: |b| + ||w||_2 * max box norm."""
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if not (np.isfinite(lb).all() and np.isfinite(ub).all()):
        raise ValueError("box must be bounded")
    box_norm = math.sqrt(float(np.sum(np.maximum(lb ** 2, ub ** 2))))
    return abs(model.intercept) + float(np.linalg.norm(model.weights)) * box_norm


def big_m_split(lb: float, ub: float, c: float, eps: float) -> tuple:
    """Switch constants (M1, M2) for a left/right split-activation row pair.

    M1 = max(|lb|, |ub|) - c and M2 = min(|lb|, |ub|) + c + eps, each raised to
    the floor that keeps the relaxed row inactive for every in-box value:
    M1 >= ub - c + eps and M2 >= c + eps - lb.
    """
    m1 = max(max(abs(lb), abs(ub)) - c, ub - c + eps, 0.0)
    m2 = max(min(abs(lb), abs(ub)) + c + eps, c + eps - lb, 0.0)
    return m1, m2


def _instance_box(group: InstanceGroup, fs: FeasibleSet, i: int):
    """Per-instance bounds: feature boxes with immutable coordinates pinned."""
    lb = fs.lower.copy()
    ub = fs.upper.copy()
    pinned = fs.pinned_mask()
    lb[pinned] = group.x0[i, pinned]
    ub[pinned] = group.x0[i, pinned]
    return lb, ub


def _emit_common(b: MiqpBuilder, group: InstanceGroup, fs: FeasibleSet,
                 lambda_ind: float, lambda_glob: float,
                 include_global: bool, f_max: Optional[int]):
    """Variables x / xi / xi*, the l0 rows, box/pin/one-hot/linking rows, and
    the quadratic part of the objective."""
    I, J = group.n_instances, group.n_features
    pinned = fs.pinned_mask()
    for i in range(I):
        lb_i, ub_i = _instance_box(group, fs, i)
        for j in range(J):
            x0 = group.x0[i, j]
            integral = fs.features[j].kind in ("integer", "binary")
            b.add_var(("x", i, j), lb_i[j], ub_i[j], integer=integral,
                      name=f"x_{i}_{j}", q=1.0, c=-2.0 * x0)
            b.add_const(x0 * x0)
    for i in range(I):
        for j in range(J):
            hi = 0.0 if pinned[j] else 1.0
            b.add_var(("xi", i, j), 0.0, hi, integer=True,
                      name=f"xi_{i}_{j}", c=lambda_ind)
    if include_global:
        for j in range(J):
            hi = 0.0 if pinned[j] else 1.0
            b.add_var(("xistar", j), 0.0, hi, integer=True,
                      name=f"xistar_{j}", c=lambda_glob)
    # changed-coordinate switch rows
    for i in range(I):
        for j in range(J):
            if pinned[j]:
                continue
            x0 = group.x0[i, j]
            m_down, m_up = big_m_feature(x0, fs.features[j].lower,
                                         fs.features[j].upper)
            xv, sv = b.var(("x", i, j)), b.var(("xi", i, j))
            b.add_row({xv: -1.0, sv: -m_down}, "<=", -x0, indicator=(sv, 1))
            b.add_row({xv: 1.0, sv: -m_up}, "<=", x0, indicator=(sv, 1))
            if include_global:
                b.add_row({sv: 1.0, b.var(("xistar", j)): -1.0}, "<=", 0.0)
    if f_max is not None:
        if not include_global:
            raise ValueError("global sparsity budget requires global change flags")
        b.add_row({b.var(("xistar", j)): 1.0 for j in range(J) if not pinned[j]},
                  "<=", float(f_max))
    # one category per one-hot group
    for name, members in fs.one_hot_groups().items():
        for i in range(I):
            b.add_row({b.var(("x", i, j)): 1.0 for j in members}, "=", 1.0)
    # user-supplied rows over the stacked counterfactual vector
    for row in fs.linking_rows:
        coeffs = {}
        for i, j, c in row.coeffs:
            coeffs[b.var(("x", i, j))] = coeffs.get(b.var(("x", i, j)), 0.0) + c
        b.add_row(coeffs, row.sense, row.rhs)


def _emit_selection(b: MiqpBuilder, n_instances: int, i_star: int, fix_selected: bool):
    for i in range(n_instances):
        lo = 1.0 if fix_selected else 0.0
        b.add_var(("y", i), lo, 1.0, integer=True, name=f"y_{i}")
    b.add_row({b.var(("y", i)): 1.0 for i in range(n_instances)}, "=", float(i_star))


def _emit_linear_score(b: MiqpBuilder, group: InstanceGroup, fs: FeasibleSet,
                       model: LinearModel, nu: float):
    """Fortet rows making u_i equal y_i * (w.x_i + b), plus the score threshold."""
    w, bias = model.weights, model.intercept
    for i in range(group.n_instances):
        lb_i, ub_i = _instance_box(group, fs, i)
        m = big_m_score(model, lb_i, ub_i)
        y = b.var(("y", i))
        u = b.add_var(("u", i), -m, m, name=f"u_{i}")
        b.add_row({y: nu, u: -1.0}, "<=", 0.0)  # u >= nu * y
        b.add_row({u: 1.0, y: -m}, "<=", 0.0, indicator=(y, 1))
        b.add_row({u: -1.0, y: -m}, "<=", 0.0, indicator=(y, 1))
        # the unselected side needs 2M: at y = 0 the row must hold for every
        # u in [-M, M] against every score value in [-M, M]
        up = {u: 1.0, y: 2 * m}
        lo = {u: -1.0, y: 2 * m}
        for j in range(group.n_features):
            if w[j] != 0.0:
                xv = b.var(("x", i, j))
                up[xv] = up.get(xv, 0.0) - w[j]
                lo[xv] = lo.get(xv, 0.0) + w[j]
        b.add_row(up, "<=", bias + 2 * m, indicator=(y, 0))  # u <= w.x + b + (1-y)2M
        b.add_row(lo, "<=", 2 * m - bias, indicator=(y, 0))  # u >= w.x + b - (1-y)2M


def _internal_splits(root):
    """(feature, threshold, left leaf ids, right leaf ids) per internal node."""
    out = []

    def walk(node):
        if node.is_leaf:
            return
        out.append((node.split_feature, node.threshold,
                    [l.leaf_id for l in leaves_of(node.left)],
                    [l.leaf_id for l in leaves_of(node.right)]))
        walk(node.left)
        walk(node.right)

    walk(root)
    return out


def _emit_tree_score(b: MiqpBuilder, group: InstanceGroup, fs: FeasibleSet,
                     ens: TreeEnsemble, nu: float):
    """Leaf-activation rows, one-leaf-per-tree equalities, and the product-
    linearized score threshold."""
    J = group.n_features
    for tree in ens.trees:
        for leaf in leaves_of(tree.root):
            for v, c in ancestor_splits(tree.root, leaf.leaf_id)[0] + \
                    ancestor_splits(tree.root, leaf.leaf_id)[1]:
                if not 0 <= v < J:
                    raise ValueError(f"split references unknown feature {v}")
    for i in range(group.n_instances):
        lb_i, ub_i = _instance_box(group, fs, i)
        y = b.var(("y", i))
        score_row = {y: nu}
        for t, tree in enumerate(ens.trees):
            leaves = leaves_of(tree.root)
            for leaf in leaves:
                z = b.add_var(("z", i, t, leaf.leaf_id), 0.0, 1.0, integer=True,
                              name=f"z_{i}_{t}_{leaf.leaf_id}")
                left, right = ancestor_splits(tree.root, leaf.leaf_id)
                for v, c in left:
                    eps = 0.0 if fs.features[v].split_epsilon_zero else ens.epsilon
                    m1, _ = big_m_split(lb_i[v], ub_i[v], c, eps)
                    b.add_row({b.var(("x", i, v)): 1.0, z: m1}, "<=", c + m1 - eps,
                              indicator=(z, 0))
                for v, c in right:
                    eps = 0.0 if fs.features[v].split_epsilon_zero else ens.epsilon
                    _, m2 = big_m_split(lb_i[v], ub_i[v], c, eps)
                    b.add_row({b.var(("x", i, v)): 1.0, z: -m2}, ">=", c - m2 + eps,
                              indicator=(z, 0))
            b.add_row({b.var(("z", i, t, l.leaf_id)): 1.0 for l in leaves}, "=", 1.0)
            # leaving the original leaf requires changing a feature on its
            # path: if every path coordinate is pinned to the original value,
            # traversal still reaches the same leaf. Valid at every integer
            # point and ties leaf flags to change flags in the relaxation.
            if len(leaves) > 1:
                home = leaf_of(tree.root, group.x0[i])
                hl, hr = ancestor_splits(tree.root, home)
                row = {b.var(("z", i, t, home)): 1.0}
                for v in {v for v, _ in hl + hr}:
                    if not fs.features[v].immutable:
                        row[b.var(("xi", i, v))] = 1.0
                b.add_row(row, ">=", 1.0)
            # aggregated split-side rows, one per internal node: implied by
            # the per-leaf rows at every integer point, but much tighter on
            # fractional leaf flags, so relaxation bounds improve
            for v, c, left_ids, right_ids in _internal_splits(tree.root):
                eps = 0.0 if fs.features[v].split_epsilon_zero else ens.epsilon
                xv = b.var(("x", i, v))
                if ub_i[v] > c - eps:
                    row = {b.var(("z", i, t, l)): ub_i[v] - (c - eps)
                           for l in left_ids}
                    row[xv] = 1.0
                    b.add_row(row, "<=", ub_i[v])
                if c + eps > lb_i[v]:
                    row = {b.var(("z", i, t, l)): c + eps - lb_i[v]
                           for l in right_ids}
                    row[xv] = -1.0
                    b.add_row(row, "<=", -lb_i[v])
            # product variables only for positive leaves; negative leaves never
            # contribute to the score
            for leaf in leaves:
                if leaf.output != 1:
                    continue
                z = b.var(("z", i, t, leaf.leaf_id))
                u = b.add_var(("uatm", i, t, leaf.leaf_id), 0.0, 1.0, integer=True,
                              name=f"u_{i}_{t}_{leaf.leaf_id}")
                b.add_row({u: 1.0, y: -1.0}, "<=", 0.0)
                b.add_row({u: 1.0, z: -1.0}, "<=", 0.0)
                b.add_row({y: 1.0, z: 1.0, u: -1.0}, "<=", 1.0)
                score_row[u] = score_row.get(u, 0.0) - tree.weight
        b.add_row(score_row, "<=", 0.0)  # sum_t w_t sum_{l+} u >= nu * y


def _finish(b: MiqpBuilder, group: InstanceGroup, cp: CostParams, i_star: int,
            f_max: Optional[int], scorer_kind: str) -> MiqpProblem:
    b.meta.update({
        "n_instances": group.n_instances,
        "n_features": group.n_features,
        "i_star": i_star,
        "lambda_ind": cp.lambda_ind,
        "lambda_glob": cp.lambda_glob,
        "f_max": f_max,
        "change_tol": cp.change_tol,
        "scorer_kind": scorer_kind,
        "x0": group.x0.copy(),
        "row_ids": group.row_ids,
    })
    return b.build()


def _check_args(group: InstanceGroup, fs: FeasibleSet, cp: CostParams,
                i_star: int, f_max: Optional[int]):
    fs.validate_group(group)
    if not 0 <= i_star <= group.n_instances:
        raise ValueError(f"i_star must lie in [0, {group.n_instances}], got {i_star}")
    if f_max is not None:
        if cp.lambda_glob > 0:
            raise ValueError("hard global-sparsity budget and soft global penalty "
                             "are mutually exclusive")
        if not 0 <= f_max <= group.n_features:
            raise ValueError(f"f_max must lie in [0, {group.n_features}], got {f_max}")


def build_colce_lr(group: InstanceGroup, model: LinearModel, fs: FeasibleSet,
                   cp: CostParams, i_star: int, f_max: Optional[int] = None,
                   nu: Optional[float] = None) -> MiqpProblem:
    """Collective counterfactual program for a linear scorer."""
    _check_args(group, fs, cp, i_star, f_max)
    if model.n_features != group.n_features:
        raise ValueError("model dimension does not match the group")
    b = MiqpBuilder()
    _emit_common(b, group, fs, cp.lambda_ind, cp.lambda_glob, True, f_max)
    _emit_selection(b, group.n_instances, i_star, fix_selected=False)
    _emit_linear_score(b, group, fs, model, model.nu if nu is None else nu)
    return _finish(b, group, cp, i_star, f_max, "linear")


def build_colce_atm(group: InstanceGroup, ens: TreeEnsemble, fs: FeasibleSet,
                    cp: CostParams, i_star: int,
                    nu: Optional[float] = None) -> MiqpProblem:
    """Collective counterfactual program for an additive tree ensemble."""
    _check_args(group, fs, cp, i_star, None)
    b = MiqpBuilder()
    _emit_common(b, group, fs, cp.lambda_ind, cp.lambda_glob, True, None)
    _emit_selection(b, group.n_instances, i_star, fix_selected=False)
    _emit_tree_score(b, group, fs, ens, ens.nu if nu is None else nu)
    return _finish(b, group, cp, i_star, None, "ensemble")


def build_cesep(instance, scorer, fs: FeasibleSet, lambda_ind: float,
                nu: Optional[float] = None) -> MiqpProblem:
    """Single-instance program: the instance must flip, no global terms."""
    if lambda_ind < 0:
        raise ValueError("lambda_ind must be nonnegative")
    group = InstanceGroup.from_matrix(np.asarray(instance, dtype=float)[None, :])
    cp = CostParams(lambda_ind=lambda_ind, lambda_glob=0.0)
    fs.validate_group(group)
    b = MiqpBuilder()
    _emit_common(b, group, fs, lambda_ind, 0.0, False, None)
    _emit_selection(b, 1, 1, fix_selected=True)
    if isinstance(scorer, LinearModel):
        _emit_linear_score(b, group, fs, scorer, scorer.nu if nu is None else nu)
        kind = "linear"
    else:
        _emit_tree_score(b, group, fs, scorer, scorer.nu if nu is None else nu)
        kind = "ensemble"
    return _finish(b, group, cp, 1, None, kind)


def extract_solution(problem: MiqpProblem, assignment) -> dict:
    """Decode a solver assignment into counterfactual-level quantities.

    Change flags are recomputed from the counterfactual matrix itself rather
    than trusted from the binary variables. Returns a dict with keys x, y, xi,
    xi_star, objective (decomposition), solver_objective, per_instance_costs.
    """
    v = np.asarray(assignment, dtype=float)
    if v.shape != (problem.n_vars,):
        raise ValueError("assignment length does not match the problem")
    I = problem.meta["n_instances"]
    J = problem.meta["n_features"]
    x0 = problem.meta["x0"]
    tol = problem.meta["change_tol"]
    x = np.empty((I, J))
    for i in range(I):
        for j in range(J):
            x[i, j] = v[problem.tags[("x", i, j)]]
    if ("y", 0) in problem.tags:
        y = np.array([int(round(v[problem.tags[("y", i)]])) for i in range(I)])
    else:
        y = np.ones(I, dtype=int)
    xi, xi_star = changed_features(x0, x, tol)
    cp = CostParams(lambda_ind=problem.meta["lambda_ind"],
                    lambda_glob=problem.meta["lambda_glob"], change_tol=tol)
    per_instance = np.sum((x0 - x) ** 2, axis=1) + cp.lambda_ind * xi.sum(axis=1)
    return {
        "x": x,
        "y": y,
        "xi": xi,
        "xi_star": xi_star,
        "objective": cost_decomposition(x0, x, cp),
        "solver_objective": problem.objective_value(v),
        "per_instance_costs": per_instance,
        "row_ids": problem.meta["row_ids"],
        "x0": x0,
    }
