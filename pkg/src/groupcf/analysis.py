"""Workflows on top of the builders and the solver.

* explain_collective: one joint solve for a group.
* explain_separable: per-instance solves plus sort-and-select, valid when the
  global sparsity weight is zero and no rows link instances.
* pareto_sweep: one hard-budget solve per global-sparsity level.
* detect_outliers: flip only a fraction of the group; the unselected instances
  are the outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import CostParams, FeasibleSet, InstanceGroup, changed_features, cost_decomposition
from .formulation import build_cesep, build_colce_atm, build_colce_lr, extract_solution
from .miqp import MiqpProblem
from .scorers import LinearModel, Scorer, TreeEnsemble, leaf_of
from .solver import SolverOptions, solve_miqp

SCORE_TOL = 1e-6


@dataclass
class CollectiveExplanation:
    status: str
    x0: np.ndarray
    x: Optional[np.ndarray]
    y: Optional[np.ndarray]
    xi: Optional[np.ndarray]
    xi_star: Optional[np.ndarray]
    objective: Optional[dict]
    per_instance_costs: Optional[np.ndarray]
    row_ids: tuple
    solver_objective: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def changed_feature_set(self) -> tuple:
        if self.xi_star is None:
            return ()
        return tuple(int(j) for j in np.flatnonzero(self.xi_star))

    @property
    def selected(self) -> tuple:
        if self.y is None:
            return ()
        return tuple(int(i) for i in np.flatnonzero(self.y))


@dataclass(frozen=True)
class ParetoPoint:
    f_max: int
    status: str
    quadratic_cost: Optional[float]
    changed_features: tuple


@dataclass(frozen=True)
class OutlierReport:
    i_star: int
    excluded_ids: tuple
    lambda_glob: float
    explanation: CollectiveExplanation


def _explanation_from_result(problem: MiqpProblem, result, diagnostics=None) -> CollectiveExplanation:
    if result.status != "optimal":
        x0 = problem.meta["x0"]
        return CollectiveExplanation(
            status=result.status, x0=x0, x=None, y=None, xi=None, xi_star=None,
            objective=None, per_instance_costs=None,
            row_ids=problem.meta["row_ids"], diagnostics=diagnostics or {})
    dec = extract_solution(problem, result.assignment)
    return CollectiveExplanation(
        status="optimal", x0=dec["x0"], x=dec["x"], y=dec["y"], xi=dec["xi"],
        xi_star=dec["xi_star"], objective=dec["objective"],
        per_instance_costs=dec["per_instance_costs"], row_ids=dec["row_ids"],
        solver_objective=result.objective, diagnostics=diagnostics or {})


def build_for_scorer(group: InstanceGroup, scorer: Scorer, fs: FeasibleSet,
                     cp: CostParams, i_star: int, f_max: Optional[int] = None,
                     nu: Optional[float] = None) -> MiqpProblem:
    if isinstance(scorer, LinearModel):
        return build_colce_lr(group, scorer, fs, cp, i_star, f_max=f_max, nu=nu)
    if isinstance(scorer, TreeEnsemble):
        if f_max is not None:
            raise ValueError("hard global-sparsity budget is supported for linear scorers only")
        return build_colce_atm(group, scorer, fs, cp, i_star, nu=nu)
    raise TypeError(f"unsupported scorer type {type(scorer).__name__}")


def _integer_pattern(problem: MiqpProblem, scorer: Scorer, x0: np.ndarray,
                     x: np.ndarray, y: np.ndarray, change_tol: float) -> dict:
    """Integer-variable values consistent with a counterfactual matrix.

    Change flags are recomputed from the moves, leaf choices follow each
    counterfactual row through the trees, and product flags are y AND z.
    Used to seed the branch-and-bound with a known-feasible pattern.
    """
    xi, xi_star = changed_features(x0, x, change_tol)
    tags = problem.tags
    warm = {}
    I, J = x.shape
    for i in range(I):
        if ("y", i) in tags:
            warm[tags[("y", i)]] = float(y[i])
        for j in range(J):
            if ("xi", i, j) in tags:
                warm[tags[("xi", i, j)]] = float(xi[i, j])
    for j in range(J):
        if ("xistar", j) in tags:
            warm[tags[("xistar", j)]] = float(xi_star[j])
    if isinstance(scorer, TreeEnsemble):
        for i in range(I):
            for t, tree in enumerate(scorer.trees):
                leaf_id = leaf_of(tree.root, x[i])
                key = ("z", i, t, leaf_id)
                if key in tags:
                    warm[tags[key]] = 1.0
                ukey = ("uatm", i, t, leaf_id)
                if ukey in tags and y[i]:
                    warm[tags[ukey]] = 1.0
    return warm


def _separable_warm_start(problem: MiqpProblem, group: InstanceGroup,
                          scorer: Scorer, fs: FeasibleSet, cp: CostParams,
                          i_star: int, options: SolverOptions,
                          nu: Optional[float]) -> Optional[dict]:
    """Seed the joint solve with the cheapest per-instance solutions."""
    try:
        sep = explain_separable(group, scorer, fs, cp.lambda_ind, i_star,
                                options=options, nu=nu,
                                change_tol=cp.change_tol)
    except ValueError:
        return None
    if sep.status != "optimal":
        return None
    return _integer_pattern(problem, scorer, group.x0, sep.x, sep.y,
                            cp.change_tol)


def explain_collective(group: InstanceGroup, scorer: Scorer, fs: FeasibleSet,
                       cp: CostParams, i_star: int,
                       options: SolverOptions = SolverOptions(),
                       f_max: Optional[int] = None,
                       nu: Optional[float] = None,
                       warm_start: bool = True) -> CollectiveExplanation:
    """Jointly optimal counterfactuals flipping i_star instances of the group."""
    problem = build_for_scorer(group, scorer, fs, cp, i_star, f_max=f_max, nu=nu)
    warm = None
    if warm_start and group.n_instances > 1 and not fs.linking_rows:
        warm = _separable_warm_start(problem, group, scorer, fs, cp, i_star,
                                     options, nu)
    result = solve_miqp(problem, options, warm=warm)
    diag = {"node_count": result.node_count, "wall_time": result.wall_time,
            "best_bound": result.best_bound}
    return _explanation_from_result(problem, result, diag)


def explain_separable(group: InstanceGroup, scorer: Scorer, fs: FeasibleSet,
                      lambda_ind: float, i_star: int,
                      options: SolverOptions = SolverOptions(),
                      nu: Optional[float] = None,
                      change_tol: float = 1e-6) -> CollectiveExplanation:
    """Separable path: solve each instance alone, sort costs, keep the cheapest.

    Requires no linking rows (the joint problem would not decompose otherwise).
    """
    if fs.linking_rows:
        raise ValueError("separable path requires a feasible set without linking rows")
    fs.validate_group(group)
    if not 0 <= i_star <= group.n_instances:
        raise ValueError(f"i_star must lie in [0, {group.n_instances}]")
    costs = []
    solutions = []
    for i in range(group.n_instances):
        problem = build_cesep(group.x0[i], scorer, fs, lambda_ind, nu=nu)
        result = solve_miqp(problem, options)
        if result.status != "optimal":
            solutions.append(None)
            costs.append(float("inf"))
            continue
        dec = extract_solution(problem, result.assignment)
        solutions.append(dec["x"][0])
        costs.append(result.objective)
    order = sorted(range(group.n_instances), key=lambda i: (costs[i], i))
    chosen = order[:i_star]
    infeasible = [i for i in chosen if solutions[i] is None]
    if infeasible:
        rid = group.row_ids[infeasible[0]]
        return CollectiveExplanation(
            status="infeasible", x0=group.x0, x=None, y=None, xi=None,
            xi_star=None, objective=None, per_instance_costs=None,
            row_ids=group.row_ids,
            diagnostics={"infeasible_instance": rid})
    x = group.x0.copy()
    y = np.zeros(group.n_instances, dtype=int)
    for i in chosen:
        x[i] = solutions[i]
        y[i] = 1
    cp = CostParams(lambda_ind=lambda_ind, lambda_glob=0.0, change_tol=change_tol)
    xi, xi_star = changed_features(group.x0, x, change_tol)
    per_instance = np.sum((group.x0 - x) ** 2, axis=1) + lambda_ind * xi.sum(axis=1)
    return CollectiveExplanation(
        status="optimal", x0=group.x0, x=x, y=y, xi=xi, xi_star=xi_star,
        objective=cost_decomposition(group.x0, x, cp),
        per_instance_costs=per_instance, row_ids=group.row_ids,
        solver_objective=float(sum(costs[i] for i in chosen)))


def pareto_sweep(group: InstanceGroup, model: LinearModel, fs: FeasibleSet,
                 i_star: int, f_range: Sequence[int],
                 options: SolverOptions = SolverOptions(),
                 nu: Optional[float] = None) -> list:
    """One hard-budget solve per global-sparsity level; points are independent."""
    if not isinstance(model, LinearModel):
        raise TypeError("pareto sweep requires a linear scorer")
    cp = CostParams(lambda_ind=0.0, lambda_glob=0.0)
    points = []
    for f_max in f_range:
        expl = explain_collective(group, model, fs, cp, i_star, options=options,
                                  f_max=int(f_max), nu=nu)
        if expl.status == "optimal":
            points.append(ParetoPoint(int(f_max), "optimal",
                                      expl.objective["quadratic"],
                                      expl.changed_feature_set))
        else:
            points.append(ParetoPoint(int(f_max), expl.status, None, ()))
    return points


def detect_outliers(group: InstanceGroup, scorer: Scorer, fs: FeasibleSet,
                    cp: CostParams, fraction: float,
                    options: SolverOptions = SolverOptions(),
                    nu: Optional[float] = None) -> OutlierReport:
    """Flip ceil(fraction * I) instances; the unselected ones are the outliers."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    i_star = math.ceil(fraction * group.n_instances)
    expl = explain_collective(group, scorer, fs, cp, i_star, options=options, nu=nu)
    if expl.status != "optimal":
        return OutlierReport(i_star=i_star, excluded_ids=(),
                             lambda_glob=cp.lambda_glob, explanation=expl)
    excluded = tuple(sorted(group.row_ids[i] for i in range(group.n_instances)
                            if expl.y[i] == 0))
    return OutlierReport(i_star=i_star, excluded_ids=excluded,
                         lambda_glob=cp.lambda_glob, explanation=expl)


def perturbation_summary(expl: CollectiveExplanation) -> dict:
    """Per-feature change counts and the signed delta matrix (counterfactual
    minus original: positive means the feature must increase)."""
    if expl.status != "optimal":
        raise ValueError(f"explanation status is {expl.status}, not optimal")
    delta = expl.x - expl.x0
    return {
        "delta": delta,
        "per_feature_change_counts": expl.xi.sum(axis=0).astype(int),
        "changed_feature_set": expl.changed_feature_set,
        "global_changed_count": int(expl.xi_star.sum()),
    }
