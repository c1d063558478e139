"""Collective counterfactual explanations for score-based classifiers.

Compiles group counterfactual programs (linear scorers and additive tree
ensembles, with individual and global sparsity terms) into mixed-integer
convex-quadratic problems and solves them exactly with a built-in
branch-and-bound solver.
"""

from .analysis import (
    CollectiveExplanation,
    OutlierReport,
    ParetoPoint,
    detect_outliers,
    explain_collective,
    explain_separable,
    pareto_sweep,
    perturbation_summary,
)
from .domain import (
    CostParams,
    FeasibleSet,
    FeatureSpec,
    InstanceGroup,
    LinearRow,
    changed_features,
    cost_of,
    default_bounds,
)
from .estimator import CollectiveCounterfactual
from .formulation import build_cesep, build_colce_atm, build_colce_lr, extract_solution
from .scorers import LinearModel, Tree, TreeEnsemble, TreeNode, predict
from .solver import SolveResult, SolverOptions, brute_force_oracle, solve_miqp, solve_relaxation

__version__ = "0.1.0"

__all__ = [
    "CollectiveCounterfactual",
    "CollectiveExplanation",
    "CostParams",
    "FeasibleSet",
    "FeatureSpec",
    "InstanceGroup",
    "LinearModel",
    "LinearRow",
    "OutlierReport",
    "ParetoPoint",
    "SolveResult",
    "SolverOptions",
    "Tree",
    "TreeEnsemble",
    "TreeNode",
    "brute_force_oracle",
    "build_cesep",
    "build_colce_atm",
    "build_colce_lr",
    "changed_features",
    "cost_of",
    "default_bounds",
    "detect_outliers",
    "explain_collective",
    "explain_separable",
    "extract_solution",
    "pareto_sweep",
    "perturbation_summary",
    "predict",
    "solve_miqp",
    "solve_relaxation",
]
