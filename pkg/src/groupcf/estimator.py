"""Scikit-learn style adapter.

`CollectiveCounterfactual` is a transformer: fit(X) freezes feature bounds
(observed min/max unless a feasible set is supplied), transform(X) returns the
jointly optimal counterfactual matrix for the rows of X under the configured
scorer. It composes with sklearn pipelines and get_params/set_params tooling;
the underlying workflow objects remain available through `explain`.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .analysis import CollectiveExplanation, explain_collective, explain_separable
from .domain import CostParams, FeasibleSet, InstanceGroup, default_bounds
from .solver import SolverOptions


class CollectiveCounterfactual(BaseEstimator, TransformerMixin):
    """Collective counterfactual explainer with an estimator interface.

    Parameters
    ----------
    scorer : LinearModel or TreeEnsemble
        Trained score-based classifier whose positive class is the target.
    lambda_ind, lambda_glob : float
        Weights of the per-instance and global changed-feature counts.
    n_selected : int or None
        Number of instances that must flip; None means all rows of X.
    feasible_set : FeasibleSet or None
        Bounds, pins and linking rows; None derives observed min/max in fit.
    separable : bool
        Use the per-instance sort-and-select path (requires lambda_glob == 0).
    nu : float or None
        Score threshold override.
    """

    def __init__(self, scorer=None, lambda_ind=0.0, lambda_glob=0.0,
                 n_selected=None, feasible_set=None, separable=False,
                 nu=None, gap_tol=1e-6, time_limit=None):
        self.scorer = scorer
        self.lambda_ind = lambda_ind
        self.lambda_glob = lambda_glob
        self.n_selected = n_selected
        self.feasible_set = feasible_set
        self.separable = separable
        self.nu = nu
        self.gap_tol = gap_tol
        self.time_limit = time_limit

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if self.scorer is None:
            raise ValueError("a scorer must be provided")
        if self.feasible_set is not None:
            self.feasible_set_ = self.feasible_set
        else:
            self.feasible_set_ = default_bounds(InstanceGroup.from_matrix(X))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        expl = self.explain(X)
        if expl.status != "optimal":
            raise RuntimeError(f"solve ended with status {expl.status}")
        return expl.x

    def explain(self, X) -> CollectiveExplanation:
        """Full explanation object for the rows of X."""
        if not hasattr(self, "feasible_set_"):
            raise RuntimeError("call fit before transform/explain")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, fit saw {self.n_features_in_}")
        group = InstanceGroup.from_matrix(X)
        i_star = self.n_selected if self.n_selected is not None else group.n_instances
        options = SolverOptions(gap_tol=self.gap_tol, time_limit=self.time_limit)
        if self.separable:
            if self.lambda_glob:
                raise ValueError("separable mode requires lambda_glob == 0")
            return explain_separable(group, self.scorer, self.feasible_set_,
                                     self.lambda_ind, i_star, options=options,
                                     nu=self.nu)
        cp = CostParams(lambda_ind=self.lambda_ind, lambda_glob=self.lambda_glob)
        return explain_collective(group, self.scorer, self.feasible_set_, cp,
                                  i_star, options=options, nu=self.nu)
