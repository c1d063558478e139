"""Core value types: feature metadata, instance groups, feasible sets, perturbation costs.

Everything downstream (formulation builders, solver, workflows) consumes these
immutable objects. The cost of moving a group of instances to a group of
counterfactuals combines squared Euclidean distance, a per-instance changed-feature
count, and a global changed-feature count (features touched for *any* instance).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DEFAULT_CHANGE_TOL = 1e-6


class DimensionError(ValueError):
    """Shapes of original and counterfactual matrices disagree."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = "continuous"  # continuous | integer | binary
    lower: float = 0.0
    upper: float = 1.0
    immutable: bool = False
    one_hot_group: Optional[str] = None
    split_epsilon_zero: bool = False

    def __post_init__(self):
        if self.kind not in ("continuous", "integer", "binary"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == "binary":
            object.__setattr__(self, "lower", 0.0)
            object.__setattr__(self, "upper", 1.0)
        if self.lower > self.upper:
            raise ValueError(f"feature {self.name}: lower {self.lower} > upper {self.upper}")
        if self.one_hot_group is not None:
            if self.kind != "binary":
                raise ValueError(f"feature {self.name}: one-hot members must be binary")
            # dummies use exact split thresholds, no strictness margin needed
            object.__setattr__(self, "split_epsilon_zero", True)


@dataclass(frozen=True)
class InstanceGroup:
    """A group of I instances over J features, rows in feature units."""

    x0: np.ndarray
    row_ids: tuple

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.ndim != 2 or x0.shape[0] < 1 or x0.shape[1] < 1:
            raise ValueError("instance matrix must be I x J with I, J >= 1")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        if len(self.row_ids) != x0.shape[0]:
            raise ValueError("row_ids length must match number of rows")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValueError("row_ids must be unique")
        x0.setflags(write=False)

    @property
    def n_instances(self) -> int:
        return self.x0.shape[0]

    @property
    def n_features(self) -> int:
        return self.x0.shape[1]

    @classmethod
    def from_matrix(cls, x0, row_ids=None) -> "InstanceGroup":
        x0 = np.asarray(x0, dtype=float)
        if row_ids is None:
            row_ids = tuple(range(x0.shape[0]))
        return cls(x0=x0, row_ids=tuple(row_ids))


@dataclass(frozen=True)
class LinearRow:
    """A generic linear row over the stacked counterfactual vector.

    Coefficients are keyed by (instance index, feature index); sense is one of
    '<=', '>=', '='.
    """

    coeffs: tuple  # ((i, j, coefficient), ...)
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "coeffs", tuple((int(i), int(j), float(c)) for i, j, c in self.coeffs))


@dataclass(frozen=True)
class FeasibleSet:
    """Per-instance feasible regions plus optional rows linking instances.

    Pinned coordinates (from immutable features) hold the counterfactual at the
    original value. One-hot groups carry an implicit "sum of dummies = 1" row
    per instance.
    """

    features: tuple  # tuple[FeatureSpec, ...]
    linking_rows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "linking_rows", tuple(self.linking_rows))
        for f in self.features:
            if not np.isfinite(f.lower) or not np.isfinite(f.upper):
                raise ValueError(f"feature {f.name}: bounds must be finite (compact feasible set)")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def lower(self) -> np.ndarray:
        return np.array([f.lower for f in self.features], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([f.upper for f in self.features], dtype=float)

    def one_hot_groups(self) -> dict:
        groups: dict = {}
        for j, f in enumerate(self.features):
            if f.one_hot_group is not None:
                groups.setdefault(f.one_hot_group, []).append(j)
        return groups

    def pinned_mask(self) -> np.ndarray:
        return np.array([f.immutable for f in self.features], dtype=bool)

    def validate_group(self, group: InstanceGroup) -> None:
        if group.n_features != self.n_features:
            raise DimensionError(
                f"group has {group.n_features} features, feasible set has {self.n_features}"
            )
        lo, hi = self.lower, self.upper
        bad = (group.x0 < lo - 1e-12) | (group.x0 > hi + 1e-12)
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise ValueError(
                f"instance {group.row_ids[i]}: feature {self.features[j].name} value "
                f"{group.x0[i, j]} outside [{lo[j]}, {hi[j]}]"
            )


@dataclass(frozen=True)
class CostParams:
    lambda_ind: float = 0.0
    lambda_glob: float = 0.0
    change_tol: float = DEFAULT_CHANGE_TOL

    def __post_init__(self):
        if self.lambda_ind < 0 or self.lambda_glob < 0:
            raise ValueError("sparsity weights must be nonnegative")
        if self.change_tol <= 0:
            raise ValueError("change tolerance must be positive")


def changed_features(x0, x, tol: float = DEFAULT_CHANGE_TOL):
    """Per-instance and global change indicators.

    Returns (xi, xi_star) where xi[i, j] is 1 when instance i moved feature j by
    more than tol, and xi_star[j] = max_i xi[i, j].
    """
    x0 = np.asarray(x0, dtype=float)
    x = np.asarray(x, dtype=float)
    if x0.shape != x.shape:
        raise DimensionError(f"shape mismatch: {x0.shape} vs {x.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    xi = (np.abs(x0 - x) > tol).astype(int)
    return xi, xi.max(axis=0)


def cost_of(x0, x, params: CostParams) -> float:
    """Total perturbation cost of moving x0 to x.

    Sum of squared Euclidean row distances, plus lambda_ind times the number of
    per-instance changed coordinates, plus lambda_glob times the number of
    features changed for at least one instance.
    """
    x0 = np.asarray(x0, dtype=float)
    x = np.asarray(x, dtype=float)
    if x0.shape != x.shape:
        raise DimensionError(f"shape mismatch: {x0.shape} vs {x.shape}")
    xi, xi_star = changed_features(x0, x, params.change_tol)
    quad = float(np.sum((x0 - x) ** 2))
    return quad + params.lambda_ind * float(xi.sum()) + params.lambda_glob * float(xi_star.sum())


def cost_decomposition(x0, x, params: CostParams) -> dict:
    """Objective split into quadratic, individual-l0 and global-l0 parts."""
    x0 = np.asarray(x0, dtype=float)
    x = np.asarray(x, dtype=float)
    xi, xi_star = changed_features(x0, x, params.change_tol)
    quad = float(np.sum((x0 - x) ** 2))
    return {
        "quadratic": quad,
        "individual_l0": params.lambda_ind * float(xi.sum()),
        "global_l0": params.lambda_glob * float(xi_star.sum()),
        "total": quad + params.lambda_ind * float(xi.sum()) + params.lambda_glob * float(xi_star.sum()),
    }


def default_bounds(group: InstanceGroup, feature_names: Optional[Sequence[str]] = None,
                   binary_mask: Optional[Sequence[bool]] = None) -> FeasibleSet:
    """Feasible set with per-feature bounds set to the observed min/max.

    Binary columns (all observed values in {0, 1}) keep their binary kind when
    flagged via binary_mask.
    """
    if group.n_instances < 1:
        raise ValueError("dataset must be nonempty")
    names = list(feature_names) if feature_names is not None else [
        f"f{j}" for j in range(group.n_features)
    ]
    lo = group.x0.min(axis=0)
    hi = group.x0.max(axis=0)
    specs = []
    for j in range(group.n_features):
        is_bin = bool(binary_mask[j]) if binary_mask is not None else False
        if is_bin:
            specs.append(FeatureSpec(name=names[j], kind="binary"))
        else:
            specs.append(FeatureSpec(name=names[j], kind="continuous",
                                     lower=float(lo[j]), upper=float(hi[j])))
    return FeasibleSet(features=tuple(specs))


def with_immutable(fs: FeasibleSet, names: Sequence[str]) -> FeasibleSet:
    """Copy of fs with the named features pinned to their original values."""
    wanted = set(names)
    known = {f.name for f in fs.features}
    missing = wanted - known
    if missing:
        raise KeyError(f"unknown features: {sorted(missing)}")
    feats = tuple(replace(f, immutable=True) if f.name in wanted else f for f in fs.features)
    return FeasibleSet(features=feats, linking_rows=fs.linking_rows)
