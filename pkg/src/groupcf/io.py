"""File formats: dataset CSV + feature-spec sidecar, model JSON, run
configuration, and result emission (counterfactual CSV, delta CSV, summary
JSON, optional static SVG heatmap).

All files are UTF-8; CSVs are comma separated with '.' decimal point and a
mandatory header row. Numbers are serialized with 17 significant digits so
round-trips are bit-stable.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .analysis import CollectiveExplanation, OutlierReport, ParetoPoint
from .domain import FeasibleSet, FeatureSpec, InstanceGroup
from .scorers import LinearModel, Tree, TreeEnsemble, TreeNode, assign_leaf_ids
from .solver import SolverOptions


class LoadError(ValueError):
    """Malformed input file."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class RunConfig:
    dataset: str
    feature_spec: str
    model: str
    mode: str  # collective | separable | pareto | outliers
    output_dir: str
    lambda_ind: float = 0.0
    lambda_glob: float = 0.0
    f_range: Optional[list] = None
    fraction: Optional[float] = None
    i_star: Optional[int] = None
    nu: Optional[float] = None
    instances: str = "all-negative"  # or comma-separated row ids
    solver: dict = field(default_factory=dict)
    heatmap: bool = True

    def __post_init__(self):
        if self.mode not in ("collective", "separable", "pareto", "outliers"):
            raise LoadError(f"unknown mode {self.mode!r}")
        if self.mode == "pareto" and not self.f_range:
            raise LoadError("pareto mode requires f_range")
        if self.mode == "outliers" and self.fraction is None:
            raise LoadError("outliers mode requires fraction")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(**self.solver)

    @classmethod
    def from_file(cls, path: str, overrides: Optional[dict] = None) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**raw)
        except TypeError as exc:
            raise LoadError(f"bad run config: {exc}") from exc


def load_feature_spec(path: str) -> tuple:
    """Parse the sidecar; returns (list of raw feature dicts, label column)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if "features" not in raw or not isinstance(raw["features"], list):
        raise LoadError(f"{path}: spec must contain a 'features' array")
    return raw["features"], raw.get("label")


def load_dataset(csv_path: str, spec_path: str):
    """Read a dataset CSV against its feature-spec sidecar.

    Returns (InstanceGroup, FeasibleSet, labels or None). Bounds declared as
    "auto" are replaced by the observed column min/max.
    """
    raw_feats, label_col = load_feature_spec(spec_path)
    names = [f["name"] for f in raw_feats]
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{csv_path}: empty file") from None
        expected = set(names) | ({label_col} if label_col else set())
        unknown = [c for c in header if c not in expected]
        if unknown:
            raise LoadError(f"{csv_path}: unknown column {unknown[0]!r}")
        missing = [c for c in names if c not in header]
        if missing:
            raise LoadError(f"{csv_path}: missing column {missing[0]!r}")
        col_idx = {c: header.index(c) for c in header}
        rows, labels, row_ids = [], [], []
        for r, rec in enumerate(reader):
            vals = []
            for name in names:
                cell = rec[col_idx[name]]
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise LoadError(
                        f"{csv_path}: row {r}, column {name!r}: bad number {cell!r}"
                    ) from None
            rows.append(vals)
            row_ids.append(r)
            if label_col and label_col in col_idx:
                try:
                    labels.append(int(float(rec[col_idx[label_col]])))
                except ValueError:
                    raise LoadError(
                        f"{csv_path}: row {r}: bad label {rec[col_idx[label_col]]!r}"
                    ) from None
    if not rows:
        raise LoadError(f"{csv_path}: no data rows")
    x = np.array(rows, dtype=float)
    specs = []
    for j, f in enumerate(raw_feats):
        kind = f.get("kind", "continuous")
        lower = f.get("lower", "auto")
        upper = f.get("upper", "auto")
        if lower == "auto":
            lower = float(x[:, j].min())
        if upper == "auto":
            upper = float(x[:, j].max())
        specs.append(FeatureSpec(
            name=f["name"], kind=kind, lower=float(lower), upper=float(upper),
            immutable=bool(f.get("immutable", False)),
            one_hot_group=f.get("one_hot_group")))
    fs = FeasibleSet(features=tuple(specs))
    group = InstanceGroup.from_matrix(x, row_ids=row_ids)
    lo, hi = fs.lower, fs.upper
    bad = (x < lo - 1e-12) | (x > hi + 1e-12)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise LoadError(f"{csv_path}: row {i}, feature {names[j]!r}: value "
                        f"{x[i, j]} outside [{lo[j]}, {hi[j]}]")
    for gname, members in fs.one_hot_groups().items():
        sums = x[:, members].sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
        if off.size:
            raise LoadError(f"{csv_path}: row {int(off[0])}: one-hot group "
                            f"{gname!r} sums to {sums[off[0]]}, expected 1")
    return group, fs, (np.array(labels, dtype=int) if labels else None)


# ---------------------------------------------------------------- model JSON

def _node_to_json(node: TreeNode):
    if node.is_leaf:
        return {"leaf": node.output}
    return {"feature": node.split_feature, "threshold": node.threshold,
            "left": _node_to_json(node.left), "right": _node_to_json(node.right)}


def _node_from_json(raw, n_features: int) -> TreeNode:
    if "leaf" in raw:
        if raw["leaf"] not in (1, -1):
            raise LoadError(f"leaf output must be +1/-1, got {raw['leaf']}")
        return TreeNode(leaf_id=0, output=int(raw["leaf"]))
    j = int(raw["feature"])
    if not 0 <= j < n_features:
        raise LoadError(f"split references feature {j}, model has {n_features}")
    return TreeNode(split_feature=j, threshold=float(raw["threshold"]),
                    left=_node_from_json(raw["left"], n_features),
                    right=_node_from_json(raw["right"], n_features))


def model_to_json(model) -> dict:
    if isinstance(model, LinearModel):
        return {"kind": "linear", "weights": [float(w) for w in model.weights],
                "intercept": float(model.intercept), "nu": float(model.nu)}
    if isinstance(model, TreeEnsemble):
        return {"kind": "ensemble", "nu": float(model.nu),
                "epsilon": float(model.epsilon),
                "trees": [{"weight": float(t.weight),
                           "root": _node_to_json(t.root)} for t in model.trees]}
    raise TypeError(f"unsupported model type {type(model).__name__}")


def save_model(model, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str, n_features: Optional[int] = None):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    kind = raw.get("kind")
    try:
        if kind == "linear":
            model = LinearModel(weights=np.array(raw["weights"], dtype=float),
                                intercept=float(raw["intercept"]),
                                nu=float(raw["nu"]))
            if n_features is not None and model.n_features != n_features:
                raise LoadError(f"{path}: model has {model.n_features} features, "
                                f"expected {n_features}")
            return model
        if kind == "ensemble":
            nf = n_features if n_features is not None else _max_feature(raw) + 1
            trees = []
            for t in raw["trees"]:
                if float(t["weight"]) < 0:
                    raise LoadError(f"{path}: negative tree weight")
                trees.append(Tree(root=assign_leaf_ids(_node_from_json(t["root"], nf)),
                                  weight=float(t["weight"])))
            return TreeEnsemble(trees=tuple(trees), nu=float(raw["nu"]),
                                epsilon=float(raw["epsilon"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise LoadError(f"{path}: {exc}") from exc
    raise LoadError(f"{path}: unknown model kind {kind!r}")


def _max_feature(raw) -> int:
    best = -1

    def walk(node):
        nonlocal best
        if "leaf" in node:
            return
        best = max(best, int(node["feature"]))
        walk(node["left"])
        walk(node["right"])

    for t in raw["trees"]:
        walk(t["root"])
    return best


# ------------------------------------------------------------------- results

def _write_matrix_csv(path, header, row_ids, matrix):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_id"] + list(header))
        for rid, row in zip(row_ids, matrix):
            writer.writerow([rid] + [_fmt(v) for v in row])


def read_matrix_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        row_ids, rows = [], []
        for rec in reader:
            row_ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    return header[1:], row_ids, np.array(rows, dtype=float)


def _heatmap_svg(delta, row_ids, feature_names, cell=28, label_w=64) -> str:
    """Static heatmap of the delta matrix, diverging scale centered at 0."""
    I, J = delta.shape
    vmax = max(float(np.abs(delta).max()), 1e-12)
    width = label_w + J * cell
    height = 20 + I * cell
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="sans-serif" font-size="9">']
    for j, name in enumerate(feature_names):
        parts.append(f'<text x="{label_w + j * cell + cell / 2}" y="12" '
                     f'text-anchor="middle">{name}</text>')
    for i in range(I):
        parts.append(f'<text x="{label_w - 6}" y="{20 + i * cell + cell / 2 + 3}" '
                     f'text-anchor="end">{row_ids[i]}</text>')
        for j in range(J):
            t = delta[i, j] / vmax  # [-1, 1]
            if t >= 0:
                r, g, b = 255, int(255 * (1 - t)), int(255 * (1 - t))
            else:
                r, g, b = int(255 * (1 + t)), int(255 * (1 + t)), 255
            parts.append(f'<rect x="{label_w + j * cell}" y="{20 + i * cell}" '
                         f'width="{cell}" height="{cell}" '
                         f'fill="rgb({r},{g},{b})" stroke="#ccc"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_results(result, output_dir: str, feature_names, heatmap: bool = True) -> list:
    """Write result files; returns the list of paths written."""
    os.makedirs(output_dir, exist_ok=True)
    written = []
    summary = {}
    expl = None
    if isinstance(result, OutlierReport):
        expl = result.explanation
        summary["excluded"] = sorted(result.excluded_ids)
        summary["i_star"] = result.i_star
        summary["lambda_glob"] = result.lambda_glob
    elif isinstance(result, CollectiveExplanation):
        expl = result
    elif isinstance(result, list) and all(isinstance(p, ParetoPoint) for p in result):
        summary["pareto"] = [
            {"f_max": p.f_max, "status": p.status, "quadratic_cost": p.quadratic_cost,
             "changed_features": [feature_names[j] for j in p.changed_features]}
            for p in result]
    else:
        raise TypeError(f"cannot persist result of type {type(result).__name__}")

    if expl is not None:
        summary["status"] = expl.status
        if expl.status == "optimal":
            summary["objective"] = expl.objective
            summary["changed_features"] = [feature_names[j]
                                           for j in expl.changed_feature_set]
            summary["selected_rows"] = [expl.row_ids[i] for i in expl.selected]
            delta = expl.x - expl.x0
            cf_path = os.path.join(output_dir, "counterfactuals.csv")
            _write_matrix_csv(cf_path, feature_names, expl.row_ids, expl.x)
            written.append(cf_path)
            d_path = os.path.join(output_dir, "deltas.csv")
            _write_matrix_csv(d_path, feature_names, expl.row_ids, delta)
            written.append(d_path)
            if heatmap:
                svg_path = os.path.join(output_dir, "heatmap.svg")
                with open(svg_path, "w", encoding="utf-8") as fh:
                    fh.write(_heatmap_svg(delta, expl.row_ids, feature_names))
                written.append(svg_path)
        else:
            summary["diagnostics"] = {k: v for k, v in expl.diagnostics.items()
                                      if isinstance(v, (int, float, str))}
    s_path = os.path.join(output_dir, "summary.json")
    with open(s_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    written.append(s_path)
    return written
