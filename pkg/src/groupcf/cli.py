"""Command-line surface.

Subcommands: explain, explain-sep, pareto, outliers, train-fixture, validate.
Exit codes: 0 success/optimal, 1 usage or I/O error, 2 infeasible, 3 solver
limits hit. Flags override run-config file values.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis
from .domain import CostParams
from .fixtures import TrainConfig, train
from .io import LoadError, RunConfig, load_dataset, load_model, read_matrix_csv, save_model, save_results
from .scorers import TreeEnsemble, ensemble_score, predict_group

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_LIMITS = 3


def _add_run_flags(p):
    p.add_argument("--config", help="run-config JSON file")
    p.add_argument("--dataset")
    p.add_argument("--feature-spec")
    p.add_argument("--model")
    p.add_argument("--output-dir")
    p.add_argument("--lambda-ind", type=float)
    p.add_argument("--lambda-glob", type=float)
    p.add_argument("--i-star", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--f-range", help="comma-separated budgets, e.g. 1,2,3")
    p.add_argument("--nu", type=float)
    p.add_argument("--instances", help='"all-negative" or comma-separated row ids')
    p.add_argument("--no-heatmap", action="store_true")
    p.add_argument("--verbose", "-v", action="store_true")


def _config_from_args(args, mode) -> RunConfig:
    overrides = {
        "dataset": args.dataset, "feature_spec": args.feature_spec,
        "model": args.model, "output_dir": args.output_dir,
        "lambda_ind": args.lambda_ind, "lambda_glob": args.lambda_glob,
        "i_star": args.i_star, "fraction": args.fraction, "nu": args.nu,
        "instances": args.instances, "mode": mode,
    }
    if args.f_range is not None:
        overrides["f_range"] = [int(v) for v in args.f_range.split(",")]
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    required = ["dataset", "feature_spec", "model", "output_dir"]
    missing = [k for k in required if overrides.get(k) is None]
    if missing:
        raise LoadError(f"missing required option --{missing[0].replace('_', '-')}")
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _select_instances(group, fs, scorer, cfg):
    from .domain import InstanceGroup
    if cfg.instances == "all-negative":
        preds = predict_group(scorer, group.x0, cfg.nu)
        keep = [i for i in range(group.n_instances) if preds[i] == -1]
    elif cfg.instances in (None, "all"):
        keep = list(range(group.n_instances))
    else:
        wanted = {s.strip() for s in cfg.instances.split(",")}
        keep = [i for i in range(group.n_instances)
                if str(group.row_ids[i]) in wanted]
    if not keep:
        raise LoadError("instance filter selected no rows")
    return InstanceGroup(x0=group.x0[keep], row_ids=tuple(group.row_ids[i] for i in keep))


def run(mode: str, cfg: RunConfig) -> int:
    """Execute one workflow per the config; writes files, prints a summary."""
    group, fs, _ = load_dataset(cfg.dataset, cfg.feature_spec)
    scorer = load_model(cfg.model, n_features=group.n_features)
    sub = _select_instances(group, fs, scorer, cfg)
    options = cfg.solver_options()
    names = [f.name for f in fs.features]
    i_star = cfg.i_star if cfg.i_star is not None else sub.n_instances
    cp = CostParams(lambda_ind=cfg.lambda_ind, lambda_glob=cfg.lambda_glob)

    if mode == "collective":
        result = analysis.explain_collective(sub, scorer, fs, cp, i_star,
                                             options=options, nu=cfg.nu)
    elif mode == "separable":
        result = analysis.explain_separable(sub, scorer, fs, cfg.lambda_ind,
                                            i_star, options=options, nu=cfg.nu)
    elif mode == "pareto":
        result = analysis.pareto_sweep(sub, scorer, fs, i_star, cfg.f_range,
                                       options=options, nu=cfg.nu)
    elif mode == "outliers":
        result = analysis.detect_outliers(sub, scorer, fs, cp, cfg.fraction,
                                          options=options, nu=cfg.nu)
    else:
        raise LoadError(f"unknown mode {mode!r}")

    save_results(result, cfg.output_dir, names, heatmap=cfg.heatmap)
    return _print_summary(mode, result, names)


def _print_summary(mode, result, names) -> int:
    if mode == "pareto":
        for p in result:
            cost = "infeasible" if p.status != "optimal" else f"{p.quadratic_cost:.6f}"
            feats = ",".join(names[j] for j in p.changed_features)
            print(f"F_max={p.f_max}: {cost} [{feats}]")
        return EXIT_OK
    expl = result.explanation if isinstance(result, analysis.OutlierReport) else result
    if expl.status != "optimal":
        print(f"status: {expl.status}", file=sys.stderr)
        return EXIT_INFEASIBLE if expl.status == "infeasible" else EXIT_LIMITS
    obj = expl.objective
    print(f"status: optimal  total={obj['total']:.6f}  quadratic={obj['quadratic']:.6f}  "
          f"individual_l0={obj['individual_l0']:.6f}  global_l0={obj['global_l0']:.6f}")
    print("changed features: " + (",".join(names[j] for j in expl.changed_feature_set) or "(none)"))
    if isinstance(result, analysis.OutlierReport):
        print("excluded instances: " + (",".join(str(r) for r in result.excluded_ids) or "(none)"))
    return EXIT_OK


def cmd_train_fixture(args) -> int:
    group, fs, labels = load_dataset(args.dataset, args.feature_spec)
    if labels is None:
        raise LoadError("training requires a label column in the dataset")
    cfg = TrainConfig(kind=args.kind, seed=args.seed, iterations=args.iterations,
                      learning_rate=args.learning_rate, n_trees=args.trees,
                      max_depth=args.depth,
                      subsample_features=args.subsample_features)
    model = train(group.x0, labels, cfg)
    save_model(model, args.output)
    print(f"wrote {args.kind} model to {args.output}")
    return EXIT_OK


def cmd_validate(args) -> int:
    model = load_model(args.model)
    nu = args.nu if args.nu is not None else model.nu
    _, row_ids, x = read_matrix_csv(args.counterfactuals)
    violations, fragile = [], []
    for rid, row in zip(row_ids, x):
        score = model.score(row)
        if score < nu - args.tolerance:
            violations.append((rid, score))
        elif isinstance(model, TreeEnsemble):
            margin = _split_margin(model, row)
            if margin < model.epsilon - 1e-12:
                fragile.append((rid, margin))
    for rid, score in violations:
        print(f"row {rid}: score {score:.9f} below threshold {nu}")
    for rid, margin in fragile:
        print(f"row {rid}: margin-fragile, distance {margin:.3g} to a split "
              f"boundary (< epsilon {model.epsilon})")
    if not violations:
        print(f"all {len(row_ids)} rows valid (threshold {nu})")
        return EXIT_OK
    return EXIT_INFEASIBLE


def _split_margin(ens: TreeEnsemble, row) -> float:
    margin = float("inf")
    for tree in ens.trees:
        stack = [tree.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            margin = min(margin, abs(row[node.split_feature] - node.threshold))
            stack.extend([node.left, node.right])
    return margin


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupcf",
        description="Collective counterfactual explanations for score-based classifiers")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, mode in (("explain", "collective"), ("explain-sep", "separable"),
                       ("pareto", "pareto"), ("outliers", "outliers")):
        p = sub.add_parser(name)
        _add_run_flags(p)
        p.set_defaults(mode=mode)

    p = sub.add_parser("train-fixture")
    p.add_argument("--dataset", required=True)
    p.add_argument("--feature-spec", required=True)
    p.add_argument("--kind", choices=["logistic", "forest"], required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--subsample-features", type=float, default=1.0)
    p.set_defaults(func=cmd_train_fixture)

    p = sub.add_parser("validate")
    p.add_argument("--counterfactuals", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--nu", type=float)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if hasattr(args, "func"):
            return args.func(args)
        cfg = _config_from_args(args, args.mode)
        if args.no_heatmap:
            cfg.heatmap = False
        return run(args.mode, cfg)
    except (LoadError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
