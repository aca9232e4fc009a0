"""Command-line interface: ``forestuq <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import benchmark as bm
from . import classification as cls
from . import regression as reg
from .evaluation import BISInput, accuracy_rejection_curve, ar_auc, bis, coverage, mean_width
from .forest import ForestConfig, load_forest, predict, save_forest, train_forest
from .io import load_csv, standardize_response, write_csv
from .proximity import rf_gap_test, rf_gap_train, write_triplets

def _add_forest_flags(p):
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-features", type=int)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--max-depth", type=int)


def _add_data_flags(p, test=False):
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--target", required=True, help="response column")
    p.add_argument("--task", choices=["regression", "classification"], required=True)
    if test:
        p.add_argument("--test", required=True, help="CSV of query points (same columns)")


def _load_train(args, transform=None):
    ds = load_csv(args.data, args.target, args.task)
    if args.task == "regression":
        if transform is None:
            ds, mean, sd = standardize_response(ds)
        else:
            mean, sd = transform
            ds, _, _ = standardize_response(ds, mean, sd)
        return ds, (mean, sd)
    return ds, None


def _load_model(args, train):
    forest, extra = load_forest(args.model)
    if (forest.n_train, forest.n_features, forest.task) != (train.n, train.p, train.task):
        raise SystemExit("model does not match the training data")
    return forest, extra


def cmd_train(args):
    ds, transform = _load_train(args)
    cfg = ForestConfig(n_trees=args.trees, max_features=args.max_features,
                       min_samples_leaf=args.min_samples_leaf, max_depth=args.max_depth,
                       seed=args.seed, thread_count=args.threads)
    forest = train_forest(ds, cfg)
    extra = {"response_transform": list(transform) if transform else None,
             "feature_names": ds.feature_names,
             "class_labels": [str(c) for c in ds.class_labels] if ds.class_labels else None}
    out = args.out if args.out.endswith(".npz") else args.out + ".npz"
    save_forest(forest, out, extra)
    print(json.dumps({"model": out, "trees": forest.n_trees, "n_train": forest.n_train,
                      "never_oob": int(forest.never_oob.size)}))


def _transform(extra):
    t = extra.get("response_transform")
    return tuple(t) if t else None


def cmd_proximity(args):
    forest, extra = load_forest(args.model)
    train, _ = _load_train(args, _transform(extra))
    _load_model(args, train)
    if args.test:
        test = load_csv(args.test, args.target, args.task, like=train)
        W = rf_gap_test(forest, train, test.features)
    else:
        W = rf_gap_train(forest, train)
    write_triplets(W, args.out)
    print(json.dumps({"kind": W.kind, "rows": W.shape[0], "cols": W.shape[1],
                      "nnz": int(W.matrix.nnz), "undefined_rows": int(W.undefined_rows.size),
                      "out": args.out}))


def cmd_intervals(args):
    if args.task != "regression":
        raise SystemExit("intervals needs --task regression")
    forest, extra = load_forest(args.model)
    train, (mean, sd) = _load_train(args, _transform(extra))
    _load_model(args, train)
    test = load_csv(args.test, args.target, args.task, like=train)
    residuals = reg.oob_residuals(forest, train)
    W = rf_gap_test(forest, train, test.features)
    k = args.k if args.k == "dynamic" else int(args.k)
    rows = []
    for alpha in args.alpha:
        if args.method == "fire":
            rep = reg.fire_intervals(forest, train, test.features, alpha, k=k,
                                     residuals=residuals, W=W, method=args.quantile_method)
        elif args.method == "global-oob":
            rep = reg.global_oob_intervals(forest, train, test.features, alpha,
                                           residuals=residuals, method=args.quantile_method)
        elif args.method == "qrf":
            rep = reg.qrf_intervals(forest, train, test.features, alpha, W=W)
        else:
            rep = reg.weighted_error_bands(forest, train, test.features, args.loss,
                                           residuals=residuals, W=W)
            rep.alpha = alpha
        for rec in rep.affine(mean, sd).to_records():
            rec["y_true"] = float(test.response[rec["instance"]])
            rows.append(rec)
    _emit(rows, args.out, ["instance", "prediction", "lower", "upper", "k_used", "method",
                           "alpha", "y_true"])


def cmd_trust(args):
    if args.task != "classification":
        raise SystemExit("trust needs --task classification")
    train = load_csv(args.data, args.target, args.task)
    forest, _ = _load_model(args, train)
    test = load_csv(args.test, args.target, args.task, like=train)
    W = rf_gap_test(forest, train, test.features)
    if args.method == "ecr":
        rep = cls.ecr_scores(W, cls.misclassification_vector(forest, train),
                             predict(forest, test.features))
    elif args.method == "conformity":
        rep = cls.conformity_scores(W, train.response, args.conformity_k, train.n_classes)
    elif args.method == "proba-diff":
        rep = cls.proba_diff(forest, test.features)
    else:
        rep = cls.tree_conformity(forest, test.features)
    rows = rep.to_records(args.threshold)
    for r in rows:
        r["y_true"] = int(test.response[r["instance"]])
        r["correct"] = int(r["predicted"] == r["y_true"])
    cols = ["instance", "method", "score", "predicted", "y_true", "correct"]
    if args.threshold is not None:
        cols.append("classifiable")
    _emit(rows, args.out, cols)


def _emit(rows, out, columns):
    if out.endswith(".json"):
        with open(out, "w") as fh:
            json.dump({"schema_version": bm.SCHEMA_VERSION, "rows": rows}, fh, indent=1)
    else:
        write_csv(out, rows, columns)
    print(json.dumps({"rows": len(rows), "out": out}))


def _read_rows(path):
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)["rows"]
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_evaluate(args):
    """Summarise a per-instance intervals or trust file produced by this CLI."""
    rows = _read_rows(args.input)
    if not rows:
        raise SystemExit("no rows to evaluate")
    out = []
    if "lower" in rows[0]:
        groups = {}
        for r in rows:
            groups.setdefault((r["method"], float(r["alpha"])), []).append(r)
        for (method, alpha), rs in sorted(groups.items()):
            lo = np.array([float(r["lower"]) for r in rs])
            hi = np.array([float(r["upper"]) for r in rs])
            y = np.array([float(r["y_true"]) for r in rs])
            iv = reg.IntervalReport(np.zeros_like(lo), lo, hi, np.zeros(len(lo), int), alpha,
                                    method)
            target = args.target_coverage if args.target_coverage else round(1 - alpha, 12)
            cov, width = coverage(iv, y), mean_width(iv)
            out.append({"method": method, "alpha": alpha, "target_coverage": target,
                        "coverage": cov, "width": width,
                        "bis": bis(BISInput(width, cov, target, args.lam)) if width > 0
                        else None, "lambda": args.lam})
    else:
        groups = {}
        for r in rows:
            groups.setdefault(r["method"], []).append(r)
        for method, rs in sorted(groups.items()):
            s = np.array([float(r["score"]) for r in rs])
            c = np.array([float(r["correct"]) for r in rs])
            ok = ~np.isnan(s)
            curve = accuracy_rejection_curve(s[ok], c[ok])
            out.append({"method": method, "accuracy": float(c.mean()), "auc": ar_auc(curve),
                        "r_max": curve.r_max})
    doc = {"schema_version": bm.SCHEMA_VERSION, "summary": out}
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _config_from_args(args):
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(bm.parse_config_text(fh.read()))
    for kv in args.set or []:
        if "=" not in kv:
            raise SystemExit(f"--set expects key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        values[k.strip()] = v.strip()
    for key in bm.config_keys():
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        return bm.build_config(values)
    except bm.ConfigError as exc:
        raise SystemExit(f"config error: {exc}") from None


def cmd_benchmark(args):
    config = _config_from_args(args)
    records = bm.run_benchmark(config)
    print(json.dumps({"records": len(records), "out": config.out}))


def cmd_sweep(args):
    config = _config_from_args(args)
    records = bm.run_sweep(config)
    print(json.dumps({"records": len(records), "out": config.out}))


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    # common keys as first-class flags; values stay strings and are parsed by the config
    for key in bm.config_keys():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="forestuq",
                                 description="RF-GAP proximities and localized uncertainty "
                                             "for random forests")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a forest and save it")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--out", required=True, help="model path (.npz)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("proximity", help="write RF-GAP proximities as triplets")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--test", help="query CSV; omit for train-train proximities")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_proximity)

    p = sub.add_parser("intervals", help="prediction intervals for test points")
    p.add_argument("--model", required=True)
    _add_data_flags(p, test=True)
    p.add_argument("--method", choices=reg_methods(), default="fire")
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--target-coverage", type=float, action="append")
    p.add_argument("--k", default="dynamic")
    p.add_argument("--quantile-method", choices=list(reg.QUANTILE_METHODS),
                   default="median_unbiased")
    p.add_argument("--loss", choices=["absolute", "squared"], default="absolute")
    p.add_argument("--out", required=True, help=".csv or .json")
    p.set_defaults(func=cmd_intervals)

    p = sub.add_parser("trust", help="trust scores for test points")
    p.add_argument("--model", required=True)
    _add_data_flags(p, test=True)
    p.add_argument("--method", choices=["ecr", "conformity", "proba-diff", "tree-conformity"],
                   default="conformity")
    p.add_argument("--conformity-k", type=int, default=10)
    p.add_argument("--threshold", type=float, help="classifiable if score >= threshold")
    p.add_argument("--out", required=True, help=".csv or .json")
    p.set_defaults(func=cmd_trust)

    p = sub.add_parser("evaluate", help="summarise an intervals or trust file")
    p.add_argument("input")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--target-coverage", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="run a configured benchmark")
    _add_config_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep-k", help="RF-FIRE coverage/width across neighbourhood sizes")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def reg_methods():
    return list(bm.REGRESSION_METHODS)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "intervals":
        alphas = list(args.alpha or [])
        alphas += [round(1 - c, 12) for c in args.target_coverage or []]
        args.alpha = alphas or [0.1]
    if args.command in ("benchmark", "sweep-k") and not (args.config or args.set or any(
            getattr(args, k, None) is not None for k in bm.config_keys())):
        print("no configuration given; using defaults", file=sys.stderr)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
