"""Experiment configuration and benchmark orchestration.

A config is a flat ``key = value`` text file (``#`` starts a comment).
List-valued keys take comma-separated values. Keys may be written with
dashes or underscores; every key is also a CLI flag of the same name.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import jsonschema
import numpy as np
from joblib import Parallel, delayed
from scipy.stats import spearmanr

from . import classification as cls
from . import regression as reg
from .datasets import GENERATORS, gaussian_overlap_mask
from .evaluation import BISInput, accuracy_rejection_curve, ar_auc, bis, coverage, mean_width
from .forest import Dataset, ForestConfig, predict, train_forest
from .io import load_csv, standardize_response, write_csv
from .proximity import rf_gap_test

SCHEMA_VERSION = 1
REGRESSION_METHODS = ("fire", "global-oob", "qrf", "weighted-band")
CLASSIFICATION_METHODS = ("ecr", "conformity", "proba-diff", "tree-conformity", "random")


class ConfigError(ValueError):
    pass


def _floats(v):
    return [float(x) for x in str(v).split(",") if x.strip()]


def _ints(v):
    return [int(x) for x in str(v).split(",") if x.strip()]


def _strs(v):
    return [x.strip() for x in str(v).split(",") if x.strip()]


def _opt_int(v):
    return None if str(v).strip().lower() in ("", "none", "auto") else int(v)


@dataclass
class ExperimentConfig:
    task: str = "regression"
    data: str = "synthetic:heteroscedastic"
    target: str = "y"
    n_samples: int = 200
    test_fraction: float = 0.3
    seed: list = field(default_factory=lambda: [0])
    trees: int = 100
    max_features: int | None = None
    min_samples_leaf: int | None = None
    max_depth: int | None = None
    threads: int = 1
    alpha: list = field(default_factory=lambda: [0.1])
    target_coverage: list = field(default_factory=list)
    k: str = "dynamic"
    sweep: list = field(default_factory=list)
    conformity_k: int = 10
    lam: float = 1.0
    methods: list = field(default_factory=list)
    quantile_method: str = "median_unbiased"
    loss: str = "absolute"
    trust_threshold: float | None = None
    parallel_seeds: bool = False
    out: str = "results"

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"task must be regression or classification, got {self.task!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not self.seed:
            raise ConfigError("seed list must not be empty")
        if self.target_coverage:
            self.alpha = [round(1.0 - c, 12) for c in self.target_coverage]
        for a in self.alpha:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alpha {a} outside (0, 1)")
        allowed = REGRESSION_METHODS if self.task == "regression" else CLASSIFICATION_METHODS
        if not self.methods:
            self.methods = [m for m in allowed if m != "random"]
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise ConfigError(f"unknown methods for {self.task}: {bad}")
        if self.quantile_method not in reg.QUANTILE_METHODS:
            raise ConfigError(f"unknown quantile_method {self.quantile_method!r}")
        self.k = str(self.k).strip()
        if "," in self.k:
            self.sweep, self.k = _strs(self.k), reg.DYNAMIC
        if self.k != reg.DYNAMIC:
            try:
                if int(self.k) < 1:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"k must be 'dynamic', a positive integer or a list, "
                                  f"got {self.k!r}") from None
        for v in self.sweep:
            if v != "n" and not v.isdigit():
                raise ConfigError(f"bad sweep value {v!r}")

    @property
    def targets(self):
        return [round(1.0 - a, 12) for a in self.alpha]

    def forest_config(self, seed):
        return ForestConfig(n_trees=self.trees, max_features=self.max_features,
                            min_samples_leaf=self.min_samples_leaf, max_depth=self.max_depth,
                            seed=seed, thread_count=self.threads)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


# key -> parser; "lambda" is stored as ``lam``
_PARSERS = {
    "task": str, "data": str, "target": str, "n_samples": int, "test_fraction": float,
    "seed": _ints, "seeds": _ints, "trees": int, "max_features": _opt_int,
    "min_samples_leaf": _opt_int, "max_depth": _opt_int, "threads": int,
    "alpha": _floats, "target_coverage": _floats, "k": str, "sweep": _strs,
    "conformity_k": int, "lambda": float, "methods": _strs, "quantile_method": str,
    "loss": str, "trust_threshold": float,
    "parallel_seeds": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
    "out": str,
}


def config_keys():
    return sorted(_PARSERS)


def build_config(values):
    """Validate a mapping of raw string values into an ``ExperimentConfig``."""
    norm = {str(k).strip().replace("-", "_"): v for k, v in values.items()}
    unknown = sorted(k for k in norm if k not in _PARSERS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for k, v in norm.items():
        name = {"lambda": "lam", "seeds": "seed"}.get(k, k)
        try:
            kwargs[name] = _PARSERS[k](v) if isinstance(v, str) else v
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from None
    valid = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in kwargs.items() if k in valid})


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def load_config(path, overrides=None):
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update(overrides or {})
    return build_config(values)


def report_schema():
    with resources.files("forestuq").joinpath("data/report.schema.json").open() as fh:
        return json.load(fh)


def validate_records(records):
    validator = jsonschema.Draft202012Validator(report_schema())
    for rec in records:
        validator.validate(rec)


# data handling

def load_data(config, seed):
    """Return ``(dataset, extras)`` for one seed; synthetic data is redrawn per seed."""
    extras = {}
    if config.data.startswith("synthetic:"):
        name = config.data.split(":", 1)[1]
        if name not in GENERATORS:
            raise ConfigError(f"unknown synthetic dataset {name!r}")
        task, gen = GENERATORS[name]
        if task != config.task:
            raise ConfigError(f"synthetic:{name} is a {task} dataset")
        out = gen(config.n_samples, seed=seed)
        X, y = out[0], out[1]
        if name == "heteroscedastic":
            extras["noise_sd"] = out[2]
        if name == "gaussians":
            extras["overlap"] = gaussian_overlap_mask(X)
        return Dataset(X, y, task), extras
    return load_csv(data_path(config.data), config.target, config.task), extras


def data_path(data):
    """Resolve ``bundled:<file>`` to the copy shipped with the package."""
    if data.startswith("bundled:"):
        ref = resources.files("forestuq").joinpath("data", data.split(":", 1)[1])
        if not ref.is_file():
            raise ConfigError(f"no bundled file {data!r}")
        return str(ref)
    return data


def split_indices(n, test_fraction, seed):
    """Seeded uniform shuffle split into ``(train, test)`` index arrays."""
    perm = np.random.default_rng(np.random.SeedSequence([seed, 7919])).permutation(n)
    n_test = min(max(1, int(round(test_fraction * n))), n - 2)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _subset(ds, idx):
    return Dataset(ds.features[idx], ds.response[idx], ds.task, list(ds.feature_names),
                   ds.class_labels)


def prepare(config, seed):
    data, extras = load_data(config, seed)
    tr, te = split_indices(data.n, config.test_fraction, seed)
    train, test = _subset(data, tr), _subset(data, te)
    transform = None
    if config.task == "regression":
        train, mean, sd = standardize_response(train)
        test, _, _ = standardize_response(test, mean, sd)
        transform = (mean, sd)
    extras = {k: v[te] for k, v in extras.items()}
    return train, test, transform, extras


# per-seed runs

def _dataset_name(config):
    if config.data.startswith(("synthetic:", "bundled:")):
        return config.data.split(":", 1)[1]
    return os.path.basename(config.data)


def _base(config, seed, train, test):
    return {"schema_version": SCHEMA_VERSION, "dataset": _dataset_name(config), "seed": seed,
            "n_train": train.n, "n_test": test.n, "trees": config.trees}


def _interval_reports(config, forest, train, test, residuals, W, alpha, k):
    reports = {}
    for method in config.methods:
        if method == "fire":
            reports[method] = reg.fire_intervals(forest, train, test.features, alpha, k=k,
                                                 residuals=residuals, W=W,
                                                 method=config.quantile_method)
        elif method == "global-oob":
            reports[method] = reg.global_oob_intervals(forest, train, test.features, alpha,
                                                       residuals=residuals,
                                                       method=config.quantile_method)
        elif method == "qrf":
            reports[method] = reg.qrf_intervals(forest, train, test.features, alpha, W=W)
        elif method == "weighted-band":
            rep = reg.weighted_error_bands(forest, train, test.features, config.loss,
                                           residuals=residuals, W=W)
            rep.alpha = alpha
            reports[method] = rep
    return reports


def run_regression_seed(config, seed):
    train, test, (mean, sd), extras = prepare(config, seed)
    forest = train_forest(train, config.forest_config(seed))
    residuals = reg.oob_residuals(forest, train)
    W = rf_gap_test(forest, train, test.features)
    k = config.k if config.k == reg.DYNAMIC else int(config.k)
    records, rows = [], []
    for alpha in config.alpha:
        target = round(1.0 - alpha, 12)
        for method, rep in _interval_reports(config, forest, train, test, residuals, W,
                                             alpha, k).items():
            cov, width = coverage(rep, test.response), mean_width(rep)
            rec = _base(config, seed, train, test)
            rec.update(kind="interval", method=method, alpha=alpha, target_coverage=target,
                       k_mode=str(k) if method == "fire" else "n/a", coverage=cov,
                       width=width, bis=_safe_bis(width, cov, target, config.lam),
                       **{"lambda": config.lam})
            if "noise_sd" in extras and np.ptp(rep.width) > 0:
                rec["width_noise_spearman"] = float(spearmanr(rep.width, extras["noise_sd"])[0])
            records.append(rec)
            orig = rep.affine(mean, sd)
            y_orig = test.response * sd + mean
            for i in range(len(rep)):
                rows.append({"seed": seed, "method": method, "alpha": alpha, "instance": i,
                             "y_true": float(y_orig[i]), "prediction": float(orig.prediction[i]),
                             "lower": float(orig.lower[i]), "upper": float(orig.upper[i]),
                             "k_used": int(rep.k_used[i])})
    return records, rows


def _safe_bis(width, cov, target, lam):
    if width <= 0:
        return None
    return bis(BISInput(width, cov, target, lam))


def trust_reports(config, forest, train, test, W, seed):
    out = {}
    e = None
    for method in config.methods:
        if method == "ecr":
            if e is None:
                e = cls.misclassification_vector(forest, train)
            out[method] = cls.ecr_scores(W, e, predict(forest, test.features))
        elif method == "conformity":
            out[method] = cls.conformity_scores(W, train.response, config.conformity_k,
                                                train.n_classes)
        elif method == "proba-diff":
            out[method] = cls.proba_diff(forest, test.features)
        elif method == "tree-conformity":
            out[method] = cls.tree_conformity(forest, test.features)
        elif method == "random":
            rng = np.random.default_rng(np.random.SeedSequence([seed, 104729]))
            out[method] = cls.TrustReport(rng.uniform(size=test.n),
                                          predict(forest, test.features), "random")
    return out


def run_classification_seed(config, seed):
    train, test, _, extras = prepare(config, seed)
    forest = train_forest(train, config.forest_config(seed))
    W = rf_gap_test(forest, train, test.features)
    records, rows = [], []
    for method, rep in trust_reports(config, forest, train, test, W, seed).items():
        correct = (rep.predicted == test.response).astype(float)
        ok = rep.defined
        curve = accuracy_rejection_curve(rep.scores[ok], correct[ok])
        rec = _base(config, seed, train, test)
        rec.update(kind="trust", method=method, conformity_k=config.conformity_k,
                   accuracy=float(correct.mean()), auc=ar_auc(curve), r_max=curve.r_max,
                   n_scored=int(ok.sum()))
        if "overlap" in extras:
            m = extras["overlap"] & ok
            o = ~extras["overlap"] & ok
            rec["mean_score_overlap"] = float(rep.scores[m].mean()) if m.any() else None
            rec["mean_score_outside"] = float(rep.scores[o].mean()) if o.any() else None
        records.append(rec)
        for i in range(len(rep)):
            row = {"seed": seed, "method": method, "instance": i,
                   "score": float(rep.scores[i]), "predicted": int(rep.predicted[i]),
                   "y_true": int(test.response[i]), "correct": int(correct[i])}
            if config.trust_threshold is not None:
                row["classifiable"] = int(rep.scores[i] >= config.trust_threshold)
            rows.append(row)
    return records, rows


def _sweep_ks(config, n_train):
    ks = []
    for v in config.sweep or ["25", "50", "100", "200", "400", "n"]:
        k = n_train if v == "n" else int(v)
        if k <= n_train and k not in ks:
            ks.append(k)
    return ks


def run_sweep_seed(config, seed):
    if config.task != "regression":
        raise ConfigError("sweep-k needs a regression task")
    train, test, _, _ = prepare(config, seed)
    forest = train_forest(train, config.forest_config(seed))
    residuals = reg.oob_residuals(forest, train)
    W = rf_gap_test(forest, train, test.features)
    records = []
    for alpha in config.alpha:
        target = round(1.0 - alpha, 12)
        for k in _sweep_ks(config, train.n):
            rep = reg.fire_intervals(forest, train, test.features, alpha, k=k,
                                     residuals=residuals, W=W, method=config.quantile_method)
            rec = _base(config, seed, train, test)
            rec.update(kind="sweep", method="fire", alpha=alpha, target_coverage=target, k=k,
                       k_fraction=k / train.n, coverage=coverage(rep, test.response),
                       width=mean_width(rep), mean_k_used=float(rep.k_used.mean()))
            records.append(rec)
    return records, []


def _run_seeds(fn, config):
    if config.parallel_seeds and len(config.seed) > 1:
        results = Parallel(n_jobs=len(config.seed), prefer="threads")(
            delayed(fn)(config, s) for s in config.seed)
    else:
        results = [fn(config, s) for s in config.seed]
    records = [r for recs, _ in results for r in recs]
    rows = [r for _, rws in results for r in rws]
    return records, rows


INSTANCE_COLUMNS = {
    "regression": ["seed", "method", "alpha", "instance", "y_true", "prediction", "lower",
                   "upper", "k_used"],
    "classification": ["seed", "method", "instance", "score", "predicted", "y_true",
                       "correct", "classifiable"],
}
SWEEP_COLUMNS = ["seed", "alpha", "target_coverage", "k", "k_fraction", "coverage", "width",
                 "mean_k_used"]


def _write_summary(config, records, path):
    validate_records(records)
    doc = {"schema_version": SCHEMA_VERSION, "config": config.to_dict(), "records": records}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def run_benchmark(config):
    """Run every seed and write ``summary.json`` and ``instances.csv`` to ``config.out``."""
    fn = run_regression_seed if config.task == "regression" else run_classification_seed
    records, rows = _run_seeds(fn, config)
    os.makedirs(config.out, exist_ok=True)
    _write_summary(config, records, os.path.join(config.out, "summary.json"))
    cols = INSTANCE_COLUMNS[config.task]
    if config.task == "classification" and config.trust_threshold is None:
        cols = cols[:-1]
    write_csv(os.path.join(config.out, "instances.csv"), rows, cols)
    return records


def run_sweep(config):
    """k-sweep of RF-FIRE; writes ``sweep.json`` and plot-ready ``sweep.csv``."""
    records, _ = _run_seeds(run_sweep_seed, config)
    os.makedirs(config.out, exist_ok=True)
    _write_summary(config, records, os.path.join(config.out, "sweep.json"))
    write_csv(os.path.join(config.out, "sweep.csv"), records, SWEEP_COLUMNS)
    return records


def numeric_fields(records):
    """Numeric content of records, for determinism comparisons."""
    return [{k: v for k, v in r.items() if isinstance(v, (int, float)) and not
             isinstance(v, bool)} for r in records]
