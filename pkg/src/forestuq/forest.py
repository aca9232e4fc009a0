"""Random forests with explicit bootstrap multiplicities and OOB bookkeeping.

Leaf predictions are multiplicity-weighted (``sum c_j y_j / sum c_j``), which
is what makes RF-GAP reconstruction of the forest's predictions exact.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from ._cart import apply_packed, grow_tree

FORMAT_VERSION = 1
TIE_TOL = 1e-12

__all__ = [
    "Dataset",
    "BootstrapRecord",
    "Tree",
    "Forest",
    "ForestConfig",
    "bootstrap_sample",
    "fit_tree",
    "train_forest",
    "oob_predict",
    "predict",
    "predict_proba",
    "argmax_lowest",
    "save_forest",
    "load_forest",
]


def argmax_lowest(scores, tol=TIE_TOL):
    """Row-wise argmax where values within ``tol`` of the max tie, lowest index wins."""
    scores = np.asarray(scores, dtype=float)
    top = scores.max(axis=-1, keepdims=True)
    return np.argmax(scores >= top - tol, axis=-1)


@dataclass
class Dataset:
    features: np.ndarray
    response: np.ndarray
    task: str
    feature_names: list = field(default_factory=list)
    class_labels: list | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, p = self.features.shape
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if np.isnan(self.features).any():
            raise ValueError("features contain missing values")
        if self.task == "regression":
            self.response = np.asarray(self.response, dtype=np.float64)
            if np.isnan(self.response).any():
                raise ValueError("response contains missing values")
        else:
            self.response = np.asarray(self.response, dtype=np.int64)
            n_classes = int(self.response.max()) + 1
            if self.response.min() < 0:
                raise ValueError("class labels must be indices 0..C-1")
            if self.class_labels is None:
                self.class_labels = list(range(n_classes))
            if len(self.class_labels) < n_classes:
                raise ValueError("class_labels shorter than the label index range")
        if self.response.shape != (n,):
            raise ValueError("response length does not match features")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(p)]

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.class_labels) if self.task == "classification" else 0


@dataclass(frozen=True)
class BootstrapRecord:
    counts: np.ndarray

    @property
    def in_bag(self):
        return np.flatnonzero(self.counts > 0)

    @property
    def oob(self):
        return np.flatnonzero(self.counts == 0)


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``None`` for ``max_features`` / ``min_samples_leaf`` means the task
    default: ceil(p/3) and 5 for regression, ceil(sqrt(p)) and 1 for
    classification. ``max_depth=None`` grows until leaves are pure or too
    small to split.
    """

    n_trees: int = 100
    max_features: int | None = None
    min_samples_leaf: int | None = None
    max_depth: int | None = None
    seed: int = 0
    thread_count: int = 1

    def resolve(self, p, task):
        mf = self.max_features
        if mf is None:
            mf = math.ceil(p / 3) if task == "regression" else math.ceil(math.sqrt(p))
        msl = self.min_samples_leaf
        if msl is None:
            msl = 5 if task == "regression" else 1
        cfg = replace(self, max_features=int(mf), min_samples_leaf=int(msl))
        cfg.validate(p)
        return cfg

    def validate(self, p=None):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf is not None and self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None:
            if self.max_features < 1 or (p is not None and self.max_features > p):
                raise ValueError(f"max_features must lie in [1, p]; got {self.max_features}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.thread_count < 1:
            raise ValueError("thread_count must be >= 1")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    bootstrap: BootstrapRecord

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return apply_packed(X, self.feature, self.threshold, self.left, self.right,
                            np.zeros(1, dtype=np.int64))[:, 0]


class Forest:
    """An immutable collection of trees grown on one training set."""

    def __init__(self, trees, config, task, n_train, n_features, n_classes=0):
        self.trees = tuple(trees)
        self.config = config
        self.task = task
        self.n_train = int(n_train)
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self._pack()
        counts = self.counts
        self.oob_tree_count = (counts == 0).sum(axis=0)
        self.never_oob = np.flatnonzero(self.oob_tree_count == 0)

    def _pack(self):
        sizes = np.array([t.n_nodes for t in self.trees], dtype=np.int64)
        self.roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        offs = np.repeat(self.roots, sizes)
        self._feature = np.concatenate([t.feature for t in self.trees])
        self._threshold = np.concatenate([t.threshold for t in self.trees])
        left = np.concatenate([t.left for t in self.trees])
        right = np.concatenate([t.right for t in self.trees])
        self._left = np.where(left >= 0, left + offs, -1)
        self._right = np.where(right >= 0, right + offs, -1)
        self.node_value = np.concatenate([t.value for t in self.trees])
        self.node_weight = np.concatenate([t.weight for t in self.trees])
        for arr in (self._feature, self._threshold, self._left, self._right,
                    self.node_value, self.node_weight):
            arr.setflags(write=False)

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def n_nodes(self):
        return self._feature.shape[0]

    @property
    def counts(self):
        """Bootstrap multiplicities, shape (B, n)."""
        return np.stack([t.bootstrap.counts for t in self.trees])

    def _check_X(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def apply(self, X):
        """Global node id of the leaf reached by each row in each tree, shape (m, B)."""
        X = self._check_X(X)
        return apply_packed(X, self._feature, self._threshold, self._left,
                            self._right, self.roots)


def bootstrap_sample(n, rng):
    """Draw ``n`` indices with replacement and tally multiplicities."""
    if n < 1:
        raise ValueError("n must be >= 1")
    draws = rng.integers(0, n, size=n)
    return BootstrapRecord(np.bincount(draws, minlength=n).astype(np.int64))


def fit_tree(dataset, bootstrap, config, rng):
    """Grow a CART tree on the bootstrap multiset of ``dataset``.

    ``config`` must already be resolved (see ``ForestConfig.resolve``).
    ``rng`` supplies the seed of the kernel's feature-sampling stream.
    """
    if not (bootstrap.counts > 0).any():
        raise ValueError("bootstrap has no in-bag samples")
    if dataset.task == "regression":
        y = dataset.response
        yc = np.zeros(dataset.n, dtype=np.int64)
        n_classes = 0
    else:
        y = np.zeros(dataset.n, dtype=np.float64)
        yc = dataset.response
        n_classes = dataset.n_classes
    seed = int(rng.integers(0, 2**63 - 1, dtype=np.int64))
    max_depth = -1 if config.max_depth is None else config.max_depth
    arrays = grow_tree(dataset.features, y, yc, n_classes,
                       bootstrap.counts.astype(np.float64),
                       config.max_features, float(config.min_samples_leaf),
                       max_depth, seed)
    return Tree(*arrays, bootstrap=bootstrap)


def tree_streams(seed, n_trees):
    """Independent per-tree generators spawned from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n_trees)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _grow_one(dataset, config, rng):
    boot = bootstrap_sample(dataset.n, rng)
    return fit_tree(dataset, boot, config, rng)


def train_forest(dataset, config=None):
    """Train ``config.n_trees`` trees; output is independent of ``thread_count``."""
    config = (config or ForestConfig()).resolve(dataset.p, dataset.task)
    streams = tree_streams(config.seed, config.n_trees)
    if config.thread_count == 1:
        trees = [_grow_one(dataset, config, rng) for rng in streams]
    else:
        trees = Parallel(n_jobs=config.thread_count, prefer="threads")(
            delayed(_grow_one)(dataset, config, rng) for rng in streams)
    forest = Forest(trees, config, dataset.task, dataset.n, dataset.p, dataset.n_classes)
    if forest.never_oob.size:
        warnings.warn(
            f"{forest.never_oob.size} training instances are in-bag in every tree "
            f"and have no OOB prediction; use more trees (>= 50 recommended)",
            stacklevel=2)
    return forest


def _tree_outputs(forest, X):
    """Leaf outputs per (row, tree): shape (m, B) or (m, B, C)."""
    leaves = forest.apply(X)
    vals = forest.node_value[leaves]
    return vals[..., 0] if forest.task == "regression" else vals


def predict_proba(forest, X):
    """Tree-averaged multiplicity-weighted class frequencies, shape (m, C)."""
    if forest.task != "classification":
        raise ValueError("predict_proba needs a classification forest")
    return _tree_outputs(forest, X).mean(axis=1)


def predict(forest, X):
    """Standard forest prediction over all trees.

    Accepts one feature vector or a matrix of them.
    """
    single = np.ndim(X) == 1
    if forest.task == "regression":
        out = _tree_outputs(forest, X).mean(axis=1)
    else:
        out = argmax_lowest(predict_proba(forest, X))
    return out[0] if single else out


def oob_predict(forest, dataset, return_proba=False):
    """OOB predictions and the defined-flag ``|S_i| >= 1``.

    Undefined entries are NaN for regression and -1 for classification.
    """
    if dataset.n != forest.n_train:
        raise ValueError("dataset size does not match the forest's training set")
    vals = _tree_outputs(forest, dataset.features)
    oob = (forest.counts == 0).T  # (n, B)
    n_oob = oob.sum(axis=1)
    defined = n_oob > 0
    denom = np.where(defined, n_oob, 1)
    if forest.task == "regression":
        pred = np.where(oob, vals, 0.0).sum(axis=1) / denom
        pred[~defined] = np.nan
        return pred, defined
    proba = np.where(oob[..., None], vals, 0.0).sum(axis=1) / denom[:, None]
    proba[~defined] = np.nan
    labels = np.where(defined, argmax_lowest(np.nan_to_num(proba)), -1)
    if return_proba:
        return labels, defined, proba
    return labels, defined


def save_forest(forest, path, extra=None):
    """Write a forest to a versioned ``.npz`` archive.

    ``extra`` is a JSON-serialisable dict stored alongside (for example a
    response transform).
    """
    meta = {
        "format_version": FORMAT_VERSION,
        "task": forest.task,
        "n_train": forest.n_train,
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "config": asdict(forest.config),
        "extra": extra or {},
    }
    sizes = np.array([t.n_nodes for t in forest.trees], dtype=np.int64)
    np.savez_compressed(
        path,
        meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
        sizes=sizes,
        feature=np.concatenate([t.feature for t in forest.trees]),
        threshold=np.concatenate([t.threshold for t in forest.trees]),
        left=np.concatenate([t.left for t in forest.trees]),
        right=np.concatenate([t.right for t in forest.trees]),
        value=forest.node_value,
        weight=forest.node_weight,
        counts=forest.counts,
    )


def load_forest(path):
    """Inverse of ``save_forest``; returns ``(forest, extra)``."""
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format {meta.get('format_version')}")
        bounds = np.concatenate([[0], np.cumsum(z["sizes"])])
        arrays = {k: z[k] for k in ("feature", "threshold", "left", "right", "value", "weight")}
        counts = z["counts"]
    trees = []
    for t in range(len(bounds) - 1):
        s = slice(bounds[t], bounds[t + 1])
        trees.append(Tree(*(arrays[k][s] for k in
                            ("feature", "threshold", "left", "right", "value", "weight")),
                          bootstrap=BootstrapRecord(counts[t])))
    config = ForestConfig(**meta["config"])
    forest = Forest(trees, config, meta["task"], meta["n_train"], meta["n_features"],
                    meta["n_classes"])
    return forest, meta["extra"]
