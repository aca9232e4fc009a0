"""Trust scores for classification forests.

RF-ICE ECR weights each training point's OOB correctness by its proximity
to the query. RF-ICE Conformity compares the top-k proximity mass to one
class against the top-k mass to all other classes. Probability difference
and tree conformity are the forest-only comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import _tree_outputs, argmax_lowest, oob_predict, predict, predict_proba
from .proximity import ProximityMatrix

__all__ = [
    "CONFORMITY_EPS",
    "MisclassificationVector",
    "TrustScore",
    "TrustReport",
    "misclassification_vector",
    "ecr_scores",
    "conformity_ratio",
    "conformity_predict",
    "conformity_scores",
    "proba_diff",
    "tree_conformity",
]

CONFORMITY_EPS = 1e-12
METHODS = ("ecr", "conformity", "proba-diff", "tree-conformity")


@dataclass(frozen=True)
class MisclassificationVector:
    correct: np.ndarray  # 1 where the OOB vote equals the label
    defined: np.ndarray


@dataclass(frozen=True)
class TrustScore:
    instance: int
    method: str
    score: float
    predicted: int


@dataclass
class TrustReport:
    scores: np.ndarray
    predicted: np.ndarray
    method: str

    def __len__(self):
        return self.scores.shape[0]

    def __getitem__(self, i):
        return TrustScore(i, self.method, float(self.scores[i]), int(self.predicted[i]))

    @property
    def defined(self):
        return ~np.isnan(self.scores)

    def to_records(self, threshold=None):
        out = []
        for i in range(len(self)):
            rec = {"instance": i, "method": self.method, "score": float(self.scores[i]),
                   "predicted": int(self.predicted[i])}
            if threshold is not None:
                rec["classifiable"] = bool(self.scores[i] >= threshold)
            out.append(rec)
        return out


def misclassification_vector(forest, dataset):
    if forest.task != "classification":
        raise ValueError("needs a classification forest")
    labels, defined = oob_predict(forest, dataset)
    correct = np.where(defined, labels == dataset.response, False).astype(np.int64)
    return MisclassificationVector(correct, defined)


def ecr_scores(W, e, predicted=None):
    """Proximity-weighted OOB correctness ``W . e`` over defined neighbours.

    Rows whose neighbours are all undefined score NaN.
    """
    M = W.matrix if isinstance(W, ProximityMatrix) else W
    d = e.defined.astype(np.float64)
    mass = M @ d
    hits = M @ (e.correct * d)
    scores = np.full(M.shape[0], np.nan)
    ok = mass > 0
    scores[ok] = np.clip(hits[ok] / mass[ok], 0.0, 1.0)
    if predicted is None:
        predicted = np.full(M.shape[0], -1)
    return TrustReport(scores, np.asarray(predicted), "ecr")


def _topk_sum(values, k):
    if values.size <= k:
        return float(values.sum())
    return float(np.sort(values)[::-1][:k].sum())


def conformity_ratio(W_row, labels, k, c, eps=CONFORMITY_EPS):
    """Top-k proximity mass to class ``c`` over top-k mass to the other classes."""
    if k < 1:
        raise ValueError("k must be >= 1")
    w = np.asarray(W_row, dtype=np.float64).ravel()
    labels = np.asarray(labels)
    same = labels == c
    if not same.any():
        raise ValueError(f"class {c} does not occur in the training labels")
    return _topk_sum(w[same], k) / (_topk_sum(w[~same], k) + eps)


def conformity_predict(W_row, labels, k, n_classes=None, eps=CONFORMITY_EPS):
    """Class with the highest conformity ratio and that ratio."""
    labels = np.asarray(labels)
    C = int(labels.max()) + 1 if n_classes is None else n_classes
    if C < 2:
        raise ValueError("conformity needs at least two classes")
    present = [c for c in range(C) if np.any(labels == c)]
    ratios = np.full(C, -np.inf)
    for c in present:
        ratios[c] = conformity_ratio(W_row, labels, k, c, eps)
    best = int(argmax_lowest(ratios))
    return best, float(ratios[best])


def conformity_scores(W, labels, k=10, n_classes=None, eps=CONFORMITY_EPS):
    """Conformity prediction and score for every row of ``W``."""
    M = W.matrix if isinstance(W, ProximityMatrix) else W
    m = M.shape[0]
    scores = np.empty(m)
    predicted = np.empty(m, dtype=np.int64)
    for i in range(m):
        row = M.getrow(i).toarray().ravel()
        predicted[i], scores[i] = conformity_predict(row, labels, k, n_classes, eps)
    if isinstance(W, ProximityMatrix) and W.undefined_rows.size:
        scores[W.undefined_rows] = np.nan
        predicted[W.undefined_rows] = -1
    return TrustReport(scores, predicted, "conformity")


def proba_diff(forest, X):
    """Top-1 minus top-2 of the tree-averaged class probabilities."""
    proba = predict_proba(forest, np.atleast_2d(X))
    top = np.sort(proba, axis=1)
    scores = top[:, -1] - top[:, -2] if proba.shape[1] > 1 else top[:, -1]
    return TrustReport(scores, argmax_lowest(proba), "proba-diff")


def tree_conformity(forest, X):
    """Fraction of trees whose own vote equals the forest prediction."""
    X = np.atleast_2d(X)
    per_tree = argmax_lowest(_tree_outputs(forest, X))  # (m, B)
    pred = predict(forest, X)
    scores = (per_tree == pred[:, None]).mean(axis=1)
    return TrustReport(scores, pred, "tree-conformity")
