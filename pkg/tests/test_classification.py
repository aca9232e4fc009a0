import numpy as np
import pytest
from scipy import sparse

from forestuq import ForestConfig, oob_predict, predict, train_forest
from forestuq.classification import (
    CONFORMITY_EPS,
    MisclassificationVector,
    conformity_predict,
    conformity_ratio,
    conformity_scores,
    ecr_scores,
    misclassification_vector,
    proba_diff,
    tree_conformity,
)
from forestuq.forest import BootstrapRecord, Forest, Tree, predict_proba
from forestuq.proximity import rf_gap_test

import _oracles as orc


def stump_forest(leaf_values, n_train=4):
    """Forest of single-leaf trees with the given class frequencies."""
    trees = []
    for v in leaf_values:
        trees.append(Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                          np.array([v], dtype=float), np.array([float(n_train)]),
                          BootstrapRecord(np.ones(n_train, dtype=np.int64))))
    return Forest(trees, ForestConfig(n_trees=len(trees)), "classification", n_train, 1,
                  len(leaf_values[0]))


# misclassification vector

def test_vector_is_binary_and_matches_oob(cls_data, cls_forest):
    e = misclassification_vector(cls_forest, cls_data)
    labels, defined = oob_predict(cls_forest, cls_data)
    assert set(np.unique(e.correct[e.defined])) <= {0, 1}
    for j in range(cls_data.n):
        if defined[j]:
            assert e.correct[j] == int(labels[j] == cls_data.response[j])
        else:
            assert not e.defined[j]


def test_vector_needs_classifier(reg_data, reg_forest):
    with pytest.raises(ValueError):
        misclassification_vector(reg_forest, reg_data)


# ECR

W5 = sparse.csr_matrix(np.array([
    [0.0, 0.5, 0.5, 0.0, 0.0],
    [0.2, 0.0, 0.3, 0.5, 0.0],
    [0.0, 0.0, 0.0, 0.6, 0.4],
    [0.25, 0.25, 0.25, 0.0, 0.25],
    [1.0, 0.0, 0.0, 0.0, 0.0],
]))


def test_ecr_all_ones_and_zeros():
    d = np.ones(5, bool)
    ones = ecr_scores(W5, MisclassificationVector(np.ones(5, int), d))
    zeros = ecr_scores(W5, MisclassificationVector(np.zeros(5, int), d))
    np.testing.assert_allclose(ones.scores, 1.0)
    np.testing.assert_allclose(zeros.scores, 0.0)


def test_ecr_matches_matrix_vector():
    e = np.array([1, 0, 1, 1, 0])
    got = ecr_scores(W5, MisclassificationVector(e, np.ones(5, bool))).scores
    dense = W5.toarray()
    oracle = [sum(dense[i, j] * e[j] for j in range(5)) for i in range(5)]
    np.testing.assert_allclose(got, oracle, atol=1e-15)


def test_ecr_renormalises_and_flags_undefined():
    e = MisclassificationVector(np.array([1, 0, 1, 1, 0]),
                                np.array([False, True, True, True, True]))
    got = ecr_scores(W5, e).scores
    assert got[1] == pytest.approx((0.3 + 0.5) / 0.8)
    assert got[3] == pytest.approx(0.25 / 0.75)
    assert np.isnan(got[4])


def test_ecr_bounded(cls_data, cls_forest):
    W = rf_gap_test(cls_forest, cls_data, cls_data.features + 0.1)
    rep = ecr_scores(W, misclassification_vector(cls_forest, cls_data))
    s = rep.scores[rep.defined]
    assert np.all((s >= 0) & (s <= 1))


# conformity

def test_ratio_epsilon_floor():
    r = conformity_ratio(np.array([0.6, 0.4, 0.0]), np.array([1, 1, 0]), 2, 1)
    assert r == pytest.approx(1.0 / CONFORMITY_EPS)
    assert np.isfinite(r)


def test_ratio_symmetric_is_one():
    r = conformity_ratio(np.array([0.3, 0.2, 0.3, 0.2]), np.array([0, 0, 1, 1]), 2, 0)
    assert r == pytest.approx(1.0, rel=1e-9)


def test_ratio_partial_sort_oracle():
    w = np.array([0.05, 0.3, 0.1, 0.2, 0.15, 0.2])
    lab = np.array([0, 0, 1, 0, 1, 1])
    same = sorted(w[lab == 0], reverse=True)[:2]
    other = sorted(w[lab != 0], reverse=True)[:2]
    expect = sum(same) / (sum(other) + CONFORMITY_EPS)
    assert conformity_ratio(w, lab, 2, 0) == pytest.approx(expect, rel=1e-14)


def test_ratio_absent_class():
    with pytest.raises(ValueError):
        conformity_ratio(np.ones(3) / 3, np.array([0, 0, 1]), 2, 2)


def test_predict_dominant_class():
    c, s = conformity_predict(np.array([0.05, 0.9, 0.05]), np.array([0, 1, 0]), 2)
    assert c == 1 and s > 5


def test_predict_exact_tie_goes_to_zero():
    c, _ = conformity_predict(np.array([0.25, 0.25, 0.25, 0.25]), np.array([0, 1, 0, 1]), 2)
    assert c == 0


def test_predict_three_class_oracle():
    w = np.array([0.1, 0.05, 0.2, 0.15, 0.3, 0.1, 0.1])
    lab = np.array([0, 1, 2, 0, 1, 2, 1])
    ratios = []
    for c in range(3):
        same = sorted(w[lab == c], reverse=True)[:2]
        other = sorted(w[lab != c], reverse=True)[:2]
        ratios.append(sum(same) / (sum(other) + CONFORMITY_EPS))
    c, s = conformity_predict(w, lab, 2, 3)
    assert c == orc.first_max(ratios)
    assert s == pytest.approx(max(ratios))


def test_argmax_scale_invariant():
    rng = np.random.default_rng(1)
    lab = rng.integers(0, 3, size=20)
    for _ in range(20):
        w = rng.dirichlet(np.ones(20))
        c1, _ = conformity_predict(w, lab, 4, 3, eps=0.0)
        c2, _ = conformity_predict(w * 37.5, lab, 4, 3, eps=0.0)
        assert c1 == c2


def test_conformity_scores_rows(cls_data, cls_forest):
    Xq = cls_data.features[:6] + 0.05
    W = rf_gap_test(cls_forest, cls_data, Xq)
    rep = conformity_scores(W, cls_data.response, k=5, n_classes=2)
    for i in range(6):
        c, s = conformity_predict(W.row(i), cls_data.response, 5, 2)
        assert rep.predicted[i] == c and rep.scores[i] == s


# forest-only scores

def test_proba_diff_unanimous_and_uniform():
    assert proba_diff(stump_forest([[1, 0], [1, 0]]), [[0.0]]).scores[0] == 1.0
    assert proba_diff(stump_forest([[0.5, 0.5], [0.5, 0.5]]), [[0.0]]).scores[0] == 0.0


def test_proba_diff_oracle(cls_data, cls_forest):
    Xq = np.random.default_rng(2).standard_normal((8, 2))
    rep = proba_diff(cls_forest, Xq)
    for i, x in enumerate(Xq):
        p = np.mean([orc.leaf_class_freq(t, cls_data.features, cls_data.response,
                                         orc.walk(t, x), 2) for t in cls_forest.trees], axis=0)
        assert rep.scores[i] == pytest.approx(abs(p[0] - p[1]), abs=1e-12)


def test_tree_conformity_unanimous_and_split():
    assert tree_conformity(stump_forest([[0, 1], [0, 1]]), [[0.0]]).scores[0] == 1.0
    rep = tree_conformity(stump_forest([[0.8, 0.2], [0.3, 0.7]]), [[0.0]])
    assert rep.scores[0] == 0.5
    assert rep.predicted[0] == 0


def test_tree_conformity_oracle(cls_data, cls_forest):
    Xq = np.random.default_rng(3).standard_normal((8, 2))
    rep = tree_conformity(cls_forest, Xq)
    pred = predict(cls_forest, Xq)
    for i, x in enumerate(Xq):
        votes = [orc.first_max(orc.leaf_class_freq(t, cls_data.features, cls_data.response,
                                                   orc.walk(t, x), 2))
                 for t in cls_forest.trees]
        assert rep.scores[i] == pytest.approx(np.mean(np.array(votes) == pred[i]))


def test_forest_scores_deterministic(cls_data):
    a = train_forest(cls_data, ForestConfig(n_trees=20, seed=4))
    b = train_forest(cls_data, ForestConfig(n_trees=20, seed=4))
    X = cls_data.features
    np.testing.assert_array_equal(proba_diff(a, X).scores, proba_diff(b, X).scores)
    np.testing.assert_array_equal(tree_conformity(a, X).scores, tree_conformity(b, X).scores)
    np.testing.assert_array_equal(predict_proba(a, X), predict_proba(b, X))


def test_report_records_threshold():
    rep = proba_diff(stump_forest([[1, 0], [0.5, 0.5]]), [[0.0], [1.0]])
    recs = rep.to_records(threshold=0.6)
    assert recs[0]["classifiable"] is False
    assert recs[0]["score"] == pytest.approx(0.5)
