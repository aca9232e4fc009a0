import warnings

import numpy as np
import pytest

from forestuq import Dataset, ForestConfig, load_forest, oob_predict, predict, save_forest
from forestuq import train_forest
from forestuq.forest import (
    BootstrapRecord,
    argmax_lowest,
    bootstrap_sample,
    fit_tree,
    predict_proba,
)

import _oracles as orc


def quiet_train(ds, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return train_forest(ds, cfg)


# bootstrap

def test_bootstrap_single_point():
    rec = bootstrap_sample(1, np.random.default_rng(0))
    assert rec.counts.tolist() == [1]
    assert rec.oob.size == 0


def test_bootstrap_counts_sum_to_n():
    rec = bootstrap_sample(4, np.random.default_rng(123))
    assert rec.counts.sum() == 4
    assert set(rec.in_bag) | set(rec.oob) == {0, 1, 2, 3}


def test_oob_fraction_monte_carlo():
    n = 1000
    frac = [bootstrap_sample(n, np.random.default_rng(s)).oob.size / n for s in range(500)]
    assert abs(np.mean(frac) - (1 - 1 / n) ** n) < 0.01


def test_bootstrap_rejects_empty():
    with pytest.raises(ValueError):
        bootstrap_sample(0, np.random.default_rng(0))


# single trees

def _resolved(ds, **kw):
    return ForestConfig(**kw).resolve(ds.p, ds.task)


def test_constant_response_is_one_leaf():
    X = np.random.default_rng(1).uniform(size=(15, 3))
    ds = Dataset(X, np.full(15, 2.5), "regression")
    tree = fit_tree(ds, BootstrapRecord(np.ones(15, dtype=np.int64)), _resolved(ds),
                    np.random.default_rng(0))
    assert tree.n_nodes == 1
    assert tree.value[0, 0] == 2.5


def test_two_points_one_split():
    ds = Dataset(np.array([[0.0], [1.0]]), np.array([3.0, 7.0]), "regression")
    tree = fit_tree(ds, BootstrapRecord(np.array([1, 1])),
                    _resolved(ds, min_samples_leaf=1), np.random.default_rng(0))
    assert tree.n_nodes == 3
    assert tree.threshold[0] == 0.5
    assert sorted(tree.value[tree.leaves, 0]) == [3.0, 7.0]


def test_constant_features_make_a_leaf():
    ds = Dataset(np.ones((6, 2)), np.arange(6.0), "regression")
    tree = fit_tree(ds, BootstrapRecord(np.ones(6, dtype=np.int64)),
                    _resolved(ds, min_samples_leaf=1), np.random.default_rng(0))
    assert tree.n_nodes == 1


def test_split_reduces_weighted_impurity():
    x = np.linspace(0, 1, 20)
    ds = Dataset(x[:, None], x.copy(), "regression")
    counts = bootstrap_sample(20, np.random.default_rng(4)).counts
    tree = fit_tree(ds, BootstrapRecord(counts), _resolved(ds, min_samples_leaf=2),
                    np.random.default_rng(1))
    w = counts.astype(float)
    root_mean = np.sum(w * x) / w.sum()
    root_var = np.sum(w * (x - root_mean) ** 2) / w.sum()
    fitted = np.array([orc.leaf_mean(tree, ds.features, x, orc.walk(tree, xi))
                       for xi in ds.features])
    mse = np.sum(w * (x - fitted) ** 2) / w.sum()
    assert mse <= root_var
    assert tree.n_nodes > 1


def test_leaf_values_are_multiplicity_weighted(reg_data, reg_forest):
    t = reg_forest.trees[0]
    for leaf in t.leaves[:5]:
        assert t.value[leaf, 0] == pytest.approx(
            orc.leaf_mean(t, reg_data.features, reg_data.response, leaf), abs=1e-12)


def test_min_samples_leaf_counts_multiplicity(reg_data):
    cfg = ForestConfig(n_trees=3, seed=0, min_samples_leaf=4)
    for t in quiet_train(reg_data, cfg).trees:
        assert t.weight[t.leaves].min() >= 4


def test_max_depth_limits_tree(reg_data):
    forest = quiet_train(reg_data, ForestConfig(n_trees=3, seed=0, max_depth=1))
    assert all(t.n_nodes <= 3 for t in forest.trees)


# forests

def test_one_tree_forest(reg_data):
    forest = quiet_train(reg_data, ForestConfig(n_trees=1, seed=0))
    assert forest.n_trees == 1


def test_thread_count_does_not_change_trees(reg_data):
    a = train_forest(reg_data, ForestConfig(n_trees=40, seed=9, thread_count=1))
    b = train_forest(reg_data, ForestConfig(n_trees=40, seed=9, thread_count=8))
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.bootstrap.counts, tb.bootstrap.counts)
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
        np.testing.assert_array_equal(ta.value, tb.value)


def test_different_seeds_differ(reg_data):
    a = train_forest(reg_data, ForestConfig(n_trees=20, seed=1))
    b = train_forest(reg_data, ForestConfig(n_trees=20, seed=2))
    assert not np.array_equal(a.counts, b.counts)


def test_never_oob_rows_warn():
    X = np.random.default_rng(0).uniform(size=(4, 1))
    ds = Dataset(X, X[:, 0], "regression")
    with pytest.warns(UserWarning, match="no OOB prediction"):
        forest = train_forest(ds, ForestConfig(n_trees=1, seed=0))
    pred, defined = oob_predict(forest, ds)
    assert np.array_equal(np.flatnonzero(~defined), forest.never_oob)
    assert np.isnan(pred[~defined]).all()


def test_config_defaults_follow_task():
    assert ForestConfig().resolve(10, "regression").max_features == 4
    assert ForestConfig().resolve(10, "regression").min_samples_leaf == 5
    assert ForestConfig().resolve(10, "classification").max_features == 4
    assert ForestConfig().resolve(10, "classification").min_samples_leaf == 1


@pytest.mark.parametrize("kw", [{"n_trees": 0}, {"max_features": 0},
                                {"min_samples_leaf": 0}, {"thread_count": 0}])
def test_config_rejects_bad_values(reg_data, kw):
    with pytest.raises(ValueError):
        train_forest(reg_data, ForestConfig(**kw))


def test_argmax_lowest_breaks_ties_low():
    assert argmax_lowest(np.array([0.3, 0.3 + 1e-14, 0.1])) == 0
    assert argmax_lowest(np.array([0.2, 0.5, 0.5])) == 1


# predictions

def test_constant_response_predictions():
    X = np.random.default_rng(2).uniform(size=(25, 2))
    ds = Dataset(X, np.full(25, -1.5), "regression")
    forest = train_forest(ds, ForestConfig(n_trees=50, seed=0))
    pred, defined = oob_predict(forest, ds)
    assert np.all(pred[defined] == -1.5)
    assert np.all(predict(forest, X) == -1.5)


def test_oob_predict_matches_traversal(reg_data, reg_forest):
    pred, defined = oob_predict(reg_forest, reg_data)
    oracle = orc.oob_regression(reg_forest, reg_data.features, reg_data.response)
    assert np.array_equal(defined, ~np.isnan(oracle))
    np.testing.assert_allclose(pred[defined], oracle[defined], rtol=0, atol=1e-12)


def test_predict_matches_traversal(reg_data, reg_forest):
    Xq = np.random.default_rng(0).uniform(size=(10, reg_data.p))
    oracle = orc.predict_regression(reg_forest, reg_data.features, reg_data.response, Xq)
    np.testing.assert_allclose(predict(reg_forest, Xq), oracle, rtol=0, atol=1e-12)


def test_predict_single_vector(reg_data, reg_forest):
    x = reg_data.features[3]
    assert predict(reg_forest, x) == predict(reg_forest, x[None, :])[0]


def test_pure_leaf_returns_own_response():
    X = np.arange(6.0)[:, None]
    y = np.array([4.0, -1.0, 2.5, 9.0, 0.0, 3.0])
    ds = Dataset(X, y, "regression")
    forest = quiet_train(ds, ForestConfig(n_trees=1, seed=0, min_samples_leaf=1))
    counts = forest.trees[0].bootstrap.counts
    for i in np.flatnonzero(counts == 1):
        leaf = orc.walk(forest.trees[0], X[i])
        if forest.trees[0].weight[leaf] == 1:
            assert predict(forest, X[i]) == y[i]


def test_classification_oob_votes(cls_data, cls_forest):
    labels, defined, proba = oob_predict(cls_forest, cls_data, return_proba=True)
    C = cls_data.n_classes
    for i in np.flatnonzero(defined):
        freq = [orc.leaf_class_freq(t, cls_data.features, cls_data.response,
                                    orc.walk(t, cls_data.features[i]), C)
                for t in cls_forest.trees if t.bootstrap.counts[i] == 0]
        avg = np.mean(freq, axis=0)
        np.testing.assert_allclose(proba[i], avg, atol=1e-12)
        assert labels[i] == orc.first_max(avg)


def test_predict_proba_rows_sum_to_one(cls_data, cls_forest):
    p = predict_proba(cls_forest, cls_data.features)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_save_load_round_trip(tmp_path, reg_data, reg_forest):
    path = tmp_path / "m.npz"
    save_forest(reg_forest, path, {"note": "x"})
    loaded, extra = load_forest(path)
    assert extra["note"] == "x"
    np.testing.assert_array_equal(loaded.counts, reg_forest.counts)
    np.testing.assert_array_equal(predict(loaded, reg_data.features),
                                  predict(reg_forest, reg_data.features))
    assert loaded.config == reg_forest.config


def test_feature_count_checked(reg_forest):
    with pytest.raises(ValueError, match="features"):
        predict(reg_forest, np.zeros((2, 7)))


@pytest.mark.parametrize("bad", [np.zeros((1, 2)), np.zeros(4)])
def test_dataset_validation(bad):
    with pytest.raises(ValueError):
        Dataset(bad, np.zeros(len(bad)), "regression")
