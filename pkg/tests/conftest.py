import warnings

import numpy as np
import pytest

from forestuq import Dataset, ForestConfig, train_forest
from forestuq.datasets import make_heteroscedastic, make_overlapping_gaussians


@pytest.fixture(scope="session")
def reg_data():
    X, y, _ = make_heteroscedastic(30, seed=11)
    return Dataset(X, y, "regression")


@pytest.fixture(scope="session")
def reg_forest(reg_data):
    return train_forest(reg_data, ForestConfig(n_trees=100, seed=3))


@pytest.fixture(scope="session")
def cls_data():
    X, y = make_overlapping_gaussians(30, seed=5)
    return Dataset(X, y, "classification")


@pytest.fixture(scope="session")
def cls_forest(cls_data):
    return train_forest(cls_data, ForestConfig(n_trees=100, seed=8))


@pytest.fixture(scope="session")
def tiny():
    rng = np.random.default_rng(42)
    X = rng.uniform(size=(8, 2))
    y = X[:, 0] + 0.5 * rng.standard_normal(8)
    ds = Dataset(X, y, "regression")
    with warnings.catch_warnings():
        # five trees can leave a point in-bag everywhere; that case is wanted here
        warnings.simplefilter("ignore")
        forest = train_forest(ds, ForestConfig(n_trees=5, seed=7, min_samples_leaf=1))
    return ds, forest


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[2][:-1])):
            terminalreporter.write_line(line)
