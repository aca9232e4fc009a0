# %% [markdown]
# # RF-GAP proximities
#
# A forest's OOB prediction for a training point is a weighted sum of the
# other training responses. The weights are RF-GAP proximities. This demo
# builds them on a small problem and checks the claim directly.

# %%
import numpy as np

from forestuq import Dataset, ForestConfig, oob_predict, train_forest
from forestuq import reconstruct_predictions, rf_gap_test, rf_gap_train
from forestuq.datasets import make_heteroscedastic

X, y, _ = make_heteroscedastic(300, seed=0)
train = Dataset(X[:200], y[:200], "regression")
forest = train_forest(train, ForestConfig(n_trees=200, seed=0))

# %%
W = rf_gap_train(forest, train)
print("shape", W.shape, "nonzeros per row", W.matrix.nnz / W.shape[0])
print("diagonal all zero:", np.all(W.matrix.diagonal() == 0))
print("row sums:", np.unique(np.round(np.asarray(W.matrix.sum(axis=1)).ravel(), 12)))

# %% [markdown]
# Rows are probability vectors, so `W @ y` is a weighted average. It
# matches the OOB predictions to rounding error.

# %%
oob, defined = oob_predict(forest, train)
recon = reconstruct_predictions(W, train.response, "regression")
print("max |W y - oob|:", np.abs(recon[defined] - oob[defined]).max())

# %% [markdown]
# The nearest neighbours of a point, by proximity:

# %%
i = 0
row = W.row(i)
top = np.argsort(row)[::-1][:5]
for j in top:
    print(f"  j={j:3d}  w={row[j]:.4f}  x={np.round(train.features[j], 2)}")
print("query x:", np.round(train.features[i], 2))

# %% [markdown]
# Unseen points use every tree rather than only the OOB ones.

# %%
Wt = rf_gap_test(forest, train, X[200:])
print("test rows:", Wt.shape, "sum to 1:", np.allclose(Wt.matrix.sum(axis=1), 1))
