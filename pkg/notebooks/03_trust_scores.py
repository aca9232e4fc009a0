# %% [markdown]
# # Trust scores for classification
#
# Two Gaussian classes overlap around `x0 = 0`. A good trust score should be
# low there and high far from the boundary. Rejecting low-trust points
# first should raise the accuracy on what remains.

# %%
import numpy as np

from forestuq import Dataset, ForestConfig, accuracy_rejection_curve, ar_auc, predict
from forestuq import conformity_scores, ecr_scores, misclassification_vector
from forestuq import proba_diff, rf_gap_test, train_forest, tree_conformity
from forestuq.datasets import gaussian_overlap_mask, make_overlapping_gaussians

X, y = make_overlapping_gaussians(1500, seed=3)
train = Dataset(X[:1000], y[:1000], "classification")
Xt, yt = X[1000:], y[1000:]
forest = train_forest(train, ForestConfig(n_trees=300, seed=3))
W = rf_gap_test(forest, train, Xt)
pred = predict(forest, Xt)

# %%
reports = {
    "ecr": ecr_scores(W, misclassification_vector(forest, train), pred),
    "conformity": conformity_scores(W, train.response, k=10, n_classes=2),
    "proba-diff": proba_diff(forest, Xt),
    "tree-conformity": tree_conformity(forest, Xt),
}
overlap = gaussian_overlap_mask(Xt)
print(f"accuracy {np.mean(pred == yt):.3f}; {overlap.sum()} of {len(yt)} test points in overlap")
for name, rep in reports.items():
    correct = (rep.predicted == yt).astype(float)
    auc = ar_auc(accuracy_rejection_curve(rep.scores, correct))
    # medians: conformity ratios explode where other-class mass is zero
    print(f"{name:16s} AR-AUC={auc:.3f}  median score overlap="
          f"{np.median(rep.scores[overlap]):.3g}  outside={np.median(rep.scores[~overlap]):.3g}")

# %% [markdown]
# Conformity can also serve as a classifier in its own right: its argmax
# class agrees with the forest on most points.

# %%
print("conformity vs forest agreement:", np.mean(reports["conformity"].predicted == pred))

# %% [markdown]
# Accuracy as the least trusted points are set aside:

# %%
curve = accuracy_rejection_curve(reports["ecr"].scores, (pred == yt).astype(float))
for r in (0.0, 0.1, 0.2, 0.4, 0.6):
    i = np.searchsorted(curve.rejection, r)
    print(f"reject {curve.rejection[i]:.2f} -> accuracy {curve.accuracy[i]:.3f}")
