"""RF-GAP proximities.

For a query ``i`` and training point ``j``::

    w_ij = 1/|S_i| * sum_{t in S_i} I(j in leaf_t(i)) * c_j(t) / |M_i(t)|

where ``S_i`` is the set of trees in which ``i`` is out-of-bag (every tree
for a test point), ``c_j(t)`` is the bootstrap multiplicity of ``j`` and
``|M_i(t)|`` the in-bag multiset size of ``i``'s leaf. Rows are queries,
columns are training instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .forest import argmax_lowest

__all__ = [
    "ProximityMatrix",
    "rf_gap_train",
    "rf_gap_test",
    "reconstruct_predictions",
    "write_triplets",
    "read_triplets",
]


@dataclass(frozen=True)
class ProximityMatrix:
    """Sparse row-stochastic weights.

    ``undefined_rows`` lists train-train rows whose instance was never OOB;
    those rows are stored empty and are not rows of zero similarity.
    """

    matrix: sparse.csr_matrix
    kind: str
    undefined_rows: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def defined_rows(self):
        mask = np.ones(self.shape[0], dtype=bool)
        mask[self.undefined_rows] = False
        return mask

    def row(self, i):
        """Dense copy of row ``i``."""
        return self.matrix.getrow(i).toarray().ravel()

    def row_sparse(self, i):
        """``(column indices, weights)`` of row ``i`` in ascending column order."""
        m = self.matrix
        s = slice(m.indptr[i], m.indptr[i + 1])
        return m.indices[s], m.data[s]

    def toarray(self):
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


def _leaf_members(forest, X):
    """Sparse (node x n) matrix holding c_j(t) / |M(leaf)| for in-bag j."""
    leaves = forest.apply(X)  # (n, B)
    counts = forest.counts.T  # (n, B)
    inbag = counts > 0
    rows = leaves[inbag]
    cols = np.nonzero(inbag)[0]
    c = counts[inbag].astype(np.float64)
    sizes = forest.node_weight[rows]
    return sparse.csr_matrix((c / sizes, (rows, cols)),
                             shape=(forest.n_nodes, forest.n_train)), leaves


def _assemble(query_leaves, query_mask, members, n_train):
    """Sum per-tree leaf weights over the trees flagged in ``query_mask``."""
    m = query_leaves.shape[0]
    rows = np.nonzero(query_mask)[0]
    cols = query_leaves[query_mask]
    incidence = sparse.csr_matrix((np.ones(rows.size), (rows, cols)),
                                  shape=(m, members.shape[0]))
    W = (incidence @ members).tocsr()
    n_trees = query_mask.sum(axis=1)
    scale = np.divide(1.0, n_trees, out=np.zeros(m), where=n_trees > 0)
    W = sparse.diags(scale) @ W
    W = sparse.csr_matrix(W)
    W.eliminate_zeros()
    W.sort_indices()
    return W, n_trees


def _check(forest, dataset):
    if dataset.n != forest.n_train or dataset.p != forest.n_features:
        raise ValueError("forest and dataset do not match")


def rf_gap_train(forest, dataset):
    """Train-train RF-GAP proximities built from OOB trees."""
    _check(forest, dataset)
    members, leaves = _leaf_members(forest, dataset.features)
    oob = (forest.counts == 0).T
    W, n_trees = _assemble(leaves, oob, members, forest.n_train)
    diag = W.diagonal()
    if np.any(diag != 0):
        raise AssertionError("RF-GAP diagonal must be zero")
    return ProximityMatrix(W, "train-train", np.flatnonzero(n_trees == 0))


def rf_gap_test(forest, dataset, test_features):
    """Test-train RF-GAP proximities; every tree contributes to every test row."""
    _check(forest, dataset)
    members, _ = _leaf_members(forest, dataset.features)
    leaves = forest.apply(test_features)
    mask = np.ones(leaves.shape, dtype=bool)
    W, _ = _assemble(leaves, mask, members, forest.n_train)
    return ProximityMatrix(W, "test-train", np.empty(0, dtype=np.int64))


def _as_matrix(W):
    return W.matrix if isinstance(W, ProximityMatrix) else sparse.csr_matrix(W)


def reconstruct_predictions(W, responses, task, n_classes=None):
    """Proximity-weighted sum (regression) or vote (classification).

    Rows listed as undefined come back as NaN / -1.
    """
    M = _as_matrix(W)
    responses = np.asarray(responses)
    if M.shape[1] != responses.shape[0]:
        raise ValueError("W column count must equal the number of responses")
    undefined = W.undefined_rows if isinstance(W, ProximityMatrix) else np.empty(0, int)
    if task == "regression":
        out = M @ responses.astype(np.float64)
        out[undefined] = np.nan
        return out
    labels = responses.astype(np.int64)
    C = int(labels.max()) + 1 if n_classes is None else n_classes
    onehot = sparse.csr_matrix((np.ones(labels.size), (np.arange(labels.size), labels)),
                               shape=(labels.size, C))
    mass = (M @ onehot).toarray()
    out = argmax_lowest(mass)
    out[undefined] = -1
    return out


def write_triplets(W, path):
    """Write ``row col weight`` lines, one per stored entry, with a header."""
    M = W.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# kind={W.kind} rows={M.shape[0]} cols={M.shape[1]} "
                 f"undefined={','.join(map(str, W.undefined_rows))}\n")
        for r, c, v in zip(M.row, M.col, M.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_triplets(path):
    with open(path) as fh:
        header = dict(kv.split("=", 1) for kv in fh.readline()[1:].split())
        data = np.loadtxt(fh, ndmin=2)
    shape = (int(header["rows"]), int(header["cols"]))
    undefined = np.array([int(s) for s in header["undefined"].split(",") if s], dtype=np.int64)
    if data.size:
        M = sparse.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                              shape=shape)
    else:
        M = sparse.csr_matrix(shape)
    M.sort_indices()
    return ProximityMatrix(M, header["kind"], undefined)
