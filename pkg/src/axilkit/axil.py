"""AXIL weights: predictions as linear combinations of training targets.

For every supported model a scored instance ``s`` gets a weight vector
``k_s`` over the ``N`` training instances such that the model prediction is
``k_s @ y_train``. Weight vectors are stacked as the columns of an ``N x S``
matrix ``K``.

Gradient boosting weights are computed with a fit/transform pair:
:func:`axil_fit` builds one ``N x N`` prediction-weight matrix per tree from
the training leaf ids, and :func:`axil_transform` combines these with the
leaf ids of new data. :func:`oracle_weights` reaches the same matrix by
tracking residual coefficients through the boosting recurrence directly and
is kept as an independent check.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .trainer import (Dataset, ForestModel, GbmModel, leaf_assignments,
                      _as_matrix, _as_vector)

STATE_VERSION = 1


class UnmatchedLeafError(ValueError):
    """A scored instance landed in a leaf that holds no training instance."""

    def __init__(self, tree: int, instance: int):
        self.tree = tree
        self.instance = instance
        super().__init__(
            f"unmatched leaf: scored instance {instance} reaches a leaf of "
            f"tree {tree} that contains no training instance"
        )


@dataclass
class AxilMatrix:
    """``N x S`` weights; column ``j`` explains scored instance ``j``."""

    weights: np.ndarray
    train_labels: Optional[list] = None
    new_labels: Optional[list] = None

    @property
    def shape(self):
        return self.weights.shape

    def column_sums(self) -> np.ndarray:
        return self.weights.sum(axis=0)


@dataclass
class AxilState:
    """Per-tree prediction-weight matrices ``P_0 .. P_M`` and training leaves."""

    p_matrices: np.ndarray  # (M + 1, N, N)
    learning_rate: float
    train_leaves: list

    @property
    def n_train(self) -> int:
        return self.p_matrices.shape[1]

    @property
    def n_trees(self) -> int:
        return self.p_matrices.shape[0] - 1

    def ensemble_matrix(self) -> np.ndarray:
        """``G_M = P_0 + ... + P_M``; row ``j`` holds in-sample weights of ``j``."""
        G = self.p_matrices[0].copy()
        for P in self.p_matrices[1:]:
            G += P
        return G

    def nbytes(self) -> int:
        return self.p_matrices.nbytes


def lcm(r, s) -> np.ndarray:
    """Leaf coincidence matrix: ``L[i, j] = 1`` iff ``r[i] == s[j]``."""
    r = np.asarray(r).ravel()
    s = np.asarray(s).ravel()
    if r.size == 0 or s.size == 0:
        raise ValueError("leaf id vectors must be non-empty")
    return (r[:, None] == s[None, :]).astype(np.float64)


def _unit_columns(L, tree):
    sums = L.sum(axis=0)
    empty = np.flatnonzero(sums == 0)
    if empty.size:
        raise UnmatchedLeafError(tree, int(empty[0]))
    return L / sums


def _check_leaves(leaves, name):
    leaves = [np.asarray(v).ravel() for v in leaves]
    if not leaves:
        raise ValueError(f"{name} must hold at least one tree")
    n = leaves[0].size
    if n == 0 or any(v.size != n for v in leaves):
        raise ValueError(f"{name} vectors must be non-empty and of equal length")
    return leaves


def axil_fit(train_leaves, learning_rate: float) -> AxilState:
    """Prediction-weight matrices for a boosted ensemble.

    ``P_0`` is the uniform ``1/N`` matrix (the mean start). For tree ``i``,
    ``P_i = lr * W_i (I - G_{i-1})`` where ``W_i`` is the leaf coincidence
    matrix of the training leaves with unit column sums and ``G_{i-1}`` is
    the running sum of earlier ``P``.
    """
    lr = float(learning_rate)
    if not np.isfinite(lr) or not 0.0 < lr <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    leaves = _check_leaves(train_leaves, "train_leaves")
    n = leaves[0].size
    P = np.empty((len(leaves) + 1, n, n))
    P[0] = 1.0 / n
    G = P[0].copy()
    eye = np.eye(n)
    for i, v in enumerate(leaves, start=1):
        D = lcm(v, v)
        # the diagonal of an in-sample coincidence matrix is all ones
        assert np.all(D.sum(axis=0) > 0)
        W = D / D.sum(axis=0)
        P[i] = lr * (W @ (eye - G))
        G += P[i]
    return AxilState(p_matrices=P, learning_rate=lr,
                     train_leaves=[v.copy() for v in leaves])


def axil_transform(state: AxilState, new_leaves,
                   train_labels=None, new_labels=None) -> AxilMatrix:
    """AXIL weights for scored instances with the given per-tree leaf ids."""
    new = _check_leaves(new_leaves, "new_leaves")
    if len(new) != state.n_trees:
        raise ValueError(
            f"state has {state.n_trees} trees but new_leaves has {len(new)}"
        )
    n, s = state.n_train, new[0].size
    K = state.p_matrices[0].T @ np.full((n, s), 1.0 / n)
    for i, (v, w) in enumerate(zip(state.train_leaves, new), start=1):
        W = _unit_columns(lcm(v, w), tree=i)
        K += state.p_matrices[i].T @ W
    return AxilMatrix(K, train_labels=train_labels, new_labels=new_labels)


def gbm_weights(model: GbmModel, train_features, new_features=None,
                train_labels=None, new_labels=None) -> AxilMatrix:
    """Fit and transform in one call; scores the training data by default."""
    state = axil_fit(leaf_assignments(model, train_features),
                     model.learning_rate)
    scored = train_features if new_features is None else new_features
    if new_features is None and new_labels is None:
        new_labels = train_labels
    return axil_transform(state, leaf_assignments(model, scored),
                          train_labels=train_labels, new_labels=new_labels)


def axil_ols(X_train, X_new=None) -> AxilMatrix:
    """Weights of an ordinary least-squares fit.

    Column ``i`` is ``X_train (X_train^T X_train)^{-1} x_i``. No intercept is
    added; include a column of ones for one.
    """
    X = _as_matrix(X_train, "X_train")
    Z = X if X_new is None else _as_matrix(X_new, "X_new")
    if Z.shape[1] != X.shape[1]:
        raise ValueError("X_new must have the same columns as X_train")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError(
            "X_train is rank deficient; X^T X is singular"
        )
    coef = np.linalg.solve(X.T @ X, Z.T)
    return AxilMatrix(X @ coef)


def axil_tree(train_leaf, new_leaf, sample_weight=None) -> AxilMatrix:
    """Weights of a single regression tree.

    Training instance ``j`` gets ``1 / |leaf|`` for every scored instance in
    its leaf. ``sample_weight`` (e.g. bootstrap draw counts) replaces the
    uniform membership count.
    """
    v = np.asarray(train_leaf).ravel()
    L = lcm(v, new_leaf)
    if sample_weight is not None:
        c = _as_vector(sample_weight, "sample_weight")
        if c.size != v.size:
            raise ValueError("sample_weight must match the training leaf vector")
        L = L * c[:, None]
    return AxilMatrix(_unit_columns(L, tree=1))


def axil_forest(per_tree_train_leaves, per_tree_new_leaves,
                sample_counts=None) -> AxilMatrix:
    """Mean of the per-tree weight matrices of an averaging forest."""
    train = _check_leaves(per_tree_train_leaves, "per_tree_train_leaves")
    new = _check_leaves(per_tree_new_leaves, "per_tree_new_leaves")
    if len(train) != len(new):
        raise ValueError("train and new leaf lists cover different tree counts")
    if sample_counts is not None and len(sample_counts) != len(train):
        raise ValueError("one sample count vector is needed per tree")
    K = np.zeros((train[0].size, new[0].size))
    for m, (v, w) in enumerate(zip(train, new)):
        c = None if sample_counts is None else sample_counts[m]
        try:
            K += axil_tree(v, w, c).weights
        except UnmatchedLeafError as err:
            raise UnmatchedLeafError(m + 1, err.instance) from None
    return AxilMatrix(K / len(train))


def forest_weights(model: ForestModel, train_features,
                   new_features=None) -> AxilMatrix:
    scored = train_features if new_features is None else new_features
    return axil_forest(leaf_assignments(model, train_features),
                       leaf_assignments(model, scored),
                       sample_counts=model.sample_counts)


def oracle_weights(model: GbmModel, train_data: Dataset,
                   new_features=None, check_tol: float = 1e-8) -> AxilMatrix:
    """Weights by explicit coefficient bookkeeping over the boosting steps.

    ``pred[j]`` holds the coefficients (over ``y``) of the current in-sample
    prediction of training instance ``j``; its residual has coefficients
    ``e_j - pred[j]``. Each tree's leaf value is the mean of its members'
    residual coefficients. Only row means and row updates are used, no
    matrix products.

    Raises ``ValueError`` if the model's stored leaf values are not the
    leaf means implied by ``train_data`` (i.e. the model was trained on
    different data).
    """
    X = train_data.features
    y = train_data.target
    n = len(y)
    Z = X if new_features is None else _as_matrix(new_features)
    if X.shape[1] != model.n_features or Z.shape[1] != model.n_features:
        raise ValueError("feature columns do not match the model")
    pred = np.full((n, n), 1.0 / n)
    new_pred = np.full((Z.shape[0], n), 1.0 / n)
    if abs(pred[0] @ y - model.base_score) > check_tol * (1 + abs(model.base_score)):
        raise ValueError("model base score is not the training target mean")
    lr = model.learning_rate
    for m, tree in enumerate(model.trees, start=1):
        v = tree.apply(X)
        w = tree.apply(Z)
        leaf_coef = np.zeros((tree.n_leaves, n))
        matched = np.zeros(tree.n_leaves, dtype=bool)
        for leaf in np.unique(v):
            members = np.flatnonzero(v == leaf)
            resid = -pred[members]
            resid[np.arange(members.size), members] += 1.0
            leaf_coef[leaf] = resid.mean(axis=0)
            matched[leaf] = True
            value = leaf_coef[leaf] @ y
            if abs(value - tree.leaf_values[leaf]) > check_tol * (1 + abs(value)):
                raise ValueError(
                    f"tree {m} leaf {leaf} value does not match the training data"
                )
        missing = np.flatnonzero(~matched[w])
        if missing.size:
            raise UnmatchedLeafError(m, int(missing[0]))
        pred += lr * leaf_coef[v]
        new_pred += lr * leaf_coef[w]
    return AxilMatrix(new_pred.T.copy())


def reconstruct(K: Union[AxilMatrix, np.ndarray], y_train) -> np.ndarray:
    """Predictions implied by the weights: ``K^T y_train``."""
    W = K.weights if isinstance(K, AxilMatrix) else np.asarray(K, dtype=np.float64)
    y = _as_vector(y_train, "y_train")
    if W.shape[0] != y.size:
        raise ValueError(
            f"weights have {W.shape[0]} rows but y_train has {y.size} entries"
        )
    return W.T @ y


# -- persistence -------------------------------------------------------------

def save_state(state: AxilState, path, **extra) -> None:
    """Write the state as an ``.npz`` archive with a JSON header.

    ``extra`` entries are stored alongside: arrays as arrays, anything else
    JSON-encoded in the header.
    """
    header = {"version": STATE_VERSION,
              "shape": list(state.p_matrices.shape),
              "learning_rate": state.learning_rate}
    arrays = {"p_matrices": state.p_matrices,
              "train_leaves": np.stack(state.train_leaves)}
    meta = {}
    for key, value in extra.items():
        if isinstance(value, np.ndarray):
            arrays["extra_" + key] = value
        else:
            meta[key] = value
    header["extra"] = meta
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), np.uint8),
                 **arrays)


def load_state(path):
    """Inverse of :func:`save_state`; returns ``(state, extra)``."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("version") != STATE_VERSION:
            raise ValueError(f"unsupported state version {header.get('version')!r}")
        P = z["p_matrices"]
        if list(P.shape) != header["shape"]:
            raise ValueError("state matrix shape does not match its header")
        leaves = list(z["train_leaves"])
        extra = dict(header.get("extra", {}))
        for key in z.files:
            if key.startswith("extra_"):
                extra[key[len("extra_"):]] = z[key]
    return AxilState(P, float(header["learning_rate"]), leaves), extra


def write_weights_csv(K: AxilMatrix, fh) -> None:
    """Rows are training instances, columns scored instances."""
    import csv
    n, s = K.weights.shape
    train = K.train_labels or [str(i) for i in range(n)]
    new = K.new_labels or [str(j) for j in range(s)]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["label", *new])
    for label, row in zip(train, K.weights):
        writer.writerow([label, *(repr(float(x)) for x in row)])


def read_weights_csv(fh) -> AxilMatrix:
    import csv
    rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError("weights CSV needs a header and at least one row")
    header = rows[0]
    if len(header) < 2:
        raise ValueError("weights CSV needs at least one scored-instance column")
    train_labels, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"weights CSV line {lineno}: expected {len(header)} cells")
        train_labels.append(row[0])
        try:
            data.append([float(x) for x in row[1:]])
        except ValueError:
            raise ValueError(f"weights CSV line {lineno}: non-numeric weight") from None
    return AxilMatrix(np.array(data), train_labels=train_labels,
                      new_labels=header[1:])


def weights_to_csv_string(K: AxilMatrix) -> str:
    buf = io.StringIO()
    write_weights_csv(K, buf)
    return buf.getvalue()


__all__: Sequence[str] = [
    "AxilMatrix", "AxilState", "UnmatchedLeafError", "lcm", "axil_fit",
    "axil_transform", "gbm_weights", "axil_ols", "axil_tree", "axil_forest",
    "forest_weights", "oracle_weights", "reconstruct", "save_state",
    "load_state", "write_weights_csv", "read_weights_csv",
]
