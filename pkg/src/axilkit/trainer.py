"""Least-squares regression trees, gradient boosting and random forests.

The models here are deliberately plain: every leaf value is the arithmetic
mean of the (residual) targets routed to it during training. That is the
property the instance-weight computations in :mod:`axilkit.axil` depend on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

FORMAT_VERSION = 1


def _as_matrix(features, name="features"):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _as_vector(values, name="target"):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, target vector and optional instance labels."""

    features: np.ndarray
    target: np.ndarray
    labels: Optional[tuple] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = _as_matrix(self.features)
        y = _as_vector(self.target)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset needs at least one row and one feature")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"features have {X.shape[0]} rows but target has {y.shape[0]}"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != X.shape[0]:
                raise ValueError(
                    f"got {len(labels)} labels for {X.shape[0]} instances"
                )
            object.__setattr__(self, "labels", labels)
        if self.feature_names is not None:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != X.shape[1]:
                raise ValueError("feature_names length does not match columns")
            object.__setattr__(self, "feature_names", names)

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def instance_labels(self) -> list[str]:
        """Labels if present, otherwise the row indices as strings."""
        if self.labels is not None:
            return list(self.labels)
        return [str(i) for i in range(self.n_instances)]


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_leaf_size: int = 1
    seed: Optional[int] = None

    def __post_init__(self):
        if int(self.num_trees) != self.num_trees or self.num_trees < 1:
            raise ValueError("num_trees must be an integer >= 1")
        lr = float(self.learning_rate)
        if not np.isfinite(lr) or not 0.0 < lr <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if int(self.max_leaves) != self.max_leaves or self.max_leaves < 1:
            raise ValueError("max_leaves must be an integer >= 1")
        if int(self.min_leaf_size) != self.min_leaf_size or self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be an integer >= 1")


class RegressionTree:
    """Binary axis-aligned regression tree.

    Internal nodes are stored in parallel arrays. A child reference ``c``
    is an internal node index when ``c >= 0`` and the leaf ``~c`` otherwise.
    Rows with ``x[feature] <= threshold`` go left.
    """

    def __init__(self, split_feature, threshold, left, right, leaf_values,
                 n_features):
        self.split_feature = np.asarray(split_feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.leaf_values = np.asarray(leaf_values, dtype=np.float64)
        self.n_features = int(n_features)
        self._check()

    def _check(self):
        n_nodes = len(self.split_feature)
        n_leaves = len(self.leaf_values)
        if n_leaves != n_nodes + 1:
            raise ValueError("a binary tree has exactly one more leaf than splits")
        for arr in (self.threshold, self.left, self.right):
            if len(arr) != n_nodes:
                raise ValueError("node arrays have inconsistent lengths")
        if n_nodes and (self.split_feature.min() < 0
                        or self.split_feature.max() >= self.n_features):
            raise ValueError("split feature index out of range")
        seen_nodes, seen_leaves = set(), set()
        for child in np.concatenate([self.left, self.right]):
            if child >= 0:
                if child >= n_nodes or child == 0 or child in seen_nodes:
                    raise ValueError("malformed internal node reference")
                seen_nodes.add(int(child))
            else:
                leaf = ~int(child)
                if leaf >= n_leaves or leaf in seen_leaves:
                    raise ValueError("malformed leaf reference")
                seen_leaves.add(leaf)
        if n_nodes and len(seen_leaves) != n_leaves:
            raise ValueError("every leaf must be referenced exactly once")

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_values)

    def apply(self, features) -> np.ndarray:
        """Leaf id reached by every row of ``features``."""
        X = _as_matrix(features)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} feature columns, got {X.shape[1]}"
            )
        if len(self.split_feature) == 0:
            return np.zeros(X.shape[0], dtype=np.int64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.ones(X.shape[0], dtype=bool)
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.split_feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = node[rows] >= 0
        return ~node

    def predict(self, features) -> np.ndarray:
        return self.leaf_values[self.apply(features)]

    def to_dict(self) -> dict:
        nodes = [
            {"split_feature": int(f), "threshold": float(t),
             "left": int(lc), "right": int(rc)}
            for f, t, lc, rc in zip(self.split_feature, self.threshold,
                                    self.left, self.right)
        ]
        leaves = [{"leaf_id": i, "value": float(v)}
                  for i, v in enumerate(self.leaf_values)]
        return {"n_features": self.n_features, "nodes": nodes, "leaves": leaves}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        nodes = d["nodes"]
        leaves = sorted(d["leaves"], key=lambda leaf: leaf["leaf_id"])
        if [leaf["leaf_id"] for leaf in leaves] != list(range(len(leaves))):
            raise ValueError("leaf ids must be dense 0..L-1")
        return cls(
            split_feature=[n["split_feature"] for n in nodes],
            threshold=[n["threshold"] for n in nodes],
            left=[n["left"] for n in nodes],
            right=[n["right"] for n in nodes],
            leaf_values=[leaf["value"] for leaf in leaves],
            n_features=d["n_features"],
        )

    def __eq__(self, other):
        if not isinstance(other, RegressionTree):
            return NotImplemented
        return (self.n_features == other.n_features
                and np.array_equal(self.split_feature, other.split_feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.leaf_values, other.leaf_values))

    def __repr__(self):
        return f"RegressionTree(n_leaves={self.n_leaves}, n_features={self.n_features})"


def _best_split(X, r, rows, min_leaf):
    """Best (gain, feature, threshold) for the rows of one leaf, or None.

    Ties are resolved towards the lowest feature index and then the lowest
    threshold, because candidates are scanned in that order and only a
    strictly larger gain replaces the incumbent.
    """
    n = len(rows)
    if n < 2 * min_leaf:
        return None
    res = r[rows]
    if np.all(res == res[0]):
        return None
    res = res - res.mean()
    total = res.sum()
    parent_term = total * total / n
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    admissible = (n_left >= min_leaf) & (n_right >= min_leaf)
    best = None
    for f in range(X.shape[1]):
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        distinct = xs[:-1] < xs[1:]
        ok = admissible & distinct
        if not ok.any():
            continue
        left_sum = np.cumsum(res[order])[:-1]
        right_sum = total - left_sum
        gain = left_sum ** 2 / n_left + right_sum ** 2 / n_right - parent_term
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] <= 0.0:
            continue
        if best is None or gain[k] > best[0]:
            lo, hi = xs[k], xs[k + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (float(gain[k]), f, float(thr))
    return best


def fit_tree(features, residuals, config: TrainConfig) -> RegressionTree:
    """Grow a least-squares regression tree leaf-wise (best-first).

    The leaf with the largest reduction in squared error is split next, until
    ``config.max_leaves`` leaves exist or no leaf admits a split with positive
    gain and both children holding at least ``config.min_leaf_size`` rows.
    Thresholds are midpoints between adjacent distinct feature values. When
    a leaf is split the left child keeps its leaf id and the right child gets
    the next free id, so ids stay dense.
    """
    X = _as_matrix(features)
    r = _as_vector(residuals, "residuals")
    if X.shape[0] != r.shape[0]:
        raise ValueError(
            f"features have {X.shape[0]} rows but residuals have {r.shape[0]}"
        )
    if X.shape[0] < 1:
        raise ValueError("cannot fit a tree on zero rows")

    min_leaf = config.min_leaf_size
    leaf_rows = [np.arange(X.shape[0])]
    # where each leaf is referenced from: (node index, is_left) or None for root
    leaf_parent: list = [None]
    candidates = [_best_split(X, r, leaf_rows[0], min_leaf)]
    split_feature, threshold, left, right = [], [], [], []

    while len(leaf_rows) < config.max_leaves:
        best_leaf, best = None, None
        for leaf, cand in enumerate(candidates):
            if cand is not None and (best is None or cand[0] > best[0]):
                best_leaf, best = leaf, cand
        if best is None:
            break
        _, f, thr = best
        rows = leaf_rows[best_leaf]
        mask = X[rows, f] <= thr
        new_leaf = len(leaf_rows)
        node = len(split_feature)
        split_feature.append(f)
        threshold.append(thr)
        left.append(~best_leaf)
        right.append(~new_leaf)
        parent = leaf_parent[best_leaf]
        if parent is not None:
            p_node, is_left = parent
            (left if is_left else right)[p_node] = node
        leaf_parent[best_leaf] = (node, True)
        leaf_parent.append((node, False))
        leaf_rows[best_leaf] = rows[mask]
        leaf_rows.append(rows[~mask])
        candidates[best_leaf] = _best_split(X, r, leaf_rows[best_leaf], min_leaf)
        candidates.append(_best_split(X, r, leaf_rows[new_leaf], min_leaf))

    values = [float(np.mean(r[rows])) for rows in leaf_rows]
    return RegressionTree(split_feature, threshold, left, right, values,
                          n_features=X.shape[1])


@dataclass
class GbmModel:
    """Least-squares gradient boosting ensemble.

    ``prediction(x) = base_score + learning_rate * sum(tree(x))``.
    """

    base_score: float
    learning_rate: float
    trees: list
    n_features: int
    metadata: dict = field(default_factory=dict)

    def predict(self, features) -> np.ndarray:
        X = _as_matrix(features)
        _check_columns(X, self.n_features)
        pred = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            pred = pred + self.learning_rate * tree.predict(X)
        return pred


@dataclass
class ForestModel:
    """Averaging ensemble of independently grown trees.

    ``sample_counts[m][j]`` is how often training row ``j`` was drawn for
    tree ``m``; it is ``None`` when trees were fitted on the full data.
    """

    trees: list
    n_features: int
    sample_counts: Optional[list] = None
    metadata: dict = field(default_factory=dict)

    def predict(self, features) -> np.ndarray:
        X = _as_matrix(features)
        _check_columns(X, self.n_features)
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)


Model = Union[GbmModel, ForestModel, RegressionTree]


def _check_columns(X, n_features):
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} feature columns, got {X.shape[1]}")


def train_gbm(data: Dataset, config: TrainConfig) -> GbmModel:
    """Boost ``config.num_trees`` trees, each fit to the current residuals.

    Boosting starts from the training target mean.
    """
    X, y = data.features, data.target
    base = float(np.mean(y))
    lr = float(config.learning_rate)
    pred = np.full(len(y), base)
    trees = []
    for _ in range(config.num_trees):
        tree = fit_tree(X, y - pred, config)
        pred = pred + lr * tree.predict(X)
        trees.append(tree)
    return GbmModel(base_score=base, learning_rate=lr, trees=trees,
                    n_features=X.shape[1])


def train_forest(data: Dataset, config: TrainConfig) -> ForestModel:
    """Fit ``config.num_trees`` trees on the raw targets.

    With ``config.seed`` set every tree sees a bootstrap sample (rows drawn
    with replacement); without it every tree sees the full data.
    """
    X, y = data.features, data.target
    n = len(y)
    trees, counts = [], []
    rng = np.random.default_rng(config.seed) if config.seed is not None else None
    for _ in range(config.num_trees):
        if rng is None:
            trees.append(fit_tree(X, y, config))
            continue
        idx = np.sort(rng.integers(0, n, size=n))
        trees.append(fit_tree(X[idx], y[idx], config))
        counts.append(np.bincount(idx, minlength=n))
    return ForestModel(trees=trees, n_features=X.shape[1],
                       sample_counts=counts if rng is not None else None)


def predict(model: Model, features) -> np.ndarray:
    return model.predict(features)


def leaf_assignments(model: Model, features) -> list:
    """Per-tree leaf ids for every row of ``features``."""
    X = _as_matrix(features)
    if isinstance(model, RegressionTree):
        return [model.apply(X)]
    _check_columns(X, model.n_features)
    return [tree.apply(X) for tree in model.trees]


# -- persistence -------------------------------------------------------------

def model_to_dict(model: Model) -> dict:
    if isinstance(model, GbmModel):
        d = {"version": FORMAT_VERSION, "kind": "gbm",
             "base_score": float(model.base_score),
             "learning_rate": float(model.learning_rate),
             "n_features": model.n_features,
             "trees": [t.to_dict() for t in model.trees]}
    elif isinstance(model, ForestModel):
        d = {"version": FORMAT_VERSION, "kind": "forest",
             "n_features": model.n_features,
             "trees": [t.to_dict() for t in model.trees]}
        if model.sample_counts is not None:
            d["sample_counts"] = [c.tolist() for c in model.sample_counts]
    elif isinstance(model, RegressionTree):
        d = {"version": FORMAT_VERSION, "kind": "tree", **model.to_dict()}
        return d
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    if model.metadata:
        d["metadata"] = model.metadata
    return d


def model_from_dict(d: dict) -> Model:
    version = d.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    kind = d.get("kind", "gbm")
    if kind == "tree":
        return RegressionTree.from_dict(d)
    trees = [RegressionTree.from_dict(t) for t in d["trees"]]
    n_features = int(d["n_features"])
    if any(t.n_features != n_features for t in trees):
        raise ValueError("tree feature counts disagree with the model")
    if kind == "gbm":
        return GbmModel(base_score=float(d["base_score"]),
                        learning_rate=float(d["learning_rate"]),
                        trees=trees, n_features=n_features,
                        metadata=d.get("metadata", {}))
    if kind == "forest":
        counts = d.get("sample_counts")
        if counts is not None:
            counts = [np.asarray(c, dtype=np.int64) for c in counts]
        return ForestModel(trees=trees, n_features=n_features,
                           sample_counts=counts,
                           metadata=d.get("metadata", {}))
    raise ValueError(f"unknown model kind {kind!r}")


def dumps_model(model: Model) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(model_to_dict(model), allow_nan=False)


def loads_model(text: str) -> Model:
    return model_from_dict(json.loads(text))


def save_model(model: Model, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path: Union[str, Path]) -> Model:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def models_equal(a: Model, b: Model) -> bool:
    """Structural, bit-exact comparison of two models."""
    return model_to_dict(a) == model_to_dict(b)


__all__: Sequence[str] = [
    "Dataset", "TrainConfig", "RegressionTree", "GbmModel", "ForestModel",
    "fit_tree", "train_gbm", "train_forest", "predict", "leaf_assignments",
    "model_to_dict", "model_from_dict", "dumps_model", "loads_model",
    "save_model", "load_model", "models_equal",
]
