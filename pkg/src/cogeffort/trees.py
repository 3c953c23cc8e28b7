"""Classical tree baselines: a random forest and gradient-boosted trees, plus
the latent-versus-raw feature comparison run after network training.

Both ensembles use exact greedy threshold splits (midpoints between distinct
sorted values, first-best tie-break), so predictions are invariant under
strictly monotone per-feature transforms.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .util import DOMAIN_FOREST, substream

MIN_GAIN = 1e-12
NEWTON_GUARD = 1e-12


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (payload)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    payload: object = None  # class counts (forest) or leaf score (boosting)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def route(self, x) -> "TreeNode":
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def to_dict(self) -> dict:
        if self.is_leaf:
            payload = self.payload
            if isinstance(payload, np.ndarray):
                payload = payload.tolist()
            return {"leaf": payload}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "leaf" in d:
            payload = d["leaf"]
            if isinstance(payload, list):
                payload = np.asarray(payload, dtype=np.float64)
            return cls(payload=payload)
        return cls(feature=int(d["feature"]), threshold=float(d["threshold"]),
                   left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]))


def best_gini_split(X, y, feature_ids):
    """Exhaustive threshold search maximizing Gini gain.

    Returns (gain, feature, threshold) or None when no split helps. Features
    are scanned in the given order, thresholds at midpoints between distinct
    sorted values; the first best candidate wins (strict comparisons plus
    first-argmax), which makes growth deterministic.
    """
    n = y.shape[0]
    n1 = float((y == 1).sum())
    n0 = n - n1
    parent = 1.0 - ((n0 / n) ** 2 + (n1 / n) ** 2)
    best = None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        valid = xs[:-1] != xs[1:]
        if not valid.any():
            continue
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        c1 = np.cumsum(ys == 1)[:-1].astype(np.float64)
        c0 = nl - c1
        gini_l = 1.0 - ((c0 / nl) ** 2 + (c1 / nl) ** 2)
        gini_r = 1.0 - (((n0 - c0) / nr) ** 2 + ((n1 - c1) / nr) ** 2)
        gain = parent - (nl / n) * gini_l - (nr / n) * gini_r
        gain[~valid] = -np.inf
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            best = (float(gain[i]), int(f), float((xs[i] + xs[i + 1]) / 2.0))
    if best is None or best[0] <= MIN_GAIN:
        return None
    return best


def best_variance_split(X, r, feature_ids):
    """Exhaustive threshold search maximizing squared-error reduction."""
    n = r.shape[0]
    total_sum = float(r.sum())
    total_sq = float((r * r).sum())
    parent_sse = total_sq - total_sum * total_sum / n
    best = None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs, rs = X[order, f], r[order]
        valid = xs[:-1] != xs[1:]
        if not valid.any():
            continue
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        left_sum = np.cumsum(rs)[:-1]
        left_sq = np.cumsum(rs * rs)[:-1]
        sse = (left_sq - left_sum ** 2 / nl
               + (total_sq - left_sq) - (total_sum - left_sum) ** 2 / nr)
        gain = parent_sse - sse
        gain[~valid] = -np.inf
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            best = (float(gain[i]), int(f), float((xs[i] + xs[i + 1]) / 2.0))
    if best is None or best[0] <= MIN_GAIN:
        return None
    return best


def _grow_classification(X, y, depth, max_depth, n_sub_features, rng):
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
    if depth >= max_depth or counts.min() == 0 or y.shape[0] < 2:
        return TreeNode(payload=counts)
    features = np.sort(rng.choice(X.shape[1], size=n_sub_features, replace=False))
    split = best_gini_split(X, y, features)
    if split is None:
        return TreeNode(payload=counts)
    _, f, thr = split
    mask = X[:, f] <= thr
    return TreeNode(feature=f, threshold=thr,
                    left=_grow_classification(X[mask], y[mask], depth + 1,
                                              max_depth, n_sub_features, rng),
                    right=_grow_classification(X[~mask], y[~mask], depth + 1,
                                               max_depth, n_sub_features, rng))


def _grow_regression(X, r, h, depth, max_depth, shrink_guard=NEWTON_GUARD):
    if depth >= max_depth or r.shape[0] < 2:
        return TreeNode(payload=_newton_value(r, h))
    split = best_variance_split(X, r, range(X.shape[1]))
    if split is None:
        return TreeNode(payload=_newton_value(r, h))
    _, f, thr = split
    mask = X[:, f] <= thr
    return TreeNode(feature=f, threshold=thr,
                    left=_grow_regression(X[mask], r[mask], h[mask], depth + 1, max_depth),
                    right=_grow_regression(X[~mask], r[~mask], h[~mask], depth + 1, max_depth))


def _newton_value(r, h) -> float:
    return float(r.sum() / max(h.sum(), NEWTON_GUARD))


@dataclass
class ForestModel:
    trees: list[TreeNode]
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i, x in enumerate(X):
            votes = np.zeros(2)
            for tree in self.trees:
                counts = tree.route(x).payload
                # leaf majority, class 0 on ties
                votes[0 if counts[0] >= counts[1] else 1] += 1
            out[i] = 0 if votes[0] >= votes[1] else 1
        return out

    def to_dict(self) -> dict:
        return {"kind": "random_forest", "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(trees=[TreeNode.from_dict(t) for t in d["trees"]],
                   n_features=int(d["n_features"]))


@dataclass
class GbtModel:
    trees: list[TreeNode] = field(default_factory=list)
    base_score: float = 0.0  # prior log-odds
    shrinkage: float = 0.1
    n_features: int = 0

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base_score)
        for i, x in enumerate(X):
            for tree in self.trees:
                out[i] += self.shrinkage * tree.route(x).payload
        return out

    def predict_proba(self, X) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision(X)))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kind": "gradient_boosted_trees", "base_score": self.base_score,
                "shrinkage": self.shrinkage, "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls(trees=[TreeNode.from_dict(t) for t in d["trees"]],
                   base_score=float(d["base_score"]), shrinkage=float(d["shrinkage"]),
                   n_features=int(d["n_features"]))


def _check_xy(features, labels):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training data must be a non-empty (N, D) matrix")
    if y.shape != (X.shape[0],) or set(np.unique(y)) - {0, 1}:
        raise DataError("labels must be a matching vector of 0/1")
    return X, y.astype(np.int64)


def train_random_forest(features, labels, n_trees: int = 100, max_depth: int = 6,
                        seed: int = 0) -> ForestModel:
    """Bootstrap-bagged Gini trees, sqrt(D) feature subsampling per split."""
    if n_trees < 1:
        raise ConfigError("n_trees must be >= 1")
    X, y = _check_xy(features, labels)
    n, d = X.shape
    n_sub = max(1, int(np.sqrt(d)))
    trees = []
    for t in range(n_trees):
        rng = substream(seed, DOMAIN_FOREST, t)
        boot = rng.integers(0, n, n)
        trees.append(_grow_classification(X[boot], y[boot], 0, max_depth, n_sub, rng))
    return ForestModel(trees=trees, n_features=d)


def train_gbt(features, labels, n_rounds: int = 100, max_depth: int = 3,
              shrinkage: float = 0.1, seed: int = 0) -> GbtModel:
    """Logistic-loss boosting: each round fits a squared-error tree to the
    residual y - p and sets leaf values by one Newton step."""
    if n_rounds < 0:
        raise ConfigError("n_rounds must be >= 0")
    X, y = _check_xy(features, labels)
    p1 = float(np.clip(y.mean(), 1e-12, 1.0 - 1e-12))
    gbt = GbtModel(base_score=float(np.log(p1 / (1.0 - p1))), shrinkage=shrinkage,
                   n_features=X.shape[1])
    decision = np.full(X.shape[0], gbt.base_score)
    yf = y.astype(np.float64)
    for _ in range(n_rounds):
        p = 1.0 / (1.0 + np.exp(-decision))
        residual = yf - p
        hessian = p * (1.0 - p)
        tree = _grow_regression(X, residual, hessian, 0, max_depth)
        gbt.trees.append(tree)
        for i, x in enumerate(X):
            decision[i] += shrinkage * tree.route(x).payload
    return gbt


@dataclass(frozen=True)
class LatentComparison:
    """Accuracy of boosted trees on raw features vs network latents."""

    raw_accuracy: float
    latent_accuracy: float
    delta: float
    architecture: str

    def to_dict(self) -> dict:
        return {"raw_accuracy": self.raw_accuracy,
                "latent_accuracy": self.latent_accuracy,
                "delta": self.delta, "architecture": self.architecture}


def evaluate_latent_features(trained, train_features, train_labels,
                             test_features, test_labels, *, n_rounds: int = 100,
                             max_depth: int = 3, shrinkage: float = 0.1,
                             seed: int = 0) -> LatentComparison:
    """Boosted trees on raw feature rows versus on the network's latents.

    ``trained`` is a TrainedModel; latents are its dropout-input features in
    inference mode. Both classifiers are evaluated on the (untouched) test
    rows.
    """
    from .net import extract_latent
    from .prep import reshape_for_model

    width = np.asarray(train_features).shape[1]
    raw_model = train_gbt(train_features, train_labels, n_rounds=n_rounds,
                          max_depth=max_depth, shrinkage=shrinkage, seed=seed)
    train_lat = extract_latent(trained, reshape_for_model(train_features, width))
    test_lat = extract_latent(trained, reshape_for_model(test_features, width))
    lat_model = train_gbt(train_lat, train_labels, n_rounds=n_rounds,
                          max_depth=max_depth, shrinkage=shrinkage, seed=seed)
    y_test = np.asarray(test_labels)
    raw_acc = float((raw_model.predict(test_features) == y_test).mean())
    lat_acc = float((lat_model.predict(test_lat) == y_test).mean())
    return LatentComparison(raw_accuracy=raw_acc, latent_accuracy=lat_acc,
                            delta=lat_acc - raw_acc,
                            architecture=trained.config.architecture)
