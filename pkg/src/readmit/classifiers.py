"""Native implementations of the six-classifier suite.

All kinds share the train / predict_proba / importances surface and are
deterministic given their seed. Linear kinds and the MLP standardize
features internally using training statistics; tree kinds consume raw
values. Hinge-loss models map margins through the logistic function for
probabilities, which is enough for ranking-based metrics.
"""

import base64
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import neural
from .errors import ConfigError, DataError, SchemaMismatchError
from .seeding import rng_for

KINDS = (
    "sgd_linear",
    "logistic_regression",
    "linear_svc",
    "decision_tree",
    "random_forest",
    "mlp",
)

_TREE_KINDS = ("decision_tree", "random_forest")
_LINEAR_KINDS = ("sgd_linear", "logistic_regression", "linear_svc")

DEFAULT_HYPERPARAMETERS = {
    "sgd_linear": {"epochs": 25, "batch_size": 32, "learning_rate": 0.05, "alpha": 1e-4},
    "logistic_regression": {"c": 1.0, "iterations": 300, "learning_rate": 0.5},
    "linear_svc": {"c": 1.0, "iterations": 500},
    "decision_tree": {"max_depth": 10, "min_samples_leaf": 1, "max_features": None},
    "random_forest": {"n_trees": 100, "max_depth": None, "min_samples_leaf": 1,
                      "max_features": "sqrt", "bootstrap": True},
    "mlp": {"hidden_sizes": (32, 16), "dropout_rate": 0.0, "learning_rate": 0.05,
            "batch_size": 32, "epochs": 100, "patience": 20},
}

IMPORTANCE_METHODS = ("impurity", "coef_magnitude", "permutation")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyper: dict = field(default_factory=dict)
    seed: int = 0

    def resolved(self) -> dict:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        merged = dict(DEFAULT_HYPERPARAMETERS[self.kind])
        unknown = set(self.hyper) - set(merged)
        if unknown:
            raise ConfigError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        merged.update(self.hyper)
        return merged


class _Standardizer:
    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = mean
        self.scale = scale

    @classmethod
    def fit(cls, X: np.ndarray) -> "_Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ------------------------------------------------------------------ trees

class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value: float):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value  # positive-class fraction at this node


class _Tree:
    def __init__(self, root: _TreeNode, importances: np.ndarray):
        self.root = root
        self.importances = importances

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        nodes = [self.root] * X.shape[0]
        active = np.arange(X.shape[0])
        while len(active):
            still = []
            for i in active:
                node = nodes[i]
                if node.left is None:
                    out[i] = node.value
                else:
                    nodes[i] = node.left if X[i, node.feature] < node.threshold else node.right
                    still.append(i)
            active = np.array(still, dtype=int)
        return out


def _gini(pos: np.ndarray, n: np.ndarray) -> np.ndarray:
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(X: np.ndarray, y: np.ndarray, feat_idx: np.ndarray, min_leaf: int):
    """Best Gini split over the candidate features; None if no valid split."""
    n = X.shape[0]
    sub = X[:, feat_idx]
    order = np.argsort(sub, axis=0, kind="stable")
    Xs = np.take_along_axis(sub, order, axis=0)
    ys = y[order]

    cum_pos = np.cumsum(ys, axis=0)
    total_pos = cum_pos[-1]
    left_n = np.arange(1, n, dtype=float)[:, None]
    right_n = n - left_n
    left_pos = cum_pos[:-1]
    right_pos = total_pos - left_pos

    p_all = y.sum() / n
    parent_gini = 2.0 * p_all * (1.0 - p_all)

    weighted = (left_n * _gini(left_pos, left_n) + right_n * _gini(right_pos, right_n)) / n
    decrease = parent_gini - weighted
    valid = (Xs[1:] > Xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
    decrease[~valid] = -np.inf
    flat = int(np.argmax(decrease))
    pos_i, col = np.unravel_index(flat, decrease.shape)
    if decrease[pos_i, col] <= 0.0 or not np.isfinite(decrease[pos_i, col]):
        return None
    threshold = 0.5 * (Xs[pos_i, col] + Xs[pos_i + 1, col])
    return int(feat_idx[col]), float(threshold), float(decrease[pos_i, col])


def _grow_tree(X: np.ndarray, y: np.ndarray, rng: Optional[np.random.Generator],
               max_depth: Optional[int], min_leaf: int,
               max_features: Optional[int], n_total_features: int) -> _Tree:
    importances = np.zeros(n_total_features)
    n_root = X.shape[0]

    def build(idx: np.ndarray, depth: int) -> _TreeNode:
        yn = y[idx]
        node = _TreeNode(value=float(yn.mean()))
        n = len(idx)
        if (max_depth is not None and depth >= max_depth) or n < 2 * min_leaf:
            return node
        if yn.min() == yn.max():
            return node
        if max_features is None:
            feat_idx = np.arange(n_total_features)
        else:
            feat_idx = rng.permutation(n_total_features)[:max_features]
        split = _best_split(X[idx], yn, feat_idx, min_leaf)
        if split is None:
            return node
        feature, threshold, decrease = split
        importances[feature] += decrease * n / n_root
        mask = X[idx, feature] < threshold
        node.feature = feature
        node.threshold = threshold
        node.left = build(idx[mask], depth + 1)
        node.right = build(idx[~mask], depth + 1)
        return node

    root = build(np.arange(X.shape[0]), 0)
    return _Tree(root, importances)


def _resolve_max_features(setting, n_features: int) -> Optional[int]:
    if setting is None:
        return None
    if setting == "sqrt":
        return max(1, int(np.sqrt(n_features)))
    k = int(setting)
    if not 1 <= k <= n_features:
        raise ConfigError(f"max_features {setting!r} outside [1, {n_features}]")
    return None if k == n_features else k


# ------------------------------------------------------------ linear fits

def _fit_logistic(X: np.ndarray, y: np.ndarray, hyper: dict):
    n, d = X.shape
    lam = 1.0 / (hyper["c"] * n)
    w = np.zeros(d)
    b = 0.0
    lr = hyper["learning_rate"]
    for _ in range(hyper["iterations"]):
        p = _sigmoid(X @ w + b)
        grad_w = X.T @ (p - y) / n + lam * w
        grad_b = float((p - y).mean())
        w -= lr * grad_w
        b -= lr * grad_b
    return w, b


def _fit_svc(X: np.ndarray, y: np.ndarray, hyper: dict):
    n, d = X.shape
    lam = 1.0 / (hyper["c"] * n)
    w = np.zeros(d)
    b = 0.0
    sign = 2.0 * y - 1.0
    for t in range(1, hyper["iterations"] + 1):
        lr = 1.0 / (lam * t + 10.0)
        margins = sign * (X @ w + b)
        active = margins < 1.0
        grad_w = lam * w - (sign[active, None] * X[active]).sum(axis=0) / n
        grad_b = -float(sign[active].sum()) / n
        w -= lr * grad_w
        b -= lr * grad_b
    return w, b


def _fit_sgd_hinge(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int):
    n, d = X.shape
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    sign = 2.0 * y - 1.0
    alpha = hyper["alpha"]
    lr0 = hyper["learning_rate"]
    step = 0
    for _ in range(hyper["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, hyper["batch_size"]):
            idx = order[start:start + hyper["batch_size"]]
            lr = lr0 / (1.0 + 0.01 * step)
            margins = sign[idx] * (X[idx] @ w + b)
            active = margins < 1.0
            grad_w = alpha * w - (sign[idx][active, None] * X[idx][active]).sum(axis=0) / len(idx)
            grad_b = -float(sign[idx][active].sum()) / len(idx)
            w -= lr * grad_w
            b -= lr * grad_b
            step += 1
    return w, b


# -------------------------------------------------------------- the suite

@dataclass
class TrainedClassifier:
    """Immutable after training; predict_proba returns P(positive)."""

    spec: ModelSpec
    n_features: int
    schema_fingerprint: Optional[str] = None
    standardizer: Optional[_Standardizer] = None
    weights: Optional[np.ndarray] = None
    bias: float = 0.0
    trees: Optional[list[_Tree]] = None
    mlp: Optional[neural.MLPModel] = None
    majority: Optional[float] = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"row width {X.shape[1] if X.ndim == 2 else '?'} != trained width {self.n_features}")
        kind = self.spec.kind
        if kind in _LINEAR_KINDS:
            Z = self.standardizer.transform(X)
            return _sigmoid(Z @ self.weights + self.bias)
        if kind == "decision_tree":
            return self.trees[0].predict_proba(X)
        if kind == "random_forest":
            return np.mean([t.predict_proba(X) for t in self.trees], axis=0)
        Z = self.standardizer.transform(X)
        return neural.predict(self.mlp, Z)[:, 1]

    def predict(self, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(float)


def train(spec: ModelSpec, X, y=None) -> TrainedClassifier:
    """Fit one classifier; X may be a FeatureMatrix (labels implied)."""
    fingerprint = None
    if y is None:
        fingerprint = X.schema.fingerprint()
        X, y = X.X, X.y
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite entries; impute first")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("training labels contain a single class")
    if not set(classes.tolist()) <= {0.0, 1.0}:
        raise DataError(f"labels must be binary 0/1, got {classes.tolist()}")

    hyper = spec.resolved()
    clf = TrainedClassifier(spec=spec, n_features=X.shape[1], schema_fingerprint=fingerprint)
    kind = spec.kind

    if kind in _LINEAR_KINDS:
        clf.standardizer = _Standardizer.fit(X)
        Z = clf.standardizer.transform(X)
        if kind == "logistic_regression":
            clf.weights, clf.bias = _fit_logistic(Z, y, hyper)
        elif kind == "linear_svc":
            clf.weights, clf.bias = _fit_svc(Z, y, hyper)
        else:
            clf.weights, clf.bias = _fit_sgd_hinge(Z, y, hyper, spec.seed)
    elif kind == "decision_tree":
        max_feats = _resolve_max_features(hyper["max_features"], X.shape[1])
        rng = rng_for(spec.seed, "tree", 0) if max_feats is not None else None
        clf.trees = [_grow_tree(X, y, rng, hyper["max_depth"], hyper["min_samples_leaf"],
                                max_feats, X.shape[1])]
    elif kind == "random_forest":
        max_feats = _resolve_max_features(hyper["max_features"], X.shape[1])
        trees = []
        for t in range(hyper["n_trees"]):
            rng = rng_for(spec.seed, "tree", t)
            if hyper["bootstrap"]:
                idx = rng.integers(0, X.shape[0], X.shape[0])
                Xt, yt = X[idx], y[idx]
                if yt.min() == yt.max():  # degenerate bootstrap: keep original
                    Xt, yt = X, y
            else:
                Xt, yt = X, y
            trees.append(_grow_tree(Xt, yt, rng, hyper["max_depth"],
                                    hyper["min_samples_leaf"], max_feats, X.shape[1]))
        clf.trees = trees
    else:  # mlp
        clf.standardizer = _Standardizer.fit(X)
        Z = clf.standardizer.transform(X)
        mlp_spec = neural.MLPSpec(
            input_dim=X.shape[1], hidden_sizes=tuple(hyper["hidden_sizes"]),
            activation="relu", dropout_rate=hyper["dropout_rate"],
            output_kind="softmax", n_outputs=2)
        Y = np.stack([1.0 - y, y], axis=1)
        cfg = neural.TrainConfig(
            learning_rate=hyper["learning_rate"], batch_size=hyper["batch_size"],
            epochs=hyper["epochs"], seed=spec.seed, patience=hyper["patience"])
        clf.mlp = neural.train_mlp(mlp_spec, Z, Y, cfg)
    clf.majority = float(np.round(y.mean()))
    return clf


def predict_proba(clf: TrainedClassifier, X) -> np.ndarray:
    """P(positive) per row; X may be a FeatureMatrix, checked by fingerprint."""
    if hasattr(X, "schema"):
        if (clf.schema_fingerprint is not None
                and X.schema.fingerprint() != clf.schema_fingerprint):
            raise SchemaMismatchError(
                "feature matrix schema does not match the one this model was trained on")
        X = X.X
    return clf.predict_proba(X)


def default_importance_method(kind: str) -> str:
    if kind in _TREE_KINDS:
        return "impurity"
    if kind in _LINEAR_KINDS:
        return "coef_magnitude"
    return "permutation"


def _normalize(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    return v / total if total > 0 else v


def _f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = float(np.sum((y_pred == 1) & (y_true == 1)))
    fp = float(np.sum((y_pred == 1) & (y_true == 0)))
    fn = float(np.sum((y_pred == 0) & (y_true == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def importances(clf: TrainedClassifier, X, y=None, method: Optional[str] = None,
                n_permutations: int = 3, seed: int = 0) -> np.ndarray:
    """Per-column nonnegative importances summing to 1 (or all zero).

    impurity: mean decrease in Gini (tree kinds only). coef_magnitude:
    |weight| on standardized inputs (linear kinds only). permutation: mean
    F1 drop over shuffled copies of each column, negatives clamped to 0.
    """
    if y is None and hasattr(X, "schema"):
        X, y = X.X, X.y
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    method = method or default_importance_method(clf.spec.kind)
    if method not in IMPORTANCE_METHODS:
        raise ConfigError(f"unknown importance method {method!r}")

    if method == "impurity":
        if clf.spec.kind not in _TREE_KINDS:
            raise ConfigError(f"impurity importance unsupported for kind {clf.spec.kind!r}")
        per_tree = [_normalize(t.importances.copy()) for t in clf.trees]
        return _normalize(np.mean(per_tree, axis=0))
    if method == "coef_magnitude":
        if clf.spec.kind not in _LINEAR_KINDS:
            raise ConfigError(f"coef_magnitude importance unsupported for kind {clf.spec.kind!r}")
        return _normalize(np.abs(clf.weights))

    base = _f1(y, clf.predict(X))
    drops = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j].copy()
        for r in range(n_permutations):
            rng = rng_for(seed, "perm", j, r)
            Xp = X.copy()
            Xp[:, j] = col[rng.permutation(len(col))]
            drops[j] += base - _f1(y, clf.predict(Xp))
    drops = np.maximum(drops / n_permutations, 0.0)
    return _normalize(drops)


# ------------------------------------------------------------ persistence

_FORMAT = "readmit-classifier"
_VERSION = 1


def _enc(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype=np.float64).tobytes()).decode("ascii")


def _dec(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype=np.float64).copy()


def _tree_to_obj(tree: _Tree) -> dict:
    feats, thrs, lefts, rights, values = [], [], [], [], []

    def walk(node: _TreeNode) -> int:
        i = len(feats)
        feats.append(node.feature)
        thrs.append(node.threshold)
        values.append(node.value)
        lefts.append(-1)
        rights.append(-1)
        if node.left is not None:
            lefts[i] = walk(node.left)
            rights[i] = walk(node.right)
        return i

    walk(tree.root)
    return {"feature": feats, "threshold": thrs, "left": lefts, "right": rights,
            "value": values, "importances": _enc(tree.importances)}


def _tree_from_obj(obj: dict) -> _Tree:
    nodes = [_TreeNode(v) for v in obj["value"]]
    for i, node in enumerate(nodes):
        node.feature = obj["feature"][i]
        node.threshold = obj["threshold"][i]
        if obj["left"][i] >= 0:
            node.left = nodes[obj["left"][i]]
            node.right = nodes[obj["right"][i]]
    return _Tree(nodes[0], _dec(obj["importances"]))


def save_classifier(clf: TrainedClassifier, path) -> None:
    payload = {
        "format": _FORMAT,
        "version": _VERSION,
        "spec": {"kind": clf.spec.kind, "hyper": _jsonable(clf.spec.hyper), "seed": clf.spec.seed},
        "n_features": clf.n_features,
        "schema_fingerprint": clf.schema_fingerprint,
        "majority": clf.majority,
    }
    if clf.standardizer is not None:
        payload["standardizer"] = {"mean": _enc(clf.standardizer.mean),
                                   "scale": _enc(clf.standardizer.scale)}
    if clf.weights is not None:
        payload["linear"] = {"weights": _enc(clf.weights), "bias": clf.bias}
    if clf.trees is not None:
        payload["trees"] = [_tree_to_obj(t) for t in clf.trees]
    if clf.mlp is not None:
        payload["mlp"] = _mlp_to_obj(clf.mlp)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def _jsonable(hyper: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in hyper.items()}


def _mlp_to_obj(model: neural.MLPModel) -> dict:
    s = model.spec
    return {
        "spec": {"input_dim": s.input_dim, "hidden_sizes": list(s.hidden_sizes),
                 "activation": s.activation, "dropout_rate": s.dropout_rate,
                 "output_kind": s.output_kind, "n_outputs": s.n_outputs},
        "weights": [_enc(W) for W in model.weights],
        "biases": [_enc(b) for b in model.biases],
    }


def _mlp_from_obj(obj: dict) -> neural.MLPModel:
    s = obj["spec"]
    spec = neural.MLPSpec(input_dim=s["input_dim"], hidden_sizes=tuple(s["hidden_sizes"]),
                          activation=s["activation"], dropout_rate=s["dropout_rate"],
                          output_kind=s["output_kind"], n_outputs=s["n_outputs"])
    sizes = [spec.input_dim, *spec.hidden_sizes, spec.n_outputs]
    dims = list(zip(sizes[:-1], sizes[1:]))
    weights = [_dec(w).reshape(d) for w, d in zip(obj["weights"], dims)]
    biases = [_dec(b) for b in obj["biases"]]
    return neural.MLPModel(spec=spec, weights=weights, biases=biases)


def load_classifier(path) -> TrainedClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != _FORMAT or payload.get("version") != _VERSION:
        raise DataError(f"{path}: not a supported {_FORMAT} container")
    s = payload["spec"]
    hyper = {k: (tuple(v) if isinstance(v, list) else v) for k, v in s["hyper"].items()}
    clf = TrainedClassifier(
        spec=ModelSpec(kind=s["kind"], hyper=hyper, seed=s["seed"]),
        n_features=payload["n_features"],
        schema_fingerprint=payload.get("schema_fingerprint"),
        majority=payload.get("majority"),
    )
    if "standardizer" in payload:
        clf.standardizer = _Standardizer(_dec(payload["standardizer"]["mean"]),
                                         _dec(payload["standardizer"]["scale"]))
    if "linear" in payload:
        clf.weights = _dec(payload["linear"]["weights"])
        clf.bias = payload["linear"]["bias"]
    if "trees" in payload:
        clf.trees = [_tree_from_obj(t) for t in payload["trees"]]
    if "mlp" in payload:
        clf.mlp = _mlp_from_obj(payload["mlp"])
    return clf
