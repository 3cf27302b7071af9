"""From-scratch estimators behind one ``fit`` / ``predict_proba`` contract.

Three kinds are built in: logistic regression (full-batch gradient descent),
a greedy CART-style decision tree and k-nearest neighbours. Every fit is a
deterministic function of (features, targets, seed) and bumps a process-wide
fit counter so callers can prove how many models a procedure trained.
"""

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from .data import BINARY, REGRESSION, TASKS
from .errors import ValidationError

LOGISTIC_REGRESSION = "logistic_regression"
DECISION_TREE = "decision_tree"
KNN = "knn"

DEFAULTS = {
    LOGISTIC_REGRESSION: {"learning_rate": 0.1, "iterations": 500, "l2": 1e-4},
    DECISION_TREE: {"max_depth": 5, "min_leaf_size": 1},
    KNN: {"k": 5},
}


class _FitCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def bump(self):
        with self._lock:
            self._count += 1

    @property
    def value(self):
        with self._lock:
            return self._count


FIT_COUNTER = _FitCounter()


def fit_count():
    """Total number of :func:`fit` calls made in this process."""
    return FIT_COUNTER.value


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    task: str = BINARY
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ValidationError(f"unknown model kind {self.kind!r}; expected one of {sorted(DEFAULTS)}")
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}")
        if self.kind == LOGISTIC_REGRESSION and self.task != BINARY:
            raise ValidationError("logistic_regression supports binary classification only")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValidationError(f"unknown {self.kind} hyperparameter(s): {sorted(unknown)}")
        hp = {**DEFAULTS[self.kind], **self.hyperparameters}
        object.__setattr__(self, "hyperparameters", hp)
        if self.kind == LOGISTIC_REGRESSION:
            if hp["learning_rate"] <= 0 or hp["iterations"] < 1 or hp["l2"] < 0:
                raise ValidationError(f"invalid logistic_regression hyperparameters {hp}")
        elif self.kind == DECISION_TREE:
            if hp["max_depth"] < 0 or hp["min_leaf_size"] < 1:
                raise ValidationError(f"invalid decision_tree hyperparameters {hp}")
        elif hp["k"] < 1:
            raise ValidationError(f"kNN needs k >= 1, got {hp['k']}")

    @property
    def is_classifier(self):
        return self.task == BINARY


@dataclass(frozen=True, eq=False)
class FittedModel:
    """An immutable trained model. ``params`` is any object with ``predict(X)``."""

    spec: ModelSpec
    params: object
    n_features: int
    fingerprint: str = ""


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_and_grad(weights, bias, X, y, l2):
    """Mean log-loss plus ``l2/2 * ||w||^2`` and its gradient (bias unpenalised)."""
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * weights @ weights)
    residual = (_sigmoid(z) - y) / len(y)
    return loss, X.T @ residual + l2 * weights, float(residual.sum())


@dataclass(frozen=True, eq=False)
class _Logistic:
    weights: np.ndarray
    bias: float

    def predict(self, X):
        return _sigmoid(X @ self.weights + self.bias)


def _fit_logistic(X, y, hp):
    w = np.zeros(X.shape[1])
    b = 0.0
    lr, l2 = float(hp["learning_rate"]), float(hp["l2"])
    y = y.astype(np.float64)
    for _ in range(int(hp["iterations"])):
        _, gw, gb = logistic_loss_and_grad(w, b, X, y, l2)
        w = w - lr * gw
        b = b - lr * gb
    return _Logistic(w, b)


@dataclass(frozen=True, eq=False)
class _Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(self.depth):
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            go_left = X[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])
        return self.value[node].astype(np.float64)


def _impurity(y_sum, y_sq, count, classify):
    # gini for 0/1 targets is 2p(1-p); regression uses the within-node sum of squares
    if classify:
        p = y_sum / count
        return count * 2.0 * p * (1.0 - p)
    return y_sq - y_sum * y_sum / count


def _best_split(X, y, min_leaf, classify):
    """Lowest weighted impurity split; ties keep the lowest feature, then the lowest threshold."""
    n = len(y)
    best = (_impurity(y.sum(), (y * y).sum(), n, classify), -1, 0.0)
    parent = best[0]
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        csum, csq = np.cumsum(ys), np.cumsum(ys * ys)
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        cand = np.flatnonzero(valid)
        nl = n_left[cand].astype(np.float64)
        left = _impurity(csum[cand], csq[cand], nl, classify)
        right = _impurity(csum[-1] - csum[cand], csq[-1] - csq[cand], n - nl, classify)
        total = left + right
        k = int(np.argmin(total))
        if total[k] < best[0]:
            i = cand[k]
            best = (float(total[k]), j, 0.5 * (xs[i] + xs[i + 1]))
    if best[1] < 0 or best[0] >= parent - 1e-12:
        return None
    return best[1], best[2]


def _fit_tree(X, y, hp, classify):
    max_depth, min_leaf = int(hp["max_depth"]), int(hp["min_leaf_size"])
    y = y.astype(np.float64)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            continue
        found = _best_split(X[rows], y[rows], min_leaf, classify)
        if found is None:
            continue
        j, t = found
        mask = X[rows, j] <= t
        feature[node], threshold[node] = j, t
        left[node], right[node] = new_node(rows[mask]), new_node(rows[~mask])
        stack.append((right[node], rows[~mask], depth + 1))
        stack.append((left[node], rows[mask], depth + 1))
    return _Tree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), max_depth,
    )


@dataclass(frozen=True, eq=False)
class _KNN:
    X: np.ndarray
    y: np.ndarray
    k: int
    chunk: int = 1024

    def neighbours(self, X):
        """Indices of the k nearest training rows; distance ties go to the lowest index."""
        out = np.empty((len(X), self.k), dtype=np.int64)
        for start in range(0, len(X), self.chunk):
            block = X[start:start + self.chunk]
            d2 = ((block[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            out[start:start + self.chunk] = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
        return out

    def predict(self, X):
        return self.y[self.neighbours(X)].mean(axis=1)


def _fingerprint(X, y, seed):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
    h.update(str(int(seed)).encode())
    return h.hexdigest()[:16]


def _check_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"features must be a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain non-finite values")
    return X


def fit(spec, features, targets, seed=0):
    """Train a model of ``spec.kind``; deterministic in (features, targets, seed)."""
    X = _check_matrix(features)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if len(X) < 1 or X.shape[1] < 1:
        raise ValidationError(f"need at least one row and one feature, got shape {X.shape}")
    if len(y) != len(X):
        raise ValidationError(f"{len(X)} feature rows but {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ValidationError("targets contain non-finite values")
    if spec.is_classifier and not np.all((y == 0) | (y == 1)):
        raise ValidationError("classification targets must be 0 or 1")
    hp = spec.hyperparameters
    if spec.kind == LOGISTIC_REGRESSION:
        params = _fit_logistic(X, y, hp)
    elif spec.kind == DECISION_TREE:
        params = _fit_tree(X, y, hp, spec.is_classifier)
    else:
        if hp["k"] > len(X):
            raise ValidationError(f"kNN k={hp['k']} exceeds training size {len(X)}")
        params = _KNN(X.copy(), y.copy(), int(hp["k"]))
    FIT_COUNTER.bump()
    return FittedModel(spec, params, X.shape[1], _fingerprint(X, y, seed))


def predict_proba(model, features):
    """P(Y=1) for classifiers, point predictions for regressors."""
    X = _check_matrix(features)
    if X.shape[1] != model.n_features:
        raise ValidationError(f"model expects {model.n_features} features, got {X.shape[1]}")
    out = np.asarray(model.params.predict(X), dtype=np.float64)
    if model.spec.is_classifier:
        out = np.clip(out, 0.0, 1.0)
    return out


def predict_label(probabilities, threshold=0.5):
    """1 where probability >= threshold (a tie predicts 1), else 0."""
    return (np.asarray(probabilities, dtype=np.float64) >= threshold).astype(np.int64)


def constant_model(value, n_features, task=BINARY):
    """A fitted model that always returns ``value``; handy for tests and baselines."""
    return FittedModel(ModelSpec(KNN, task), _Constant(float(value)), n_features, f"const:{value}")


@dataclass(frozen=True)
class _Constant:
    value: float

    def predict(self, X):
        return np.full(len(X), self.value)


__all__ = [
    "BINARY", "REGRESSION", "LOGISTIC_REGRESSION", "DECISION_TREE", "KNN", "DEFAULTS",
    "ModelSpec", "FittedModel", "fit", "predict_proba", "predict_label", "fit_count",
    "logistic_loss_and_grad", "constant_model",
]
