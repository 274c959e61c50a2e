"""Statistical learners: diagonal-covariance Gaussian mixtures trained by EM,
and a small multi-layer perceptron trained by full-batch gradient descent.

Both are deterministic under a fixed seed and serialize to versioned,
self-describing JSON documents (numbers as decimal text; round-trip agreement
within 1e-12 is the contract, bit-stability across platforms is not).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InputError, ModelError, ParameterError, SchemaError
from .features import FeatureVector, check_manifest, schema_manifest

MODEL_FORMAT = "actimon-model"
MODEL_VERSION = 1

VARIANCE_FLOOR = 1e-6


@dataclass
class TrainConfig:
    max_iterations: int = 200
    tolerance: float = 1e-6
    seed: int = 0
    learning_rate: float = 0.05  # MLP only
    k: int = 2  # GMM mixture count

    def __post_init__(self) -> None:
        if self.max_iterations < 0 or self.tolerance <= 0 or self.learning_rate <= 0 or self.k <= 0:
            raise ParameterError("training parameters must be positive (iterations may be 0)")


MLP_DEFAULT_ITERATIONS = 5000
MLP_DEFAULT_HIDDEN = 16


def _as_matrix(samples) -> tuple[np.ndarray, str | None]:
    """Accept a FeatureVector sequence or a plain 2-D array."""
    if isinstance(samples, np.ndarray):
        X = np.asarray(samples, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X, None
    seq = list(samples)
    if seq and isinstance(seq[0], FeatureVector):
        schema = seq[0].schema_id
        if any(v.schema_id != schema for v in seq):
            raise SchemaError("training set mixes feature schemas")
        return np.stack([v.as_array() for v in seq]), schema
    X = np.asarray(seq, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X, None


# --------------------------------------------------------------------------
# Gaussian mixture model (diagonal covariances)
# --------------------------------------------------------------------------


@dataclass
class GmmModel:
    class_label: str
    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d), every entry >= VARIANCE_FLOOR
    schema_id: str | None = None
    loglik_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if abs(float(self.weights.sum()) - 1.0) > 1e-9 or np.any(self.weights <= 0):
            raise ModelError("mixture weights must be positive and sum to 1")
        if np.any(self.variances < VARIANCE_FLOOR * (1 - 1e-12)):
            raise ModelError("covariance entries below the variance floor")
        if self.means.shape != self.variances.shape:
            raise ModelError("means and variances must have matching shapes")

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "gmm",
            "class_label": self.class_label,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }
        if self.schema_id is not None:
            doc["feature_schema"] = schema_manifest(self.schema_id)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmModel":
        _check_model_doc(doc, "gmm")
        schema_id = None
        if "feature_schema" in doc:
            check_manifest(doc["feature_schema"])
            schema_id = doc["feature_schema"]["name"]
        return cls(
            class_label=doc["class_label"],
            weights=np.array(doc["weights"], dtype=float),
            means=np.array(doc["means"], dtype=float),
            variances=np.array(doc["variances"], dtype=float),
            schema_id=schema_id,
        )


def _log_gauss_diag(X: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Log density of each row of X under each diagonal Gaussian; (n, k)."""
    d = X.shape[1]
    diff = X[:, None, :] - means[None, :, :]  # (n, k, d)
    quad = np.sum(diff * diff / variances[None, :, :], axis=2)
    logdet = np.sum(np.log(variances), axis=1)  # (k,)
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet[None, :] + quad)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _farthest_point_seeds(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic-under-seed spread-out initial means."""
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[chosen].copy()


def gmm_fit(samples, k: int, cfg: TrainConfig | None = None, class_label: str = "") -> GmmModel:
    """Fit a k-component diagonal GMM by EM.

    Initialization is farthest-point-first seeding under cfg.seed with uniform
    weights and the global per-dimension variance; every M-step floors
    variances at VARIANCE_FLOOR.  Stops when the relative log-likelihood
    improvement drops below cfg.tolerance or after cfg.max_iterations.
    """
    cfg = cfg or TrainConfig()
    X, schema_id = _as_matrix(samples)
    n, d = X.shape
    if n < k:
        raise DataError(f"need at least k={k} samples, got {n}")
    rng = np.random.default_rng(cfg.seed)
    means = _farthest_point_seeds(X, k, rng)
    global_var = np.maximum(np.var(X, axis=0), VARIANCE_FLOOR)
    variances = np.tile(global_var, (k, 1))
    weights = np.full(k, 1.0 / k)

    history: list[float] = []
    prev_ll = -np.inf
    for _ in range(max(cfg.max_iterations, 1)):
        # E-step in log space
        log_joint = np.log(weights)[None, :] + _log_gauss_diag(X, means, variances)
        log_norm = _logsumexp(log_joint, axis=1)
        ll = float(np.sum(log_norm))
        history.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])
        # M-step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        diff = X[:, None, :] - means[None, :, :]
        variances = np.einsum("nk,nkd->kd", resp, diff * diff) / nk[:, None]
        variances = np.maximum(variances, VARIANCE_FLOOR)
        if np.isfinite(prev_ll):
            rel = (ll - prev_ll) / max(abs(prev_ll), 1e-12)
            if rel < cfg.tolerance:
                break
        prev_ll = ll

    model = GmmModel(
        class_label=class_label,
        weights=weights,
        means=means,
        variances=variances,
        schema_id=schema_id,
    )
    model.loglik_history = history
    return model


def gmm_loglik(m: GmmModel, x) -> float:
    """Log mixture density at x, computed with log-sum-exp for stability."""
    if isinstance(x, FeatureVector):
        if m.schema_id is not None and x.schema_id != m.schema_id:
            raise SchemaError(f"model expects schema {m.schema_id!r}, got {x.schema_id!r}")
        x = x.as_array()
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != m.dim:
        raise SchemaError(f"model dimension {m.dim} != input dimension {x.shape[1]}")
    log_joint = np.log(m.weights)[None, :] + _log_gauss_diag(x, m.means, m.variances)
    return float(_logsumexp(log_joint, axis=1)[0])


# --------------------------------------------------------------------------
# Multi-layer perceptron
# --------------------------------------------------------------------------


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[i]: (layer_sizes[i], layer_sizes[i+1])
    biases: list[np.ndarray]
    class_labels: list[str]
    activation: str = "tanh"
    schema_id: str | None = None
    standardize_mean: np.ndarray | None = None
    standardize_std: np.ndarray | None = None
    final_loss: float | None = None

    def __post_init__(self) -> None:
        if self.activation != "tanh":
            raise ModelError(f"unsupported activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (
                self.layer_sizes[i + 1],
            ):
                raise ModelError("layer parameter shapes inconsistent with layer_sizes")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelError("non-finite MLP parameters")
        if len(self.class_labels) != self.layer_sizes[-1]:
            raise ModelError("one output unit per class label required")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        if self.standardize_mean is None:
            return X
        return (X - self.standardize_mean) / self.standardize_std

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Probability rows over class_labels (normalized exponential output)."""
        h = self._standardize(np.asarray(X, dtype=float))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
        logits = h @ self.weights[-1] + self.biases[-1]
        return _softmax(logits)

    def to_dict(self) -> dict:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "mlp",
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "class_labels": self.class_labels,
            "activation": self.activation,
            "final_loss": self.final_loss,
        }
        if self.schema_id is not None:
            doc["feature_schema"] = schema_manifest(self.schema_id)
        if self.standardize_mean is not None:
            doc["standardize_mean"] = self.standardize_mean.tolist()
            doc["standardize_std"] = self.standardize_std.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        _check_model_doc(doc, "mlp")
        schema_id = None
        if "feature_schema" in doc:
            check_manifest(doc["feature_schema"])
            schema_id = doc["feature_schema"]["name"]
        mean = doc.get("standardize_mean")
        std = doc.get("standardize_std")
        return cls(
            layer_sizes=list(doc["layer_sizes"]),
            weights=[np.array(w, dtype=float) for w in doc["weights"]],
            biases=[np.array(b, dtype=float) for b in doc["biases"]],
            class_labels=list(doc["class_labels"]),
            activation=doc.get("activation", "tanh"),
            schema_id=schema_id,
            standardize_mean=None if mean is None else np.array(mean, dtype=float),
            standardize_std=None if std is None else np.array(std, dtype=float),
            final_loss=doc.get("final_loss"),
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_init(layer_sizes: list[int], seed: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def mlp_loss_and_grad(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    Y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy and its gradients by backpropagation.

    ``Y`` is one-hot (n, classes).  Hidden activations are tanh; output is a
    normalized exponential, so the output-layer delta is (probs - Y) / n.
    """
    acts = [X]
    h = X
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ w + b)
        acts.append(h)
    logits = h @ weights[-1] + biases[-1]
    probs = _softmax(logits)
    n = len(X)
    # log-sum-exp form of the per-row cross entropy
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-np.sum(Y * log_probs) / n)

    grad_w = [np.zeros_like(w) for w in weights]
    grad_b = [np.zeros_like(b) for b in biases]
    delta = (probs - Y) / n
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (1.0 - acts[layer] ** 2)
    return loss, grad_w, grad_b


def mlp_train(
    data,
    labels,
    cfg: TrainConfig | None = None,
    hidden: int = MLP_DEFAULT_HIDDEN,
    iterations: int | None = None,
    standardize: bool = True,
) -> MlpModel:
    """Full-batch gradient descent on the mean cross-entropy.

    z-score parameters are computed on the training data, stored in the
    model, and applied at inference.  Deterministic under cfg.seed.
    """
    cfg = cfg or TrainConfig()
    X, schema_id = _as_matrix(data)
    labels = [str(l) for l in labels]
    if len(labels) != len(X):
        raise DataError("label count must equal sample count")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DataError("MLP training needs at least 2 classes")
    idx = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((len(X), len(classes)))
    for row, lab in enumerate(labels):
        Y[row, idx[lab]] = 1.0

    if standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        Xs = (X - mean) / std
    else:
        mean = std = None
        Xs = X

    layer_sizes = [X.shape[1], hidden, len(classes)]
    weights, biases = mlp_init(layer_sizes, cfg.seed)
    n_iter = MLP_DEFAULT_ITERATIONS if iterations is None else iterations
    loss = None
    for _ in range(n_iter):
        loss, grad_w, grad_b = mlp_loss_and_grad(weights, biases, Xs, Y)
        for layer in range(len(weights)):
            weights[layer] -= cfg.learning_rate * grad_w[layer]
            biases[layer] -= cfg.learning_rate * grad_b[layer]

    return MlpModel(
        layer_sizes=layer_sizes,
        weights=weights,
        biases=biases,
        class_labels=classes,
        schema_id=schema_id,
        standardize_mean=mean,
        standardize_std=std,
        final_loss=loss,
    )


def mlp_predict(m: MlpModel, x) -> np.ndarray:
    """Probability vector over m.class_labels for a single feature vector."""
    if isinstance(x, FeatureVector):
        if m.schema_id is not None and x.schema_id != m.schema_id:
            raise SchemaError(f"model expects schema {m.schema_id!r}, got {x.schema_id!r}")
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if len(x) != m.input_dim:
            raise SchemaError(f"model input dim {m.input_dim} != vector length {len(x)}")
        return m.forward(x[None, :])[0]
    if x.shape[1] != m.input_dim:
        raise SchemaError(f"model input dim {m.input_dim} != matrix width {x.shape[1]}")
    return m.forward(x)


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------


def _check_model_doc(doc: dict, kind: str) -> None:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelError("not an actimon model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {doc.get('version')!r}")
    if doc.get("kind") != kind:
        raise ModelError(f"expected a {kind!r} model, found {doc.get('kind')!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n")


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"corrupt model file {path}: {exc}") from exc
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "gmm":
        return GmmModel.from_dict(doc)
    if kind == "mlp":
        return MlpModel.from_dict(doc)
    raise ModelError(f"unknown model kind {kind!r} in {path}")
