"""Dense feed-forward classifier in plain numpy.

Row-vector convention throughout: a layer maps ``h -> h @ W + b`` with
``W`` of shape ``(fan_in, fan_out)``. Hidden layers use ReLU, the output
layer softmax. Every public function accepts either a single example
(1-D array) or a batch (2-D array, one example per row).
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchitectureError, DataError, DivergenceError, LabelError, ShapeError

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.0
    hidden_activation: str = "relu"
    output_activation: str = "softmax"

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 100
    batch_size: int = 32
    early_stop_patience: int = 10
    early_stop_metric: str = "validation_loss"
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0 <= self.early_stop_patience < self.max_epochs:
            raise ValueError("early_stop_patience must be in [0, max_epochs)")
        if self.early_stop_metric != "validation_loss":
            raise ValueError(f"unsupported early_stop_metric {self.early_stop_metric!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    epochs_run: int
    loss_history: list[float]
    stopped_early: bool
    val_loss_history: list[float] = field(default_factory=list)
    best_epoch: int = 0


def init_model(layer_dims, dropout_rate: float = 0.0, seed: int = 0) -> MlpModel:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 3:
        raise ArchitectureError(f"need input, >=1 hidden and output layer, got {dims}")
    if any(d <= 0 for d in dims):
        raise ArchitectureError(f"layer sizes must be positive, got {dims}")
    if dims[-1] < 2:
        raise ArchitectureError("output layer needs at least 2 classes")
    if not 0.0 <= dropout_rate < 1.0:
        raise ArchitectureError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, float(dropout_rate))


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"expected input of width {model.input_dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(x)):
        raise DataError("input contains non-finite values")
    return x, single


def _check_labels(model: MlpModel, labels, n: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels))
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise LabelError("labels must be integers")
        labels = labels.astype(np.int64)
    if np.any(labels < 0) or np.any(labels >= model.output_dim):
        raise LabelError(f"labels must lie in [0, {model.output_dim - 1}]")
    return labels


class _Cache:
    __slots__ = ("inputs", "derivs", "logits")

    def __init__(self):
        self.inputs: list[np.ndarray] = []
        self.derivs: list[np.ndarray] = []
        self.logits: np.ndarray | None = None


def _forward(model: MlpModel, x: np.ndarray, rng: np.random.Generator | None = None) -> _Cache:
    # rng given => training mode (inverted dropout on hidden activations)
    cache = _Cache()
    h = x
    n_layers = len(model.weights)
    p = model.dropout_rate
    for i in range(n_layers - 1):
        cache.inputs.append(h)
        z = h @ model.weights[i] + model.biases[i]
        deriv = (z > 0).astype(np.float64)
        if rng is not None and p > 0:
            deriv *= (rng.random(z.shape) >= p) / (1.0 - p)
        h = z * deriv
        cache.derivs.append(deriv)
    cache.inputs.append(h)
    cache.logits = h @ model.weights[-1] + model.biases[-1]
    return cache


def _backward(model: MlpModel, cache: _Cache, dlogits: np.ndarray, params: bool = False):
    g = dlogits
    grads_w: list[np.ndarray] = [None] * len(model.weights)
    grads_b: list[np.ndarray] = [None] * len(model.weights)
    for i in reversed(range(len(model.weights))):
        if params:
            grads_w[i] = cache.inputs[i].T @ g
            grads_b[i] = g.sum(axis=0)
        g = g @ model.weights[i].T
        if i > 0:
            g = g * cache.derivs[i - 1]
    return g, grads_w, grads_b


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(model: MlpModel, x) -> np.ndarray:
    xb, single = _as_batch(model, x)
    out = _forward(model, xb).logits
    return out[0] if single else out


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities (inference mode, no dropout)."""
    xb, single = _as_batch(model, x)
    probs = np.exp(_log_softmax(_forward(model, xb).logits))
    return probs[0] if single else probs


def predict(model: MlpModel, x):
    """Argmax class; ties go to the lower index."""
    probs = forward(model, x)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1)


def predict_from_logits(z: np.ndarray) -> np.ndarray:
    """Same decision as :func:`predict`, for a batch of precomputed logits."""
    return np.argmax(np.exp(_log_softmax(z)), axis=1)


def loss(model: MlpModel, x, label) -> float:
    """Cross-entropy. For a batch, the mean over rows."""
    xb, _ = _as_batch(model, x)
    labels = _check_labels(model, label, xb.shape[0])
    logp = _log_softmax(_forward(model, xb).logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def input_gradient(model: MlpModel, x, label) -> np.ndarray:
    """Gradient of each example's own cross-entropy w.r.t. its input."""
    xb, single = _as_batch(model, x)
    labels = _check_labels(model, label, xb.shape[0])
    cache = _forward(model, xb)
    dlogits = np.exp(_log_softmax(cache.logits))
    dlogits[np.arange(len(labels)), labels] -= 1.0
    g, _, _ = _backward(model, cache, dlogits)
    return g[0] if single else g


def _jacobian(model: MlpModel, cache: _Cache) -> np.ndarray:
    # one backward pass for all classes: the k seeds are stacked row-wise
    k, n = model.output_dim, cache.logits.shape[0]
    g = np.repeat(model.weights[-1].T, n, axis=0)  # rows c*n .. c*n+n-1 seed class c
    for i in reversed(range(len(model.weights) - 1)):
        g = (g * np.tile(cache.derivs[i], (k, 1))) @ model.weights[i].T
    return np.ascontiguousarray(g.reshape(k, n, -1).transpose(1, 0, 2))


def class_jacobian(model: MlpModel, x) -> np.ndarray:
    """d logits / d input, shape (output_dim, input_dim) per example.

    A batch input gives shape (n, output_dim, input_dim).
    """
    xb, single = _as_batch(model, x)
    jac = _jacobian(model, _forward(model, xb))
    return jac[0] if single else jac


def logits_and_jacobian(model: MlpModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Batch logits and class Jacobians from a single forward pass."""
    xb, _ = _as_batch(model, x)
    cache = _forward(model, xb)
    return cache.logits, _jacobian(model, cache)


def _split_xy(data, name: str, model: MlpModel) -> tuple[np.ndarray, np.ndarray]:
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError(f"{name} set is empty")
    if x.shape[1] != model.input_dim:
        raise ShapeError(f"{name} set has width {x.shape[1]}, model expects {model.input_dim}")
    return x, _check_labels(model, y, x.shape[0])


def train(model: MlpModel, train_set, valid_set, config: TrainConfig | None = None,
          batch_hook=None, valid_hook=None):
    """Mini-batch training with early stopping on validation loss.

    ``train_set`` and ``valid_set`` are ``(features, labels)`` pairs. The
    input model is left untouched; the returned model is the snapshot with
    the lowest validation loss.

    ``batch_hook(model, x, y, rng)`` may replace each mini-batch before the
    update (it sees the current weights); ``valid_hook(model, x, y)`` likewise
    rewrites the validation set before every evaluation.
    """
    config = config or TrainConfig()
    x_tr, y_tr = _split_xy(train_set, "train", model)
    x_va, y_va = _split_xy(valid_set, "validation", model)

    model = model.copy()
    rng = np.random.default_rng(config.seed)
    n = x_tr.shape[0]
    n_params = len(model.weights)
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    step = 0

    def valid_loss(m):
        if valid_hook is None:
            return loss(m, x_va, y_va)
        return loss(m, *valid_hook(m, x_va, y_va))

    best_loss = valid_loss(model)
    best = model.copy()
    best_epoch = 0
    wait = 0
    history: list[float] = []
    val_history: list[float] = []
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            if batch_hook is not None:
                xb, yb = batch_hook(model, xb, yb, rng)
            cache = _forward(model, xb, rng)
            logp = _log_softmax(cache.logits)
            batch_loss = -logp[np.arange(len(yb)), yb].mean()
            if not np.isfinite(batch_loss):
                raise DivergenceError(epoch)
            batch_losses.append(batch_loss)
            dlogits = np.exp(logp)
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            _, gw, gb = _backward(model, cache, dlogits, params=True)
            step += 1
            for i in range(n_params):
                if config.optimizer == "sgd":
                    model.weights[i] -= lr * gw[i]
                    model.biases[i] -= lr * gb[i]
                    continue
                corr1 = 1 - beta1 ** step
                corr2 = 1 - beta2 ** step
                for param, grad, m, v in ((model.weights[i], gw[i], m_w[i], v_w[i]),
                                          (model.biases[i], gb[i], m_b[i], v_b[i])):
                    m *= beta1
                    m += (1 - beta1) * grad
                    v *= beta2
                    v += (1 - beta2) * grad ** 2
                    param -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)

        history.append(float(np.mean(batch_losses)))
        val_loss = valid_loss(model)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch)
        val_history.append(val_loss)
        log.debug("epoch %d train_loss %.6f val_loss %.6f", epoch, history[-1], val_loss)
        if val_loss < best_loss:
            best_loss, best, best_epoch, wait = val_loss, model.copy(), epoch, 0
        else:
            wait += 1
            if wait >= config.early_stop_patience:
                stopped_early = epoch < config.max_epochs
                break

    report = TrainReport(len(history), history, stopped_early, val_history, best_epoch)
    return best, report


def model_to_dict(model: MlpModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "layer_dims": list(model.layer_dims),
        "dropout_rate": model.dropout_rate,
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(doc: dict) -> MlpModel:
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise DataError(f"unsupported model schema_version {doc.get('schema_version')!r}")
    dims = [int(d) for d in doc["layer_dims"]]
    weights = [
        np.asarray(w, dtype=np.float64).reshape(a, b)
        for w, a, b in zip(doc["weights"], dims[:-1], dims[1:])
    ]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    if len(weights) != len(dims) - 1 or any(b.shape != (d,) for b, d in zip(biases, dims[1:])):
        raise ShapeError("model document does not match its layer_dims")
    return MlpModel(
        dims, weights, biases, float(doc["dropout_rate"]),
        doc.get("hidden_activation", "relu"), doc.get("output_activation", "softmax"),
    )


def save_model(model: MlpModel, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))
