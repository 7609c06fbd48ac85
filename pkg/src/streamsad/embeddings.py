"""Supervectors over 10-frame segments and the MLP that embeds them.

Each segment's centered first-order statistics (normalized by the posterior
counts) are flattened into a supervector. A small feed-forward network is
trained to call the segment speech or non-speech; its first hidden layer,
not its output, is the representation used for scoring, compared by cosine
against per-class mean embeddings.

The network is plain numpy on purpose: a few dense layers, ReLU, softmax
cross-entropy, minibatch SGD. Determinism given a seed is a contract here,
checkpoints are kept per epoch, and the selected epoch is a config value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gmm import BaumWelchStats

# zero-order counts are floored here before dividing the first-order stats
COUNT_FLOOR = 1e-3


class MlpTrainingError(RuntimeError):
    """Training could not proceed (bad data or diverged loss)."""


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0.0).astype(np.float64)


ACTIVATIONS = {"relu": (_relu, _relu_grad)}


def make_supervector(stats: BaumWelchStats) -> np.ndarray:
    """Count-normalized centered first-order stats, flattened component-major."""
    counts = np.maximum(stats.zero_order, COUNT_FLOOR)
    return (stats.first_order_centered / counts[:, None]).ravel()


@dataclass(frozen=True)
class MlpModel:
    """Dense feed-forward classifier; weights[i] maps layer i to layer i+1."""

    weights: list
    biases: list
    activation: str = "relu"
    embedding_layer: int = 1
    epoch: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight/bias shapes inconsistent")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: dims do not chain")
        if not (1 <= self.embedding_layer <= len(self.weights) - 1):
            raise ValueError("embedding_layer must name a hidden layer")

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]


def init_mlp(layer_dims, seed: int = 0, activation: str = "relu") -> MlpModel:
    """He-initialized network with zero biases; deterministic per seed."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, activation=activation)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _hidden_activations(model: MlpModel, x: np.ndarray) -> list:
    """Post-activation values of every hidden layer, in order."""
    act, _ = ACTIVATIONS[model.activation]
    hidden = []
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = act(h @ w + b)
        hidden.append(h)
    return hidden


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class logits for (n, in_dim) inputs or a single vector."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[np.newaxis, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != model dim {model.input_dim}")
    hidden = _hidden_activations(model, x)
    h = hidden[-1] if hidden else x
    logits = h @ model.weights[-1] + model.biases[-1]
    return logits[0] if single else logits


def extract_embedding(supervector: np.ndarray, model: MlpModel) -> np.ndarray:
    """Embedding for one supervector: the designated hidden layer's activations."""
    return embed_batch(np.asarray(supervector)[np.newaxis, :], model)[0]


def embed_batch(supervectors: np.ndarray, model: MlpModel) -> np.ndarray:
    x = np.asarray(supervectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"expected (n, {model.input_dim}) supervectors, got {x.shape}")
    act, _ = ACTIVATIONS[model.activation]
    h = x
    for w, b in zip(model.weights[: model.embedding_layer], model.biases[: model.embedding_layer]):
        h = act(h @ w + b)
    return h


def cross_entropy(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy; labels are class indices."""
    probs = softmax(forward(model, x))
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def loss_and_grads(model: MlpModel, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy plus gradients for every weight and bias."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    act, act_grad = ACTIVATIONS[model.activation]

    preacts, h = [], x
    inputs = [x]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ w + b
        preacts.append(z)
        h = act(z)
        inputs.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]

    probs = softmax(logits)
    picked = probs[np.arange(len(labels)), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    delta = probs.copy()
    delta[np.arange(len(labels)), labels] -= 1.0
    delta /= len(labels)

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * act_grad(preacts[layer - 1])
    return loss, grad_w, grad_b


def _copy_model(model: MlpModel, epoch: int) -> MlpModel:
    return MlpModel(
        weights=[w.copy() for w in model.weights],
        biases=[b.copy() for b in model.biases],
        activation=model.activation,
        embedding_layer=model.embedding_layer,
        epoch=epoch,
    )


@dataclass
class MlpTrainResult:
    """Selected model plus the full per-epoch history.

    checkpoints[e] is the model after e epochs (index 0 is the
    initialization); train_losses aligns with checkpoints.
    """

    model: MlpModel
    checkpoints: list = field(default_factory=list)
    train_losses: list = field(default_factory=list)
    monitor_losses: list = field(default_factory=list)


def train_mlp(
    supervectors: np.ndarray,
    speech_mask: np.ndarray,
    epochs: int = 30,
    seed: int = 0,
    hidden_dims=(256, 128, 64),
    learning_rate: float = 0.01,
    batch_size: int = 256,
    select_epoch: int | None = None,
    monitor=None,
) -> MlpTrainResult:
    """Minibatch SGD on softmax cross-entropy; deterministic per seed.

    monitor, when given, is a (supervectors, speech_mask) pair evaluated
    after every epoch purely for logging; it never changes the result.
    select_epoch picks the returned checkpoint (default: the last epoch).
    """
    x = np.asarray(supervectors, dtype=np.float64)
    mask = np.asarray(speech_mask, dtype=bool)
    if x.ndim != 2 or len(x) != len(mask):
        raise MlpTrainingError("supervectors and labels do not align")
    if mask.all() or not mask.any():
        raise MlpTrainingError("training data contains a single class")
    labels = mask.astype(int)  # speech = class 1

    if select_epoch is None:
        select_epoch = epochs
    if not (0 <= select_epoch <= epochs):
        raise MlpTrainingError(f"select_epoch {select_epoch} outside 0..{epochs}")

    rng = np.random.default_rng(seed)
    model = init_mlp([x.shape[1], *hidden_dims, 2], seed=seed)

    def monitor_loss(m):
        if monitor is None:
            return None
        mon_x, mon_mask = monitor
        return cross_entropy(m, np.asarray(mon_x), np.asarray(mon_mask, dtype=bool).astype(int))

    result = MlpTrainResult(model=model)
    result.checkpoints.append(_copy_model(model, 0))
    result.train_losses.append(cross_entropy(model, x, labels))
    if monitor is not None:
        result.monitor_losses.append(monitor_loss(model))

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x))
        for batch_start in range(0, len(x), batch_size):
            batch = order[batch_start : batch_start + batch_size]
            loss, grad_w, grad_b = loss_and_grads(model, x[batch], labels[batch])
            if not np.isfinite(loss):
                raise MlpTrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_start // batch_size}"
                )
            for w, b, gw, gb in zip(model.weights, model.biases, grad_w, grad_b):
                w -= learning_rate * gw
                b -= learning_rate * gb
        result.checkpoints.append(_copy_model(model, epoch))
        result.train_losses.append(cross_entropy(model, x, labels))
        if monitor is not None:
            result.monitor_losses.append(monitor_loss(model))

    result.model = result.checkpoints[select_epoch]
    return result


def class_embeddings(supervectors: np.ndarray, speech_mask: np.ndarray, model: MlpModel):
    """Mean embedding per class: (speech_mean, nonspeech_mean)."""
    mask = np.asarray(speech_mask, dtype=bool)
    if not mask.any() or mask.all():
        raise ValueError("both classes must be present to form class embeddings")
    embedded = embed_batch(supervectors, model)
    return embedded[mask].mean(axis=0), embedded[~mask].mean(axis=0)
