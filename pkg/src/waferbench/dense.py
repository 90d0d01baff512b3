"""Dense feed-forward networks trained by online stochastic gradient descent.

Covers the single-neuron perceptron, the 3-layer net and the 5-layer deep
net: plain per-pattern SGD on the squared error against +/-1 targets, with
sign-threshold classification. No momentum, no batching, no regularization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATION_KINDS = ("tanh", "linear", "sigmoid")

# np.random stream tags: keep init and per-epoch shuffles on disjoint
# streams so an n-epoch run is a prefix of any longer run with the same seed.
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


class TrainingDiverged(Exception):
    """Non-finite loss or gradient encountered during training."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_prime_from_output(kind: str, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation expressed through its output value."""
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "linear":
        return np.ones_like(a)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Layered topology: sizes from input to output, one activation per layer."""

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if len(self.activations) != len(self.layer_sizes) - 1:
            raise ValueError("need exactly one activation per non-input layer")
        for kind in self.activations:
            if kind not in ACTIVATION_KINDS:
                raise ValueError(f"unknown activation {kind!r}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class Parameters:
    """Per-layer weight matrices (fan_out x fan_in) and bias vectors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 40
    seed: int = 0
    shuffle: bool = True
    # "auto" resolves per architecture: off for dense nets, 5.0 for the
    # unrolled LSTM. A float forces that clip norm; None disables.
    gradient_clip_norm: float | None | str = "auto"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def resolved_clip(self, default: float | None) -> float | None:
        if self.gradient_clip_norm == "auto":
            return default
        return self.gradient_clip_norm


@dataclass(frozen=True)
class Metrics:
    """Sign-threshold classification metrics; +1 is the positive class."""

    accuracy: float
    true_pos: int
    true_neg: int
    false_pos: int
    false_neg: int
    recall_pos: float
    recall_neg: float
    balanced_accuracy: float

    @classmethod
    def from_predictions(cls, predicted: np.ndarray, labels: np.ndarray) -> "Metrics":
        predicted = np.asarray(predicted)
        labels = np.asarray(labels)
        tp = int(np.sum((predicted == 1) & (labels == 1)))
        tn = int(np.sum((predicted == -1) & (labels == -1)))
        fp = int(np.sum((predicted == 1) & (labels == -1)))
        fn = int(np.sum((predicted == -1) & (labels == 1)))
        total = tp + tn + fp + fn
        recall_pos = tp / (tp + fn) if tp + fn else 0.0
        recall_neg = tn / (tn + fp) if tn + fp else 0.0
        return cls(
            accuracy=(tp + tn) / total,
            true_pos=tp, true_neg=tn, false_pos=fp, false_neg=fn,
            recall_pos=recall_pos, recall_neg=recall_neg,
            balanced_accuracy=0.5 * (recall_pos + recall_neg),
        )

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "true_pos": self.true_pos, "true_neg": self.true_neg,
            "false_pos": self.false_pos, "false_neg": self.false_neg,
            "recall_pos": self.recall_pos, "recall_neg": self.recall_neg,
        }


@dataclass(frozen=True)
class EpochStats:
    epoch: int            # 1-based
    mean_loss: float      # mean of 0.5*(y - t)^2 over the epoch's updates
    train_accuracy: float # sign agreement on the pre-update forward passes


@dataclass(frozen=True)
class DenseModel:
    spec: NetworkSpec
    params: Parameters


def init_params(spec: NetworkSpec, seed: int) -> Parameters:
    """Weights uniform in +/- 1/sqrt(fan_in), biases zero; deterministic per seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_INIT_STREAM,)))
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Parameters(tuple(weights), tuple(biases))


def forward(spec: NetworkSpec, params: Parameters, x: np.ndarray):
    """Single-record forward pass.

    Returns (output, cache); the cache holds every layer's input and
    post-activation output and is consumed by backward().
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_size,):
        raise ValueError(f"input shape {x.shape} does not match input size {spec.input_size}")
    acts = [x]
    for k in range(spec.num_layers):
        z = params.weights[k] @ acts[-1]
        if spec.use_bias:
            z = z + params.biases[k]
        acts.append(activate(spec.activations[k], z))
    return acts[-1], acts


def backward(spec: NetworkSpec, params: Parameters, cache: list[np.ndarray],
             target) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of 0.5*||y - target||^2 w.r.t. weights and biases."""
    if len(cache) != spec.num_layers + 1:
        raise ValueError("cache does not match network depth")
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    grad_w = [None] * spec.num_layers
    grad_b = [None] * spec.num_layers
    delta = (cache[-1] - target) * activate_prime_from_output(
        spec.activations[-1], cache[-1])
    for k in range(spec.num_layers - 1, -1, -1):
        if cache[k].shape[0] != params.weights[k].shape[1]:
            raise ValueError("stale cache: layer input shape mismatch")
        grad_w[k] = np.outer(delta, cache[k])
        grad_b[k] = delta if spec.use_bias else np.zeros_like(delta)
        if k > 0:
            delta = (params.weights[k].T @ delta) * activate_prime_from_output(
                spec.activations[k - 1], cache[k])
    return grad_w, grad_b


def clip_gradients(grads_flat: list[np.ndarray], max_norm: float | None) -> float:
    """In-place global-norm clip; returns the pre-clip norm."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads_flat)))
    if max_norm is not None and norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads_flat:
            g *= scale
    return norm


def sgd_step(params: Parameters, grads: tuple[list, list],
             learning_rate: float) -> Parameters:
    """w <- w - lr * g, elementwise, into a new parameter set."""
    grad_w, grad_b = grads
    for g in (*grad_w, *grad_b):
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(epoch=-1, message="non-finite gradient")
    weights = tuple(w - learning_rate * g for w, g in zip(params.weights, grad_w))
    biases = tuple(b - learning_rate * g for b, g in zip(params.biases, grad_b))
    return Parameters(weights, biases)


def epoch_order(seed: int, epoch: int, n: int, shuffle: bool) -> np.ndarray:
    """Deterministic pattern order for one epoch (1-based epoch index)."""
    if not shuffle:
        return np.arange(n)
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_SHUFFLE_STREAM, epoch)))
    return rng.permutation(n)


def train(spec: NetworkSpec, records, config: TrainConfig,
          on_epoch_end=None) -> tuple[Parameters, list[EpochStats]]:
    """Online SGD: one update per pattern, per-epoch reshuffle, seeded.

    on_epoch_end(epoch, params) is called after each epoch, before the
    divergence check aborts. Raises TrainingDiverged on non-finite loss.
    """
    if not records:
        raise ValueError("training split is empty")
    X = np.stack([r.values for r in records])
    y = np.array([r.label for r in records], dtype=np.float64)
    n = len(records)

    params = init_params(spec, config.seed)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    clip = config.resolved_clip(default=None)
    trace: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = epoch_order(config.seed, epoch, n, config.shuffle)
        loss_sum = 0.0
        correct = 0
        for i in order:
            x = X[i]
            acts = [x]
            for k in range(spec.num_layers):
                z = weights[k] @ acts[-1]
                if spec.use_bias:
                    z += biases[k]
                acts.append(activate(spec.activations[k], z))
            out = acts[-1]
            resid = out - y[i]
            loss_sum += 0.5 * float(resid @ resid)
            if (1.0 if out[0] >= 0.0 else -1.0) == y[i]:
                correct += 1

            delta = resid * activate_prime_from_output(spec.activations[-1], out)
            deltas = [None] * spec.num_layers
            for k in range(spec.num_layers - 1, -1, -1):
                deltas[k] = delta
                if k > 0:
                    delta = (weights[k].T @ delta) * activate_prime_from_output(
                        spec.activations[k - 1], acts[k])
            grad_w = [np.outer(d, a) for d, a in zip(deltas, acts[:-1])]
            if clip is not None:
                clip_gradients(grad_w + (deltas if spec.use_bias else []), clip)
            lr = config.learning_rate
            for k in range(spec.num_layers):
                weights[k] -= lr * grad_w[k]
                if spec.use_bias:
                    biases[k] -= lr * deltas[k]

        mean_loss = loss_sum / n
        trace.append(EpochStats(epoch, mean_loss, correct / n))
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(epoch)
        if on_epoch_end is not None:
            snapshot = Parameters(tuple(w.copy() for w in weights),
                                  tuple(b.copy() for b in biases))
            on_epoch_end(epoch, snapshot)

    final = Parameters(tuple(w.copy() for w in weights),
                       tuple(b.copy() for b in biases))
    return final, trace


def predict_batch(spec: NetworkSpec, params: Parameters, X: np.ndarray) -> np.ndarray:
    """Forward pass over stacked records; returns (N, output_size)."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != spec.input_size:
        raise ValueError(f"batch shape {a.shape} does not match input size {spec.input_size}")
    for k in range(spec.num_layers):
        z = a @ params.weights[k].T
        if spec.use_bias:
            z = z + params.biases[k]
        a = activate(spec.activations[k], z)
    return a


def classify(outputs: np.ndarray) -> np.ndarray:
    """Sign threshold with the documented tie-break sign(0) -> +1."""
    return np.where(np.asarray(outputs) >= 0.0, 1, -1)


def evaluate(spec: NetworkSpec, params: Parameters, records) -> Metrics:
    if not records:
        raise ValueError("cannot evaluate on an empty record list")
    X = np.stack([r.values for r in records])
    y = np.array([r.label for r in records])
    outputs = predict_batch(spec, params, X)[:, 0]
    return Metrics.from_predictions(classify(outputs), y)
