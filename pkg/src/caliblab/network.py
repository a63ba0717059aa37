"""Deterministic rectifier MLP with explicit forward/backward passes.

All arithmetic is float64 numpy; there is no framework underneath, so the
analytic gradients can be audited against finite differences and training
trajectories are bit-reproducible from (data, config, seed).
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

__all__ = [
    "SoftmaxClassifier",
    "forward",
    "softmax",
    "log_softmax",
    "save_model",
    "load_model",
]

CHECKPOINT_VERSION = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class SoftmaxClassifier:
    """MLP mapping R^d to k logits through rectifier hidden layers.

    Weights are a list of (n_in, n_out) matrices with matching bias
    vectors; activations are ReLU on every hidden layer and identity on
    the output.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ParameterError("weights and biases must be non-empty parallel lists")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ParameterError(f"layer {i} has inconsistent shapes")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ParameterError(f"layer {i} does not chain with layer {i - 1}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        # Fixed affine input transform (x - shift) / scale, fitted from the
        # training data; identity until set. Not a trainable parameter.
        self.input_shift = np.zeros(self.weights[0].shape[0])
        self.input_scale = np.ones(self.weights[0].shape[0])
        self.loss_history: list[tuple[int, float]] = []

    # -- construction ---------------------------------------------------------

    @classmethod
    def initialize(cls, layer_sizes: list[int], rng) -> "SoftmaxClassifier":
        """Seeded init: weights uniform in +-1/sqrt(fan_in), biases zero."""
        if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
            raise ParameterError("layer_sizes needs at least input and output sizes")
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        weights, biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = 1.0 / np.sqrt(n_in)
            weights.append(rng.uniform(-scale, scale, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    # -- shape info -------------------------------------------------------------

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list, alternating weight/bias per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "SoftmaxClassifier":
        dup = SoftmaxClassifier(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )
        dup.input_shift = self.input_shift.copy()
        dup.input_scale = self.input_scale.copy()
        return dup

    def set_input_standardization(self, shift: np.ndarray, scale: np.ndarray) -> None:
        """Fix the input transform; zero-variance coordinates keep scale 1."""
        shift = np.asarray(shift, dtype=np.float64)
        scale = np.asarray(scale, dtype=np.float64)
        if shift.shape != (self.input_dim,) or scale.shape != (self.input_dim,):
            raise ParameterError("standardization must match the input dimension")
        if np.any(scale <= 0):
            raise ParameterError("input scale must be positive")
        self.input_shift = shift
        self.input_scale = scale

    # -- evaluation ---------------------------------------------------------------

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Deterministic forward pass; accepts (d,) or (B, d)."""
        out, _ = self._forward(x)
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def _forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.input_dim:
            raise ParameterError(
                f"input dimension {a.shape[1]} does not match model ({self.input_dim})"
            )
        a = (a - self.input_shift) / self.input_scale
        activations = [a]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
            activations.append(a)
        out = a @ self.weights[-1] + self.biases[-1]
        return (out[0] if single else out), activations

    def backward(self, activations: list[np.ndarray], dlogits: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss wrt every parameter, given d loss /
        d logits; ordering matches ``parameters()``."""
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        delta = dlogits
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = activations[layer]
            grads[2 * layer] = a_prev.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0.0)
        return grads

    def apply_update(self, deltas: list[np.ndarray]) -> None:
        params = self.parameters()
        for p, d in zip(params, deltas):
            p += d


def forward(model: SoftmaxClassifier, x: np.ndarray) -> np.ndarray:
    """Logits of the model at x (function form of model.logits)."""
    return model.logits(x)


def save_model(model: SoftmaxClassifier, path) -> None:
    """Versioned binary checkpoint with a layer-shape header."""
    payload = {
        "format_version": np.array([CHECKPOINT_VERSION]),
        "layer_sizes": np.array(model.layer_sizes),
        "input_shift": model.input_shift,
        "input_scale": model.input_scale,
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    np.savez(path, **payload)


def load_model(path) -> SoftmaxClassifier:
    with np.load(path) as data:
        version = int(data["format_version"][0])
        if version != CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        sizes = data["layer_sizes"]
        n_layers = len(sizes) - 1
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
        shift = data["input_shift"]
        scale = data["input_scale"]
    model = SoftmaxClassifier(weights, biases)
    model.set_input_standardization(shift, scale)
    return model
