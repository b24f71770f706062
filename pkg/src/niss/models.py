"""Desk-scale classifiers with hand-written backpropagation.

Parameters live in one flat ``float64`` vector. The layout is layer-major and
within a layer the weight matrix (``fan_in x fan_out``, row-major) comes
before the bias:

    softmax-regression:  W (d, C), b (C)
    mlp-2x200:           W1 (d, 200), b1 (200), W2 (200, 200), b2 (200),
                         W3 (200, C), b3 (C)

The loss is the mean cross-entropy over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import RngLike, as_generator

MODEL_KINDS = ("softmax-regression", "mlp-2x200")
HIDDEN_UNITS = 200


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ParameterError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ParameterError("input_dim must be >= 1 and num_classes >= 2")

    def layer_sizes(self) -> list[int]:
        if self.kind == "softmax-regression":
            return [self.input_dim, self.num_classes]
        return [self.input_dim, HIDDEN_UNITS, HIDDEN_UNITS, self.num_classes]

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        sizes = self.layer_sizes()
        out = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            out.append((f"W{i}", (fan_in, fan_out)))
            out.append((f"b{i}", (fan_out,)))
        return out

    @property
    def num_params(self) -> int:
        return sum(math.prod(shape) for _, shape in self.layout())


def unflatten(spec: ModelSpec, params: np.ndarray) -> list[np.ndarray]:
    """Views into ``params`` in layout order: [W1, b1, W2, b2, ...]."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (spec.num_params,):
        raise ShapeError(f"{spec.kind} expects {spec.num_params} parameters, got shape {params.shape}")
    pieces, offset = [], 0
    for _, shape in spec.layout():
        size = math.prod(shape)
        pieces.append(params[offset:offset + size].reshape(shape))
        offset += size
    return pieces


def init_params(spec: ModelSpec, rng: RngLike) -> np.ndarray:
    """Zeros for softmax regression; He-normal weights and zero biases for the MLP."""
    if spec.kind == "softmax-regression":
        return np.zeros(spec.num_params)
    gen = as_generator(rng)
    chunks = []
    for name, shape in spec.layout():
        if name.startswith("W"):
            chunks.append(gen.standard_normal(shape).ravel() * math.sqrt(2.0 / shape[0]))
        else:
            chunks.append(np.zeros(shape))
    return np.concatenate(chunks)


def _check_batch(spec: ModelSpec, features, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"features must be (n, {spec.input_dim}), got {x.shape}")
    if y.shape != (x.shape[0],):
        raise ShapeError(f"labels must be ({x.shape[0]},), got {y.shape}")
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    return x, y


def logits(spec: ModelSpec, params: np.ndarray, features) -> np.ndarray:
    pieces = unflatten(spec, params)
    h = np.asarray(features, dtype=np.float64)
    n_layers = len(pieces) // 2
    for i in range(n_layers):
        h = h @ pieces[2 * i] + pieces[2 * i + 1]
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward_loss_grad(spec: ModelSpec, params: np.ndarray, batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of ``batch = (features, labels)`` and its gradient."""
    x, y = _check_batch(spec, *batch)
    pieces = unflatten(spec, params)
    n = x.shape[0]
    n_layers = len(pieces) // 2

    activations = [x]
    h = x
    for i in range(n_layers):
        h = h @ pieces[2 * i] + pieces[2 * i + 1]
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
            activations.append(h)

    logp = _log_softmax(h)
    loss = -float(logp[np.arange(n), y].mean())

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = [None] * len(pieces)
    for i in reversed(range(n_layers)):
        a = activations[i]
        grads[2 * i] = a.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ pieces[2 * i].T) * (a > 0)
    return loss, np.concatenate([g.ravel() for g in grads])


def predict(spec: ModelSpec, params: np.ndarray, features) -> np.ndarray:
    return np.argmax(logits(spec, params, features), axis=1)


def evaluate(spec: ModelSpec, params: np.ndarray, test) -> float:
    """Fraction of argmax-correct predictions on ``test``."""
    x, y = _check_batch(spec, test.features, test.labels)
    return float(np.mean(predict(spec, params, x) == y))
