"""Dense ReLU classifier with hand-written reverse-mode gradients.

Parameters live in one flat float64 vector. Each layer contributes its
weight matrix (row-major, shape ``(n_out, n_in)``) followed by its bias.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class NumericalError(ArithmeticError):
    """Raised when a loss or gradient stops being finite."""


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] < 2:
            raise ValueError("a classifier needs at least two classes")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    # The Hessian probes only need these two hooks, so any object that
    # provides them (e.g. a quadratic test surrogate) can stand in for a net.
    def sample_losses(self, params, inputs, labels) -> np.ndarray:
        return forward(params, self, inputs, labels).losses

    def mean_grad(self, params, inputs, labels) -> np.ndarray:
        return grad_params(params, self, inputs, labels)

    def sample_slopes(self, params, inputs, labels, direction) -> np.ndarray:
        return directional_slopes(params, self, inputs, labels, direction)


class ForwardResult(NamedTuple):
    logits: np.ndarray
    probs: np.ndarray
    losses: np.ndarray


def layer_shapes(spec: NetworkSpec) -> list[tuple[int, int]]:
    return list(zip(spec.layer_sizes[1:], spec.layer_sizes[:-1]))


def unpack(params: np.ndarray, spec: NetworkSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into ``(W, b)`` views, one per layer."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.n_params:
        raise ValueError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers = []
    offset = 0
    for n_out, n_in in layer_shapes(spec):
        w = params[offset:offset + n_out * n_in].reshape(n_out, n_in)
        offset += n_out * n_in
        b = params[offset:offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def pack(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


def init_network(spec: NetworkSpec) -> np.ndarray:
    """He-style uniform weights (limit ``sqrt(6 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(spec.seed)
    layers = []
    for n_out, n_in in layer_shapes(spec):
        limit = np.sqrt(6.0 / n_in)
        layers.append((rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out)))
    return pack(layers)


def check_batch(spec: NetworkSpec, inputs, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[1] != spec.n_inputs:
        raise ValueError(f"inputs must have shape (B, {spec.n_inputs}), got {x.shape}")
    if y.shape != (x.shape[0],):
        raise ValueError(f"labels must have shape ({x.shape[0]},), got {y.shape}")
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= spec.n_classes:
        raise ValueError(f"labels must lie in [0, {spec.n_classes})")
    return x, y


def _forward_cache(layers, x):
    acts = [x]
    pre = []
    h = x
    for k, (w, b) in enumerate(layers):
        a = h @ w.T + b
        if k < len(layers) - 1:
            pre.append(a)
            h = np.maximum(a, 0.0)
            acts.append(h)
        else:
            h = a
    return h, acts, pre


def _softmax_ce(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    sums = expd.sum(axis=1, keepdims=True)
    probs = expd / sums
    losses = np.log(sums[:, 0]) - shifted[np.arange(len(y)), y]
    return probs, losses


def forward(params, spec: NetworkSpec, inputs, labels) -> ForwardResult:
    x, y = check_batch(spec, inputs, labels)
    logits, _, _ = _forward_cache(unpack(params, spec), x)
    probs, losses = _softmax_ce(logits, y)
    return ForwardResult(logits, probs, losses)


def predict_proba(params, spec: NetworkSpec, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    logits, _, _ = _forward_cache(unpack(params, spec), x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def _backward(layers, acts, pre, dlogits, want_params=True, want_inputs=False):
    grads = []
    delta = dlogits
    dx = None
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        if want_params:
            grads.append((delta.T @ acts[k], delta.sum(axis=0)))
        if k > 0:
            delta = (delta @ w) * (pre[k - 1] > 0)
        elif want_inputs:
            dx = delta @ w
    grads.reverse()
    return grads, dx


def _loss_and_dlogits(params, spec, inputs, labels):
    x, y = check_batch(spec, inputs, labels)
    layers = unpack(params, spec)
    logits, acts, pre = _forward_cache(layers, x)
    probs, losses = _softmax_ce(logits, y)
    if not np.all(np.isfinite(losses)):
        raise NumericalError("non-finite loss in forward pass")
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    return layers, acts, pre, losses, dlogits


def grad_params(params, spec: NetworkSpec, inputs, labels) -> np.ndarray:
    """Gradient of the batch-mean cross-entropy with respect to the parameters."""
    layers, acts, pre, _, dlogits = _loss_and_dlogits(params, spec, inputs, labels)
    grads, _ = _backward(layers, acts, pre, dlogits / dlogits.shape[0])
    g = pack(grads)
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite parameter gradient")
    return g


def loss_and_grad_inputs(params, spec: NetworkSpec, inputs, labels):
    """Per-sample losses and per-sample input gradients (each row is d loss_i / d x_i)."""
    layers, acts, pre, losses, dlogits = _loss_and_dlogits(params, spec, inputs, labels)
    _, dx = _backward(layers, acts, pre, dlogits, want_params=False, want_inputs=True)
    if not np.all(np.isfinite(dx)):
        raise NumericalError("non-finite input gradient")
    return losses, dx


def grad_inputs(params, spec: NetworkSpec, inputs, labels) -> np.ndarray:
    return loss_and_grad_inputs(params, spec, inputs, labels)[1]


def directional_slopes(params, spec: NetworkSpec, inputs, labels, direction) -> np.ndarray:
    """Per-sample ``direction . grad_theta loss_i`` from a single backward pass."""
    layers, acts, pre, _, dlogits = _loss_and_dlogits(params, spec, inputs, labels)
    dirs = unpack(direction, spec)
    out = np.zeros(dlogits.shape[0])
    delta = dlogits
    for k in range(len(layers) - 1, -1, -1):
        vw, vb = dirs[k]
        out += np.sum(delta * (acts[k] @ vw.T + vb), axis=1)
        if k > 0:
            delta = (delta @ layers[k][0]) * (pre[k - 1] > 0)
    return out
