"""Small fully connected networks with explicit forward/backward passes.

Parameters live in one flat float64 vector so the networks plug directly
into the generic problem abstraction. Layout per layer: weight matrix of
shape (fan_in, fan_out) in row-major order, then the bias vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

Array = np.ndarray

ACTIVATIONS = ("identity", "relu", "sigmoid", "softmax")

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    activation: str

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


def _apply_activation(kind: str, z: Array) -> Array:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(0.0, z)
    if kind == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    # softmax, rowwise, shifted for stability
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activation_backward(kind: str, z: Array, a: Array, grad_a: Array) -> Array:
    if kind == "identity":
        return grad_a
    if kind == "relu":
        # Derivative at the kink z == 0 is taken as 0.
        return grad_a * (z > 0)
    if kind == "sigmoid":
        return grad_a * a * (1.0 - a)
    # softmax: J^T v = a * (v - <v, a>) rowwise
    dot = (grad_a * a).sum(axis=1, keepdims=True)
    return a * (grad_a - dot)


class _Cache:
    """Forward activations retained for one backward pass."""

    __slots__ = ("params", "inputs", "pre", "post")

    def __init__(self, params, inputs, pre, post):
        self.params = params
        self.inputs = inputs
        self.pre = pre
        self.post = post


class Mlp:
    """Chain of dense layers acting on batches of row vectors."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("need at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}")
        self.layers = layers
        self.input_dim = layers[0].fan_in
        self.output_dim = layers[-1].fan_out
        self._slices = []
        offset = 0
        for spec in layers:
            w_size = spec.fan_in * spec.fan_out
            self._slices.append((offset, offset + w_size, offset + w_size + spec.fan_out))
            offset += w_size + spec.fan_out
        self.num_params = offset

    def init_params(self, rng: np.random.Generator) -> Array:
        """Uniform fan-balanced initialization; biases start at zero."""
        params = np.zeros(self.num_params)
        for spec, (w_lo, w_hi, _) in zip(self.layers, self._slices):
            bound = np.sqrt(6.0 / (spec.fan_in + spec.fan_out))
            params[w_lo:w_hi] = rng.uniform(-bound, bound, size=w_hi - w_lo)
        return params

    def unpack(self, params: Array):
        """Per-layer (W, b) views into the flat parameter vector."""
        if params.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got shape {params.shape}")
        out = []
        for spec, (w_lo, w_hi, b_hi) in zip(self.layers, self._slices):
            out.append((params[w_lo:w_hi].reshape(spec.fan_in, spec.fan_out), params[w_hi:b_hi]))
        return out

    def forward(self, params: Array, inputs) -> tuple[Array, _Cache]:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.input_dim:
            raise ValueError(f"input width {inputs.shape[1]} does not match first layer fan_in {self.input_dim}")
        pre, post = [], []
        a = inputs
        for spec, (w, b) in zip(self.layers, self.unpack(params)):
            z = a @ w + b
            a = _apply_activation(spec.activation, z)
            pre.append(z)
            post.append(a)
        return a, _Cache(params, inputs, pre, post)

    def backward(self, params: Array, cache: _Cache, grad_out) -> tuple[Array, Array]:
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (flat parameter gradient, gradient w.r.t. the inputs). The
        cache must come from a forward pass with the same parameters.
        """
        if cache.params is not params and not np.array_equal(cache.params, params):
            raise ValueError("stale cache: backward called with different parameters than forward")
        grad_a = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if grad_a.shape != cache.post[-1].shape:
            raise ValueError(f"grad_out shape {grad_a.shape} does not match output shape {cache.post[-1].shape}")
        grad_params = np.zeros(self.num_params)
        weights = self.unpack(params)
        for idx in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[idx]
            z, a = cache.pre[idx], cache.post[idx]
            layer_in = cache.inputs if idx == 0 else cache.post[idx - 1]
            grad_z = _activation_backward(spec.activation, z, a, grad_a)
            w_lo, w_hi, b_hi = self._slices[idx]
            grad_params[w_lo:w_hi] = (layer_in.T @ grad_z).ravel()
            grad_params[w_hi:b_hi] = grad_z.sum(axis=0)
            grad_a = grad_z @ weights[idx][0].T
        return grad_params, grad_a


def ce_values(probs: Array, labels) -> Array:
    """Per-row cross entropy -log p[label]; probabilities below 1e-12 are clamped."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    picked = probs[np.arange(probs.shape[0]), labels]
    if (picked < PROB_FLOOR).any():
        warnings.warn("cross entropy saw probabilities below 1e-12; clamping", RuntimeWarning)
        picked = np.maximum(picked, PROB_FLOOR)
    return -np.log(picked)


def ce_grad(probs: Array, labels) -> Array:
    """d(cross entropy)/d(probs), rows independent."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    rows = np.arange(probs.shape[0])
    grad = np.zeros_like(probs)
    grad[rows, labels] = -1.0 / np.maximum(probs[rows, labels], PROB_FLOOR)
    return grad


def ce_loss(probs, label) -> float:
    return float(ce_values(probs, label)[0])


def mse_values(targets: Array, outputs: Array) -> Array:
    """Per-row mean squared error over pixels."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    diff = outputs - targets
    return (diff * diff).mean(axis=1)


def mse_grad(targets: Array, outputs: Array) -> Array:
    """d(mse)/d(outputs), rows independent."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    return 2.0 * (outputs - targets) / targets.shape[1]


def mse_loss(target, output) -> float:
    return float(mse_values(target, output)[0])
