"""Dense networks with hand-written reverse-mode gradients and Adam.

Everything is float64. Batches are row-major: an input of shape ``(N, in)``
produces an output of shape ``(N, out)``; a 1-D input is treated as a single
row and gives a 1-D output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import NonFiniteError, ShapeError

ACTIVATIONS = ("identity", "tanh", "softplus")


def softplus(x):
    return np.logaddexp(0.0, x)


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "identity":
        return pre
    if name == "tanh":
        return np.tanh(pre)
    if name == "softplus":
        return softplus(pre)
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray | None:
    if name == "identity":
        return None
    if name == "tanh":
        return 1.0 - out * out
    return expit(pre)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"inconsistent layer shapes {self.weights.shape} / {self.bias.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer output {a.out_dim} does not feed layer input {b.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; the arrays are the live parameters."""
        params = []
        for layer in self.layers:
            params.extend((layer.weights, layer.bias))
        return params

    def copy(self) -> Mlp:
        return Mlp([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])


def init_mlp(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights and zero biases; ``len(activations) == len(sizes) - 1``."""
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
        limit = np.sqrt(6.0 / (n_in + n_out))
        layers.append(DenseLayer(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), act))
    return Mlp(layers)


def mlp_forward(mlp: Mlp, x: np.ndarray):
    """Return ``(output, tape)``; the tape holds what :func:`mlp_backward` needs."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != mlp.in_dim:
        raise ShapeError(f"input of shape {x.shape} does not match network input dim {mlp.in_dim}")
    tape = []
    for layer in mlp.layers:
        pre = h @ layer.weights.T + layer.bias
        out = _activate(layer.activation, pre)
        tape.append((h, pre, out))
        h = out
    return (h[0] if single else h), (single, tape)


def mlp_backward(mlp: Mlp, tape, output_grad: np.ndarray):
    """Backpropagate ``output_grad`` (dLoss/dOutput).

    Returns ``(param_grads, input_grad)`` where ``param_grads`` mirrors
    :meth:`Mlp.parameters`. Gradients are summed over the batch.
    """
    single, records = tape
    g = np.asarray(output_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    if len(records) != len(mlp.layers) or g.shape != records[-1][2].shape:
        raise ShapeError(f"output gradient of shape {np.shape(output_grad)} does not match the tape")
    grads: list[np.ndarray] = []
    for layer, (h_in, pre, out) in zip(reversed(mlp.layers), reversed(records)):
        local = _activation_grad(layer.activation, pre, out)
        if local is not None:
            g = g * local
        grads.append(g.sum(axis=0))
        grads.append(g.T @ h_in)
        g = g @ layer.weights
    grads.reverse()
    return grads, (g[0] if single else g)


class AdamState:
    """First/second moment accumulators for a list of parameter arrays."""

    def __init__(self, params: Sequence[np.ndarray], learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def update(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ShapeError("parameter/gradient lists do not match the optimizer state")
        for i, g in enumerate(grads):
            if g.shape != self.m[i].shape:
                raise ShapeError(f"gradient {i} has shape {g.shape}, expected {self.m[i].shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {i}; update rejected", index=i)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: AdamState, model, grads: Sequence[np.ndarray]):
    """Apply one Adam update in place to ``model.parameters()`` and return ``model``."""
    state.update(model.parameters(), grads)
    return model


def gradient_check(
    loss_fn: Callable,
    model,
    inputs,
    step: float = 1e-5,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn(model, inputs)`` must return ``(loss, grads)`` with ``grads``
    aligned to ``model.parameters()``; it must be deterministic (fix any noise
    draws inside it). The relative error of an entry is
    ``|a - n| / max(|a|, |n|, r)``, where ``r`` is the round-off resolution of
    the central difference, ``100 * eps * |loss| / step``.
    """
    params = model.parameters()
    if sum(p.size for p in params) == 0:
        return 0.0
    loss, grads = loss_fn(model, inputs)
    resolution = 100.0 * np.finfo(np.float64).eps * max(abs(loss), 1.0) / step
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        analytic = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = loss_fn(model, inputs)[0]
            flat[i] = orig - step
            minus = loss_fn(model, inputs)[0]
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(analytic[i]), abs(numeric), resolution)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return float(worst)
