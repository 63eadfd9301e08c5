"""Small fully connected networks with hand-written backprop.

Weights are stored as ``(out, in)`` matrices, so a layer computes
``z = W @ x + b``. Hidden layers use tanh, the output layer is linear.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError

ACTIVATIONS = ("tanh",)


@dataclass(frozen=True)
class MlpParams:
    layer_sizes: tuple
    weights: tuple
    biases: tuple
    activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=float) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=float) for b in self.biases))
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ShapeMismatchError(f"need at least two positive layer sizes, got {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeMismatchError("one weight matrix and bias vector per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ShapeMismatchError(
                    f"layer {i}: expected W{(sizes[i + 1], sizes[i])} b({sizes[i + 1]},), "
                    f"got W{w.shape} b{b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self):
        """Interleaved ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def with_flat(self, vector) -> "MlpParams":
        vector = np.asarray(vector, dtype=float)
        n = sum(w.size + b.size for w, b in zip(self.weights, self.biases))
        if vector.shape != (n,):
            raise ShapeMismatchError(f"expected {n} parameters, got shape {vector.shape}")
        ws, bs, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vector[k:k + w.size].reshape(w.shape))
            k += w.size
            bs.append(vector[k:k + b.size].copy())
            k += b.size
        return MlpParams(self.layer_sizes, tuple(ws), tuple(bs), self.activation)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def __eq__(self, other):
        if not isinstance(other, MlpParams):
            return NotImplemented
        return (self.layer_sizes == other.layer_sizes and self.activation == other.activation
                and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())))

    __hash__ = None


def init_mlp(layer_sizes, rng: np.random.Generator) -> MlpParams:
    """Uniform ``+-1/sqrt(fan_in)`` initialization for weights and biases."""
    sizes = tuple(int(n) for n in layer_sizes)
    ws, bs = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        ws.append(rng.uniform(-bound, bound, (n_out, n_in)))
        bs.append(rng.uniform(-bound, bound, n_out))
    return MlpParams(sizes, tuple(ws), tuple(bs))


def zeros_mlp(layer_sizes) -> MlpParams:
    sizes = tuple(int(n) for n in layer_sizes)
    return MlpParams(sizes, tuple(np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])),
                     tuple(np.zeros(o) for o in sizes[1:]))


def forward(net: MlpParams, x):
    """Output vector and the cache of layer inputs needed by :func:`backward`."""
    h = np.asarray(x, dtype=float)
    if h.shape != (net.n_in,):
        raise ShapeMismatchError(f"input shape {h.shape} does not match ({net.n_in},)")
    inputs = []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = w @ h + b
        h = z if i == last else np.tanh(z)
    # tanh outputs are enough to recover the derivative 1 - h^2
    inputs.append(h)
    return h, inputs


def backward(net: MlpParams, cache, grad_out):
    """Gradients of a scalar loss w.r.t. every weight and bias.

    ``grad_out`` is dLoss/dOutput. Returns ``(grad_weights, grad_biases)``
    as lists aligned with ``net.weights`` and ``net.biases``.
    """
    delta = np.asarray(grad_out, dtype=float)
    n = len(net.weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        x_in = cache[i]
        gw[i] = np.outer(delta, x_in)
        gb[i] = delta
        if i > 0:
            # x_in = tanh(z_{i-1})
            delta = (net.weights[i].T @ delta) * (1.0 - x_in * x_in)
    return gw, gb


def sgd(net: MlpParams, gw, gb, lr: float) -> MlpParams:
    """New parameters ``p - lr * grad``; the input net is left untouched."""
    ws = tuple(w - lr * g for w, g in zip(net.weights, gw))
    bs = tuple(b - lr * g for b, g in zip(net.biases, gb))
    return MlpParams(net.layer_sizes, ws, bs, net.activation)
