"""Small dense networks with hand-written forward and backward passes.

Batches are row-major: an input of shape ``(batch, in_dim)`` is mapped by
``x @ W + b`` with ``W`` of shape ``(in_dim, out_dim)``.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")
MAGIC = b"RDPGNET1"


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(tag, z):
    if tag == "identity":
        return z
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "sigmoid":
        return _sigmoid(z)
    raise ValueError(f"unknown activation {tag!r}")


def activate_grad(tag, z, a):
    """Derivative of the activation at ``z`` given its output ``a``."""
    if tag == "identity":
        return np.ones_like(z)
    if tag == "relu":
        return (z > 0).astype(z.dtype)
    if tag == "tanh":
        return 1.0 - a * a
    if tag == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {tag!r}")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight shape {self.weight.shape}"
            )


@dataclass(frozen=True)
class DenseNet:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError(
                    f"layer dimensions do not chain: {a.weight.shape} -> {b.weight.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [l.weight.shape[1] for l in self.layers]

    def params(self):
        for layer in self.layers:
            yield layer.weight
            yield layer.bias

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def __call__(self, x):
        return forward(self, x)[1]


@dataclass(frozen=True)
class Cache:
    """Per-layer inputs, pre-activations and outputs from one forward pass."""

    inputs: tuple[np.ndarray, ...]
    pre: tuple[np.ndarray, ...]
    post: tuple[np.ndarray, ...]
    sizes: tuple[int, ...]


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_error: np.ndarray

    def flat(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(
            tuple(a + b for a, b in zip(self.weights, other.weights)),
            tuple(a + b for a, b in zip(self.biases, other.biases)),
            self.input_error + other.input_error,
        )


def init_dense_net(sizes, activations, rng: np.random.Generator) -> DenseNet:
    """Glorot-uniform weights, zero biases.

    ``activations`` has one tag per layer, i.e. ``len(sizes) - 1`` entries.
    """
    sizes = list(sizes)
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes, sizes[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append(Layer(w, np.zeros(fan_out), act))
    return DenseNet(tuple(layers))


def mlp(input_dim, hidden, output_dim, hidden_act, output_act, rng) -> DenseNet:
    sizes = [input_dim, *hidden, output_dim]
    acts = [hidden_act] * len(hidden) + [output_act]
    return init_dense_net(sizes, acts, rng)


def forward(net: DenseNet, x) -> tuple[Cache, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"input has shape {x.shape}, network expects (*, {net.input_dim})")
    inputs, pre, post = [], [], []
    a = x
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.weight + layer.bias
        a = activate(layer.activation, z)
        pre.append(z)
        post.append(a)
    return Cache(tuple(inputs), tuple(pre), tuple(post), tuple(net.sizes)), a


def output_error_from_grad(net: DenseNet, cache: Cache, grad_out) -> np.ndarray:
    """Turn dLoss/d(output) into the error at the last pre-activation."""
    last = net.layers[-1]
    return np.asarray(grad_out) * activate_grad(last.activation, cache.pre[-1], cache.post[-1])


def backward(net: DenseNet, cache: Cache, output_error) -> Gradients:
    """Backpropagate an error given at the last layer's pre-activation.

    ``output_error`` is dLoss/dz for the final layer, shape ``(batch, out_dim)``.
    The returned ``input_error`` is dLoss/dx for the network input.
    """
    if tuple(cache.sizes) != tuple(net.sizes) or len(cache.pre) != len(net.layers):
        raise ValueError("cache does not come from a forward pass of this network")
    delta = np.asarray(output_error, dtype=float)
    if delta.shape != cache.pre[-1].shape:
        raise ValueError(f"output error shape {delta.shape} != {cache.pre[-1].shape}")
    n = len(net.layers)
    gw = [None] * n
    gb = [None] * n
    for i in range(n - 1, -1, -1):
        layer = net.layers[i]
        gw[i] = cache.inputs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        upstream = delta @ layer.weight.T
        if i > 0:
            prev = net.layers[i - 1]
            delta = upstream * activate_grad(prev.activation, cache.pre[i - 1], cache.post[i - 1])
        else:
            delta = upstream
    return Gradients(tuple(gw), tuple(gb), delta)


def cross_entropy_loss(predictions, labels, eps: float = 1e-12) -> tuple[float, np.ndarray]:
    """Summed binary cross-entropy and its error at the sigmoid pre-activation.

    The returned error is ``p - y``, which is what ``backward`` expects when the
    final activation is a sigmoid.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(p.shape)
    if np.any((p <= 0) | (p >= 1)):
        log.debug("clamping %d predictions at the unit-interval boundary",
                  int(np.sum((p <= 0) | (p >= 1))))
    pc = np.clip(p, eps, 1.0 - eps)
    loss = -float(np.sum(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))
    return loss, p - y


def block_softmax(z, sizes) -> np.ndarray:
    """Softmax applied independently to consecutive column blocks of ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    off = 0
    for size in sizes:
        blk = z[:, off:off + size]
        e = np.exp(blk - blk.max(axis=1, keepdims=True))
        out[:, off:off + size] = e / e.sum(axis=1, keepdims=True)
        off += size
    if off != z.shape[1]:
        raise ValueError(f"block sizes sum to {off}, input has {z.shape[1]} columns")
    return out


def block_softmax_backward(s, grad, sizes) -> np.ndarray:
    """Vector-Jacobian product of ``block_softmax`` given its output ``s``."""
    out = np.empty_like(s)
    off = 0
    for size in sizes:
        sl = slice(off, off + size)
        g = grad[:, sl]
        out[:, sl] = s[:, sl] * (g - np.sum(g * s[:, sl], axis=1, keepdims=True))
        off += size
    return out


def sgd_update(net: DenseNet, grads: Gradients, learning_rate: float) -> DenseNet:
    if len(grads.weights) != len(net.layers):
        raise ValueError("gradient does not match network depth")
    layers = []
    for layer, gw, gb in zip(net.layers, grads.weights, grads.biases):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise ValueError("gradient shapes do not match network parameters")
        layers.append(Layer(layer.weight - learning_rate * gw,
                            layer.bias - learning_rate * gb, layer.activation))
    return DenseNet(tuple(layers))


# Checkpoint layout, all little-endian:
#   8 bytes magic "RDPGNET1", uint32 layer count, then per layer:
#   uint32 in_dim, uint32 out_dim, uint8 activation index,
#   in_dim*out_dim float64 weights (row-major), out_dim float64 biases.

def to_bytes(net: DenseNet) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        fan_in, fan_out = layer.weight.shape
        buf.write(struct.pack("<IIB", fan_in, fan_out, ACTIVATIONS.index(layer.activation)))
        buf.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return buf.getvalue()


def from_bytes(data: bytes) -> DenseNet:
    if data[:8] != MAGIC:
        raise ValueError("not a network checkpoint (bad magic bytes)")
    (count,) = struct.unpack_from("<I", data, 8)
    off = 12
    layers = []
    for _ in range(count):
        fan_in, fan_out, tag = struct.unpack_from("<IIB", data, off)
        off += 9
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=off)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        layers.append(Layer(w.reshape(fan_in, fan_out).astype(float), b.astype(float),
                            ACTIVATIONS[tag]))
    if off != len(data):
        raise ValueError(f"checkpoint has {len(data) - off} trailing bytes")
    return DenseNet(tuple(layers))


def save(net: DenseNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(net))


def load(path) -> DenseNet:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
