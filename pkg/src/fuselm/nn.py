"""Minimal feedforward engine: linear / 1D batchnorm / relu / sigmoid
layers, exact reverse-mode gradients, and Adam. Float64 throughout; just
enough machinery for the combination networks, nothing more.

Strict train/eval modes: train-mode batchnorm normalizes with batch
statistics (biased variance) and updates running statistics, eval mode uses
the running statistics so single positions can be scored deterministically.
"""

from __future__ import annotations

import struct
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import BatchTooSmall, CacheMismatch, ShapeError


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(x)
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.reshape(x.shape)


class Linear:
    kind = "linear"

    def __init__(self, in_dim: int, out_dim: int, rng: Optional[np.random.Generator] = None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            self.W = np.zeros((out_dim, in_dim))
        else:
            bound = np.sqrt(6.0 / (in_dim + out_dim))
            self.W = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        self.b = np.zeros(out_dim)

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, tuple]:
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"linear expects {self.in_dim} features, got {x.shape[1]}")
        return x @ self.W.T + self.b, (x,)

    def backward(self, ctx: tuple, dy: np.ndarray):
        (x,) = ctx
        grads = {"W": dy.T @ x, "b": dy.sum(axis=0)}
        return dy @ self.W, grads

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


class BatchNorm1d:
    kind = "batchnorm"

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, tuple]:
        if x.shape[1] != self.dim:
            raise ShapeError(f"batchnorm expects {self.dim} features, got {x.shape[1]}")
        if train:
            B = x.shape[0]
            if B < 2:
                raise BatchTooSmall("train-mode batchnorm needs a batch of >= 2 rows")
            mean = x.mean(axis=0)
            var = x.var(axis=0)  # biased, used for normalization
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean
            self.running_var = (1 - m) * self.running_var + m * var * B / (B - 1)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        return self.gamma * xhat + self.beta, (xhat, inv_std, train)

    def backward(self, ctx: tuple, dy: np.ndarray):
        xhat, inv_std, train = ctx
        if not train:
            raise CacheMismatch("backward through an eval-mode batchnorm forward")
        B = dy.shape[0]
        grads = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
        dxhat = dy * self.gamma
        dx = (inv_std / B) * (
            B * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
        return dx, grads

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}


class ReLU:
    kind = "relu"

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, tuple]:
        mask = x > 0
        return x * mask, (mask,)

    def backward(self, ctx: tuple, dy: np.ndarray):
        (mask,) = ctx
        return dy * mask, {}

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}


class Sigmoid:
    kind = "sigmoid"

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, tuple]:
        y = sigmoid(x)
        return y, (y,)

    def backward(self, ctx: tuple, dy: np.ndarray):
        (y,) = ctx
        return dy * y * (1.0 - y), {}

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}


class ForwardCache:
    __slots__ = ("ctxs", "version", "batch_size")

    def __init__(self, ctxs, version, batch_size):
        self.ctxs = ctxs
        self.version = version
        self.batch_size = batch_size


class FeedForwardNet:
    """A straight stack of layers with explicit train/eval modes."""

    def __init__(self, layers: List):
        self.layers = layers
        self.mode = "train"
        self._version = 0  # bumped on every parameter update

    @property
    def in_dim(self) -> int:
        for layer in self.layers:
            if hasattr(layer, "in_dim"):
                return layer.in_dim
            if hasattr(layer, "dim"):
                return layer.dim
        raise ShapeError("network has no dimensioned layer")

    @property
    def out_dim(self) -> int:
        for layer in reversed(self.layers):
            if hasattr(layer, "out_dim"):
                return layer.out_dim
        raise ShapeError("network has no linear layer")

    def train(self) -> "FeedForwardNet":
        self.mode = "train"
        return self

    def eval(self) -> "FeedForwardNet":
        self.mode = "eval"
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self._run(np.asarray(x, dtype=np.float64))
        return y

    def forward_train(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        if self.mode != "train":
            raise CacheMismatch("forward_train requires train mode")
        y, ctxs = self._run(np.asarray(x, dtype=np.float64))
        return y, ForwardCache(ctxs, self._version, x.shape[0])

    def _run(self, x: np.ndarray):
        if x.ndim != 2:
            raise ShapeError(f"expected a (B, D) batch, got shape {x.shape}")
        train = self.mode == "train"
        ctxs = []
        for layer in self.layers:
            x, ctx = layer.forward(x, train)
            ctxs.append(ctx)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite network output")
        return x, ctxs

    def backward(self, cache: ForwardCache, d_out: np.ndarray):
        """Exact gradients for every parameter plus dLoss/dInput."""
        if cache.version != self._version:
            raise CacheMismatch("activation cache is stale (parameters were updated)")
        if d_out.shape[0] != cache.batch_size:
            raise CacheMismatch("gradient batch does not match cached forward")
        grads: Dict[str, np.ndarray] = {}
        dy = np.asarray(d_out, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            dy, layer_grads = self.layers[i].backward(cache.ctxs[i], dy)
            for name, g in layer_grads.items():
                grads[f"{i}.{name}"] = g
        return grads, dy

    def parameters(self) -> Dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                out[f"{i}.{name}"] = p
        return out

    def mark_updated(self) -> None:
        self._version += 1

    # -- checkpoint: magic "CNN1", little-endian ---------------------------

    _TAGS = {"linear": 0, "batchnorm": 1, "relu": 2, "sigmoid": 3}

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        chunks = [b"CNN1", struct.pack("<I", len(self.layers))]
        for layer in self.layers:
            chunks.append(struct.pack("<B", self._TAGS[layer.kind]))
            if layer.kind == "linear":
                chunks.append(struct.pack("<II", layer.in_dim, layer.out_dim))
                chunks.append(layer.W.astype("<f4").tobytes())
                chunks.append(layer.b.astype("<f4").tobytes())
            elif layer.kind == "batchnorm":
                chunks.append(struct.pack("<I", layer.dim))
                for arr in (layer.gamma, layer.beta, layer.running_mean, layer.running_var):
                    chunks.append(arr.astype("<f4").tobytes())
                chunks.append(struct.pack("<ff", layer.momentum, layer.eps))
        return b"".join(chunks)


def net_from_bytes(data: bytes, offset: int = 0) -> Tuple[FeedForwardNet, int]:
    """Parse a CNN1 blob; returns (net, bytes consumed). Loaded nets start
    in eval mode."""
    if data[offset : offset + 4] != b"CNN1":
        raise ValueError("not a network checkpoint (bad magic)")
    off = offset + 4
    (n_layers,) = struct.unpack_from("<I", data, off)
    off += 4
    layers: List = []
    for _ in range(n_layers):
        (tag,) = struct.unpack_from("<B", data, off)
        off += 1
        if tag == 0:
            in_dim, out_dim = struct.unpack_from("<II", data, off)
            off += 8
            layer = Linear(in_dim, out_dim)
            layer.W = np.frombuffer(data, "<f4", in_dim * out_dim, off).astype(
                np.float64
            ).reshape(out_dim, in_dim)
            off += 4 * in_dim * out_dim
            layer.b = np.frombuffer(data, "<f4", out_dim, off).astype(np.float64)
            off += 4 * out_dim
        elif tag == 1:
            (dim,) = struct.unpack_from("<I", data, off)
            off += 4
            layer = BatchNorm1d(dim)
            for name in ("gamma", "beta", "running_mean", "running_var"):
                setattr(layer, name, np.frombuffer(data, "<f4", dim, off).astype(np.float64))
                off += 4 * dim
            layer.momentum, layer.eps = struct.unpack_from("<ff", data, off)
            off += 8
        elif tag == 2:
            layer = ReLU()
        elif tag == 3:
            layer = Sigmoid()
        else:
            raise ValueError(f"unknown layer tag {tag}")
        layers.append(layer)
    return FeedForwardNet(layers).eval(), off - offset


def load_net(path) -> FeedForwardNet:
    with open(path, "rb") as fh:
        net, _ = net_from_bytes(fh.read())
    return net


def entropy_net(out_dim: int, hidden: int = 512, seed: int = 0) -> FeedForwardNet:
    """Two entropy features in, batchnorm, two hidden layers, sigmoid out."""
    rng = np.random.default_rng(seed)
    return FeedForwardNet([
        BatchNorm1d(2),
        Linear(2, hidden, rng), ReLU(),
        Linear(hidden, hidden, rng), ReLU(),
        Linear(hidden, out_dim, rng), Sigmoid(),
    ])


def full_net(vocab_size: int, out_dim: int, hidden: int = 512, seed: int = 0) -> FeedForwardNet:
    """Concatenated distribution pair in, otherwise same stack as entropy_net."""
    rng = np.random.default_rng(seed)
    return FeedForwardNet([
        BatchNorm1d(2 * vocab_size),
        Linear(2 * vocab_size, hidden, rng), ReLU(),
        Linear(hidden, hidden, rng), ReLU(),
        Linear(hidden, out_dim, rng), Sigmoid(),
    ])


class Adam:
    """Bias-corrected Adam over a dict of parameter arrays (in-place)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: Adam) -> Tuple[Dict[str, np.ndarray], Adam]:
    """Functional spelling of Adam.step for callers that prefer it."""
    state.step(params, grads)
    return params, state
