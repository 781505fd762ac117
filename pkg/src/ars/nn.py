"""Small feed-forward network engine on numpy.

Networks are immutable values: :func:`train` returns a new :class:`NeuralNet`.
Besides parameter training, the engine computes exact gradients of a loss
with respect to the network *input*, which the adversarial-noise code needs.

All arithmetic is float64.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Sequence

import numpy as np

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh", "softmax")
ROLES = ("encoder", "decoder", "classifier", "attribute_extractor", "autoencoder")
LOSSES = ("squared_error", "cross_entropy")


class NetworkError(ValueError):
    """Raised for malformed networks or inputs of the wrong shape."""


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss turns NaN or infinite."""

    def __init__(self, epoch: int, batch: int, loss: float, learning_rate: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        self.learning_rate = learning_rate
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}; "
            f"learning rate {learning_rate} is probably too high"
        )


class NonFiniteGradientError(FloatingPointError):
    """Raised when backpropagation produces a NaN/Inf. ``layer`` is 0-based."""

    def __init__(self, layer: int):
        self.layer = layer
        super().__init__(f"non-finite gradient first seen at layer {layer}")


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "identity"

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise NetworkError(f"layer dims must be positive, got {self.input_dim}x{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise NetworkError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 10
    loss: str = "squared_error"
    shuffle_seed: int = 0
    momentum: float = 0.0
    optimizer: str = "sgd"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "loss": self.loss,
            "shuffle_seed": self.shuffle_seed,
            "momentum": self.momentum,
            "optimizer": self.optimizer,
        }


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NeuralNet:
    layers: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    role: str = "encoder"
    seed: int = 0

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise NetworkError("a network needs at least one layer")
        if self.role not in ROLES:
            raise NetworkError(f"unknown role {self.role!r}")
        for i in range(len(layers) - 1):
            if layers[i].output_dim != layers[i + 1].input_dim:
                raise NetworkError(
                    f"layer {i} outputs {layers[i].output_dim} but layer {i + 1} expects {layers[i + 1].input_dim}"
                )
            if layers[i].activation == "softmax":
                raise NetworkError("softmax is only allowed on the final layer")
        if len(self.weights) != len(layers) or len(self.biases) != len(layers):
            raise NetworkError("one weight matrix and one bias vector per layer")
        weights = tuple(_frozen(w) for w in self.weights)
        biases = tuple(_frozen(b) for b in self.biases)
        for i, (spec, w, b) in enumerate(zip(layers, weights, biases)):
            if w.shape != (spec.input_dim, spec.output_dim) or b.shape != (spec.output_dim,):
                raise NetworkError(f"parameter shapes of layer {i} do not match its spec")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NetworkError(f"non-finite parameters in layer {i}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def __eq__(self, other):
        if not isinstance(other, NeuralNet):
            return NotImplemented
        return (
            self.layers == other.layers
            and self.role == other.role
            and self.seed == other.seed
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    __hash__ = None

    def with_params(self, weights, biases) -> "NeuralNet":
        return NeuralNet(self.layers, tuple(weights), tuple(biases), self.role, self.seed)

    def split(self, at: int, roles: tuple[str, str]) -> tuple["NeuralNet", "NeuralNet"]:
        """Cut the layer stack in two after layer ``at - 1``."""
        if not 0 < at < len(self.layers):
            raise NetworkError("split point must leave layers on both sides")
        head = NeuralNet(self.layers[:at], self.weights[:at], self.biases[:at], roles[0], self.seed)
        tail = NeuralNet(self.layers[at:], self.weights[at:], self.biases[at:], roles[1], self.seed)
        return head, tail


def init_net(layers: Sequence[LayerSpec], role: str, seed: int) -> NeuralNet:
    """Glorot-uniform weights, zero biases, drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in layers:
        limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return NeuralNet(tuple(layers), tuple(weights), tuple(biases), role, seed)


def mlp(
    sizes: Sequence[int],
    role: str,
    seed: int,
    hidden: str = "relu",
    output: str = "identity",
) -> NeuralNet:
    """Fully connected net through ``sizes`` (input dim first)."""
    if len(sizes) < 2:
        raise NetworkError("need at least input and output sizes")
    layers = []
    for i in range(len(sizes) - 1):
        act = output if i == len(sizes) - 2 else hidden
        layers.append(LayerSpec(int(sizes[i]), int(sizes[i + 1]), act))
    return init_net(layers, role, seed)


# -- activations -------------------------------------------------------------


def _activate(a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return a
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        e = np.exp(a[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if kind == "tanh":
        return np.tanh(a)
    if kind == "softmax":
        shifted = a - a.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise NetworkError(f"unknown activation {kind!r}")


def _activation_backward(grad_out: np.ndarray, pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return grad_out
    if kind == "relu":
        # subgradient 0 at the kink
        return grad_out * (pre > 0)
    if kind == "sigmoid":
        return grad_out * post * (1.0 - post)
    if kind == "tanh":
        return grad_out * (1.0 - post * post)
    if kind == "softmax":
        return post * (grad_out - np.sum(grad_out * post, axis=-1, keepdims=True))
    raise NetworkError(f"unknown activation {kind!r}")


def _as_batch(net: NeuralNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise NetworkError(f"expected input of length {net.input_dim}, got shape {np.shape(x)}")
    return x, single


def _forward_cache(net: NeuralNet, x: np.ndarray):
    pres, posts = [], [x]
    h = x
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        a = h @ w + b
        h = _activate(a, spec.activation)
        pres.append(a)
        posts.append(h)
    return pres, posts


def forward(net: NeuralNet, x) -> np.ndarray:
    """Evaluate the network on one vector or a batch (rows)."""
    xb, single = _as_batch(net, x)
    h = xb
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        h = _activate(h @ w + b, spec.activation)
    return h[0] if single else h


# -- losses ------------------------------------------------------------------


def per_sample_loss(output: np.ndarray, target: np.ndarray, loss: str) -> np.ndarray:
    """Loss of each row. squared_error is the summed squared difference."""
    if loss == "squared_error":
        return np.sum((output - target) ** 2, axis=-1)
    if loss == "cross_entropy":
        return -np.sum(target * np.log(np.clip(output, 1e-300, None)), axis=-1)
    raise NetworkError(f"unknown loss {loss!r}")


def _check_targets(net: NeuralNet, target, n: int) -> np.ndarray:
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = np.broadcast_to(t, (n, t.shape[0]))
    if t.shape != (n, net.output_dim):
        raise NetworkError(f"expected targets of length {net.output_dim}, got shape {np.shape(target)}")
    return t


def _backward(net, pres, posts, target, loss, fused_ce, check_finite=False):
    """Backprop d(sum of per-sample losses) through the net.

    Returns per-layer (dW, db) and the gradient w.r.t. the input batch.
    """
    out = posts[-1]
    if fused_ce:
        # softmax + cross-entropy: gradient w.r.t. logits is p - t
        g = out - target
        start = len(net.layers) - 1
        g_pre = g
    elif loss == "squared_error":
        g = 2.0 * (out - target)
        start = len(net.layers) - 1
        g_pre = None
    else:
        raise NetworkError("cross_entropy requires a softmax output layer")

    grads_w = [None] * len(net.layers)
    grads_b = [None] * len(net.layers)
    for i in range(start, -1, -1):
        spec = net.layers[i]
        if g_pre is None:
            g_pre = _activation_backward(g, pres[i], posts[i + 1], spec.activation)
        if check_finite and not np.all(np.isfinite(g_pre)):
            raise NonFiniteGradientError(i)
        grads_w[i] = posts[i].T @ g_pre
        grads_b[i] = g_pre.sum(axis=0)
        g = g_pre @ net.weights[i].T
        if check_finite and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(i)
        g_pre = None
    return grads_w, grads_b, g


def _uses_fused_ce(net: NeuralNet, loss: str) -> bool:
    last = net.layers[-1].activation
    if loss == "cross_entropy":
        if last != "softmax":
            raise NetworkError("cross_entropy requires a softmax output layer")
        return True
    return False


def input_gradient(net: NeuralNet, x, loss: str, target) -> np.ndarray:
    """Gradient of each sample's loss with respect to that sample's input.

    Accepts a single vector or a batch; the result has the shape of ``x``.
    """
    xb, single = _as_batch(net, x)
    t = _check_targets(net, target, xb.shape[0])
    fused = _uses_fused_ce(net, loss)
    with np.errstate(over="ignore", invalid="ignore"):
        pres, posts = _forward_cache(net, xb)
        # weight grads are wasted work here, but the batch is small next to training
        _, _, g = _backward(net, pres, posts, t, loss, fused, check_finite=True)
    return g[0] if single else g


def loss_value(net: NeuralNet, x, target, loss: str) -> float:
    """Mean per-sample loss over a batch."""
    xb, _ = _as_batch(net, x)
    t = _check_targets(net, target, xb.shape[0])
    return float(np.mean(per_sample_loss(forward(net, xb), t, loss)))


# -- training ----------------------------------------------------------------


def train(net: NeuralNet, inputs, targets, cfg: TrainConfig, history: list | None = None) -> NeuralNet:
    """Mini-batch SGD (optionally with momentum) or Adam on the mean per-sample loss.

    Returns a new network. With ``optimizer="adam"``, ``momentum`` is ignored
    and the usual (0.9, 0.999, 1e-8) moment constants apply.

    ``history``, when given, receives the mean training loss before the first
    epoch followed by the running mean loss of every epoch.
    """
    X, _ = _as_batch(net, inputs)
    n = X.shape[0]
    if n == 0:
        raise NetworkError("cannot train on an empty dataset")
    T = _check_targets(net, targets, n)
    fused = _uses_fused_ce(net, cfg.loss)
    if net.layers[-1].activation == "softmax" and not fused:
        raise NetworkError("softmax outputs train only with cross_entropy")

    if cfg.epochs == 0:
        return net
    if history is not None:
        history.append(loss_value(net, X, T, cfg.loss))

    weights = [np.array(w) for w in net.weights]
    biases = [np.array(b) for b in net.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    # mutable view used during the loop only
    work = SimpleNamespace(layers=net.layers, weights=weights, biases=biases)

    rng = np.random.default_rng(cfg.shuffle_seed)
    bs = min(cfg.batch_size, n)
    lr, mu = cfg.learning_rate, cfg.momentum
    adam = cfg.optimizer == "adam"
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    sq_w = [np.zeros_like(w) for w in weights]
    sq_b = [np.zeros_like(b) for b in biases]
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            xb, tb = X[idx], T[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                pres, posts = _forward_cache(work, xb)
                batch_loss = per_sample_loss(posts[-1], tb, cfg.loss)
                s = float(batch_loss.sum())
                if not np.isfinite(s):
                    raise TrainingDivergedError(epoch, bi, s, lr)
                gw, gb, _ = _backward(work, pres, posts, tb, cfg.loss, fused)
            scale = 1.0 / len(idx)
            step += 1
            for i in range(len(weights)):
                if adam:
                    c1, c2 = 1.0 - b1**step, 1.0 - b2**step
                    for p, g, m1, m2 in ((weights[i], gw[i] * scale, vel_w[i], sq_w[i]),
                                         (biases[i], gb[i] * scale, vel_b[i], sq_b[i])):
                        m1 *= b1
                        m1 += (1.0 - b1) * g
                        m2 *= b2
                        m2 += (1.0 - b2) * g * g
                        p -= lr * (m1 / c1) / (np.sqrt(m2 / c2) + eps_adam)
                elif mu:
                    vel_w[i] *= mu
                    vel_w[i] -= lr * scale * gw[i]
                    vel_b[i] *= mu
                    vel_b[i] -= lr * scale * gb[i]
                    weights[i] += vel_w[i]
                    biases[i] += vel_b[i]
                else:
                    weights[i] -= lr * scale * gw[i]
                    biases[i] -= lr * scale * gb[i]
            total += s
        mean = total / n
        if not np.isfinite(mean):
            raise TrainingDivergedError(epoch, -1, mean, lr)
        if history is not None:
            history.append(mean)
    for i in range(len(weights)):
        if not (np.all(np.isfinite(weights[i])) and np.all(np.isfinite(biases[i]))):
            raise TrainingDivergedError(cfg.epochs - 1, -1, float("nan"), lr)
    return net.with_params(weights, biases)


# -- serialization -----------------------------------------------------------


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64).reshape(shape)


def net_to_dict(net: NeuralNet) -> dict:
    return {
        "layers": [
            {"input_dim": s.input_dim, "output_dim": s.output_dim, "activation": s.activation}
            for s in net.layers
        ],
        "params": [{"W": _b64(w), "b": _b64(b)} for w, b in zip(net.weights, net.biases)],
        "role": net.role,
        "seed": net.seed,
    }


def net_from_dict(doc: dict) -> NeuralNet:
    layers = tuple(LayerSpec(**spec) for spec in doc["layers"])
    weights = tuple(_unb64(p["W"], (s.input_dim, s.output_dim)) for p, s in zip(doc["params"], layers))
    biases = tuple(_unb64(p["b"], (s.output_dim,)) for p, s in zip(doc["params"], layers))
    return NeuralNet(layers, weights, biases, doc["role"], int(doc["seed"]))


def save_net(net: NeuralNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(net_to_dict(net), fh)


def load_net(path) -> NeuralNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
