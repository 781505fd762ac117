"""The initiator's autoencoder and the query-only handle to its encoder."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import LayerSpec, NetworkError, NeuralNet, TrainConfig, forward, init_net, load_net, save_net, train


@dataclass(frozen=True)
class Autoencoder:
    enc: NeuralNet
    dec: NeuralNet

    def __post_init__(self):
        if self.enc.output_dim != self.dec.input_dim:
            raise NetworkError("encoder output and decoder input dims differ")
        if self.dec.output_dim != self.enc.input_dim:
            raise NetworkError("decoder does not map back to the input space")
        if self.latent_dim > self.enc.input_dim:
            raise NetworkError("latent dim exceeds the input dim")

    @property
    def latent_dim(self) -> int:
        return self.enc.output_dim

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_net(self.enc, d / "enc.json")
        save_net(self.dec, d / "dec.json")

    @classmethod
    def load(cls, directory) -> "Autoencoder":
        d = Path(directory)
        return cls(load_net(d / "enc.json"), load_net(d / "dec.json"))


class EncoderHandle:
    """Query access to a published encoder.

    Only :meth:`encode` and public metadata are exposed; the parameters stay
    inside a closure. ``latent_range`` is the per-dimension dynamic range the
    initiator measured on its own data, published alongside the encoder so
    parties can size relative noise budgets.
    """

    __slots__ = ("_query", "input_dim", "output_dim", "latent_range", "queries")

    def __init__(self, enc: NeuralNet, latent_range=None):
        def query(x):
            return forward(enc, x)

        self._query = query
        self.input_dim = enc.input_dim
        self.output_dim = enc.output_dim
        self.latent_range = None if latent_range is None else np.asarray(latent_range, dtype=np.float64)
        self.queries = 0

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise NetworkError(f"expected input of length {self.input_dim}, got {x.shape[-1]}")
        self.queries += 1 if x.ndim == 1 else x.shape[0]
        return self._query(x)

    def __repr__(self):
        return f"EncoderHandle({self.input_dim} -> {self.output_dim})"


def build_autoencoder(d: int, h: int, hidden: Sequence[int], seed: int, output: str = "sigmoid") -> NeuralNet:
    """Stacked encoder+decoder as one net (encoder layers first, latent layer linear)."""
    enc_sizes = [d, *hidden, h]
    dec_sizes = [h, *reversed(hidden), d]
    layers = []
    for i in range(len(enc_sizes) - 1):
        layers.append(LayerSpec(enc_sizes[i], enc_sizes[i + 1], "identity" if i == len(enc_sizes) - 2 else "relu"))
    for i in range(len(dec_sizes) - 1):
        layers.append(LayerSpec(dec_sizes[i], dec_sizes[i + 1], output if i == len(dec_sizes) - 2 else "relu"))
    return init_net(layers, "autoencoder", seed)


def train_autoencoder(
    X,
    h: int,
    cfg: TrainConfig,
    hidden: Sequence[int] = (256, 128),
    seed: int = 0,
    output: str = "sigmoid",
    history: list | None = None,
) -> Autoencoder:
    """Fit Dec(Enc(x)) ~ x under squared error and return both halves."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-D sample array")
    if h > X.shape[1]:
        raise NetworkError(f"latent dim {h} exceeds feature dim {X.shape[1]}")
    net = build_autoencoder(X.shape[1], h, hidden, seed, output)
    net = train(net, X, X, cfg, history=history)
    enc, dec = net.split(len(hidden) + 1, ("encoder", "decoder"))
    return Autoencoder(enc, dec)


def encode(handle: EncoderHandle, x) -> np.ndarray:
    return handle.encode(x)


def decode(ae: Autoencoder, z) -> np.ndarray:
    return forward(ae.dec, z)


def latent_range(handle: EncoderHandle, X) -> np.ndarray:
    Z = handle.encode(X)
    return Z.max(axis=0) - Z.min(axis=0)


def publish(ae: Autoencoder, X_initiator) -> EncoderHandle:
    """Handle to ``ae.enc`` carrying the latent range measured on the initiator's data."""
    Z = forward(ae.enc, X_initiator)
    return EncoderHandle(ae.enc, latent_range=Z.max(axis=0) - Z.min(axis=0))

