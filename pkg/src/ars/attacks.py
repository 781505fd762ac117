"""Adversaries of the sharing protocol.

Every attack sees the victim only through an :class:`EncoderHandle` and the
shared codes. Ground truth needed to *score* an attack (victim originals,
victim masks) is passed in explicitly and used for evaluation only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .nn import NeuralNet, TrainConfig, forward, mlp, train
from .noise import MaskVector, NoiseBudget, generate_mask, masked_ifgsm
from .representation import EncoderHandle


class AttackError(ValueError):
    pass


@dataclass
class AttackReport:
    kind: str
    per_sample: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def recompute(self) -> dict:
        """Aggregates rebuilt from the per-sample records."""
        out = {}
        if "mse" in self.per_sample:
            out["mse"] = float(np.mean(self.per_sample["mse"]))
            out["psnr"] = float(np.mean(self.per_sample["psnr"]))
        if "ssim" in self.per_sample:
            out["ssim"] = float(np.mean(self.per_sample["ssim"]))
        if "rec_acc" in self.per_sample:
            out["rec_acc"] = float(np.mean(self.per_sample["rec_acc"]))
        if "correct" in self.per_sample:
            out["accuracy"] = float(np.mean(self.per_sample["correct"]))
            out["equal_to_r"] = float(np.mean(self.per_sample["equal_to_r"]))
        return out

    def to_dict(self, include_samples: bool = True) -> dict:
        d = {"kind": self.kind, "metrics": self.metrics, "config": self.config}
        if include_samples:
            d["per_sample"] = {k: np.asarray(v).tolist() for k, v in self.per_sample.items()}
        return d

    def to_json(self, include_samples: bool = True) -> str:
        return json.dumps(self.to_dict(include_samples), sort_keys=True)

    def to_csv(self, path) -> None:
        keys = sorted(self.per_sample)
        cols = [np.asarray(self.per_sample[k]) for k in keys]
        with open(path, "w") as fh:
            fh.write("sample," + ",".join(keys) + "\n")
            for i in range(len(cols[0]) if cols else 0):
                fh.write(f"{i}," + ",".join(repr(float(c[i])) for c in cols) + "\n")


@dataclass(frozen=True)
class DecoderSpec:
    """Architecture + schedule an attacker uses for its inverse models."""

    hidden: tuple[int, ...] = (512,)
    output: str = "sigmoid"
    cfg: TrainConfig = TrainConfig(learning_rate=3e-3, batch_size=64, epochs=20, optimizer="adam")
    seed: int = 0

    def build(self, h: int, d: int, role: str = "decoder") -> NeuralNet:
        return mlp([h, *self.hidden, d], role, self.seed, hidden="relu", output=self.output)

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "output": self.output, "cfg": self.cfg.to_dict(), "seed": self.seed}


def train_substitute_decoder(X_attacker, handle: EncoderHandle, spec: DecoderSpec = DecoderSpec()) -> NeuralNet:
    """Black-box inversion: query codes of local samples, fit codes -> samples."""
    X = np.asarray(X_attacker, dtype=np.float64)
    Z = handle.encode(X)
    net = spec.build(handle.output_dim, X.shape[1])
    return train(net, Z, X, spec.cfg)


def adversarial_training_attack(
    X_attacker,
    handle: EncoderHandle,
    attacker_mask: MaskVector | None,
    budget: NoiseBudget,
    spec: DecoderSpec = DecoderSpec(),
    sdec: NeuralNet | None = None,
) -> NeuralNet:
    """Data-enhancement attack.

    The attacker fits its own substitute decoder, perturbs its own codes with
    its own mask, and fits a fresh decoder (same seed and schedule) on the
    perturbed pairs. With a zero budget the result equals the plain decoder.
    """
    X = np.asarray(X_attacker, dtype=np.float64)
    Z = handle.encode(X)
    if sdec is None:
        sdec = train(spec.build(handle.output_dim, X.shape[1]), Z, X, spec.cfg)
    if budget.is_zero:
        return sdec
    Z_hat = masked_ifgsm(Z, X, sdec, attacker_mask, budget).z_hat
    return train(spec.build(handle.output_dim, X.shape[1]), Z_hat, X, spec.cfg)


def train_attribute_extractor(
    ds_attacker,
    handle: EncoderHandle,
    k: int,
    cfg: TrainConfig = TrainConfig(learning_rate=3e-3, batch_size=64, epochs=20, loss="cross_entropy", optimizer="adam"),
    hidden: Sequence[int] = (64,),
    seed: int = 0,
) -> NeuralNet:
    """Classifier from codes to the one-hot private attribute ``k``."""
    if not 0 <= k < len(ds_attacker.A):
        raise AttackError(f"attribute index {k} out of range ({len(ds_attacker.A)} attributes)")
    if cfg.loss != "cross_entropy":
        raise AttackError("attribute extractors train with cross_entropy")
    A = ds_attacker.A[k]
    Z = handle.encode(ds_attacker.X)
    net = mlp([handle.output_dim, *hidden, A.shape[1]], "attribute_extractor", seed, output="softmax")
    return train(net, Z, A, cfg)


def run_reconstruction_attack(
    decoder: NeuralNet,
    shared,
    X_truth,
    image_shape: tuple[int, int] | None = None,
    groups=None,
    kind: str = "reconstruction",
    config: dict | None = None,
) -> AttackReport:
    """Score a decoder on shared codes against the (evaluation-only) originals."""
    Z = np.atleast_2d(np.asarray(shared, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X_truth, dtype=np.float64))
    if decoder.input_dim != Z.shape[1]:
        raise AttackError(f"decoder expects {decoder.input_dim}-dim codes, got {Z.shape[1]}")
    if Z.shape[0] != X.shape[0]:
        raise AttackError(f"{Z.shape[0]} codes but {X.shape[0]} ground-truth samples")
    X_bar = forward(decoder, Z)
    d = metrics.per_sample_mse(X, X_bar)
    per = {"mse": d, "psnr": np.asarray(metrics.psnr_from_mse(d))}
    if image_shape is not None:
        per["ssim"] = metrics.batch_ssim(X, X_bar, image_shape)
    if groups:
        per["rec_acc"] = metrics.tabular_reconstruction_accuracy(X, X_bar, [(k, a, b) for _, k, a, b in groups])
    report = AttackReport(kind, per, {}, dict(config or {}))
    report.metrics = report.recompute()
    rl = metrics.reconstruction_loss(X, X_bar)
    report.metrics["reconstruction_loss_signed"] = rl.signed
    report.metrics["reconstruction_loss_raw"] = rl.raw
    return report


def run_attribute_attack(extractor: NeuralNet, shared, A_truth, r, config: dict | None = None) -> AttackReport:
    Z = np.atleast_2d(np.asarray(shared, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A_truth, dtype=np.float64))
    if Z.shape[0] != A.shape[0]:
        raise AttackError("codes and attribute labels differ in length")
    P = forward(extractor, Z)
    rv = np.asarray(r, dtype=np.float64)
    per = {
        "correct": (np.argmax(P, axis=1) == np.argmax(A, axis=1)).astype(float),
        "equal_to_r": (np.argmax(P, axis=1) == int(np.argmax(rv))).astype(float),
    }
    report = AttackReport("attribute", per, {}, dict(config or {}))
    report.metrics = report.recompute()
    report.metrics["feature_loss"] = metrics.feature_loss(P, rv)
    return report


@dataclass
class MaskSearchResult:
    best_mask: MaskVector
    report: AttackReport
    scores: list


def mask_bruteforce_attack(
    X_attacker,
    handle: EncoderHandle,
    probe_shared,
    probe_truth,
    budget: NoiseBudget,
    candidates: int | Sequence[MaskVector],
    seed: int = 0,
    spec: DecoderSpec = DecoderSpec(),
    victim_mask: MaskVector | None = None,
) -> MaskSearchResult:
    """Try candidate masks; keep the one whose enhanced decoder best inverts the probe.

    The probe is a small set of victim (x, z_hat) pairs the attacker is
    assumed to know. ``victim_mask`` is a test-only oracle used to report the
    overlap of the chosen mask; it never influences the search.
    """
    X = np.asarray(X_attacker, dtype=np.float64)
    h = handle.output_dim
    if isinstance(candidates, int):
        if candidates < 1:
            raise AttackError("need at least one candidate mask")
        rng = np.random.default_rng(seed)
        cands = [generate_mask(h, int(s)) for s in rng.integers(0, 2**63 - 1, size=candidates)]
    else:
        cands = list(candidates)
        if not cands:
            raise AttackError("need at least one candidate mask")
    Z = handle.encode(X)
    sdec = train(spec.build(h, X.shape[1]), Z, X, spec.cfg)
    scores = []
    best = None
    for i, m in enumerate(cands):
        dec = adversarial_training_attack(X, handle, m, budget, spec, sdec=sdec)
        rep = run_reconstruction_attack(dec, probe_shared, probe_truth)
        scores.append(rep.metrics["mse"])
        if best is None or rep.metrics["mse"] < best[1].metrics["mse"]:
            best = (i, rep)
    i, rep = best
    rep.kind = "mask_search"
    rep.config = {"candidates": len(cands), "seed": seed, "decoder": spec.to_dict(), "budget": budget.to_dict()}
    rep.metrics["best_index"] = i
    if victim_mask is not None:
        rep.metrics["best_overlap"] = metrics.overlap_rate(cands[i].m, victim_mask.m)
        rep.metrics["candidate_overlaps"] = [metrics.overlap_rate(c.m, victim_mask.m) for c in cands]
    return MaskSearchResult(cands[i], rep, scores)
