"""Utility and privacy metrics.

Reconstruction quality (MSE, PSNR, SSIM), the signed/raw reconstruction loss,
the fixed-vector feature loss, the weighted overall privacy loss,
classification scores, the tabular reconstruction accuracy, and the
combinatorics of random binary masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PSNR_CAP_DB = 100.0
MSE_FLOOR = 1e-10
EXACT_INT_MAX_N = 4096


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    sample_count: int
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "sample_count": self.sample_count,
                "parameters": dict(self.parameters)}


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise MetricError("empty input")
    return x, y


def mse(x, x_bar) -> float:
    x, x_bar = _pair(x, x_bar)
    return float(np.mean((x - x_bar) ** 2))


def per_sample_mse(X, X_bar) -> np.ndarray:
    X, X_bar = _pair(X, X_bar)
    X = np.atleast_2d(X)
    X_bar = np.atleast_2d(X_bar)
    return np.mean((X - X_bar) ** 2, axis=1)


def psnr_from_mse(m, max_value: float = 1.0):
    m = np.asarray(m, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.where(m < MSE_FLOOR, PSNR_CAP_DB, 10.0 * np.log10(max_value**2 / np.maximum(m, MSE_FLOOR)))
    return float(out) if out.ndim == 0 else out


def psnr(x, x_bar, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB for (near) identical inputs."""
    return psnr_from_mse(mse(x, x_bar), max_value)


def ssim(img_a, img_b, dims: tuple[int, int] | None = None, max_value: float = 1.0, window: int = 8) -> float:
    """Mean SSIM over all ``window`` x ``window`` patches (uniform weights, stride 1).

    Patch statistics are population moments. ``dims`` reshapes flat vectors.
    """
    a, b = _pair(img_a, img_b)
    if dims is not None:
        if a.size != dims[0] * dims[1]:
            raise MetricError(f"cannot view {a.size} values as {dims}")
        a = a.reshape(dims)
        b = b.reshape(dims)
    if a.ndim != 2:
        raise MetricError("ssim needs 2-D images (pass dims for flat vectors)")
    if a.shape[0] < window or a.shape[1] < window:
        raise MetricError(f"image {a.shape} smaller than the {window}x{window} window")
    if np.array_equal(a, b):
        return 1.0
    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2
    view = np.lib.stride_tricks.sliding_window_view
    pa = view(a, (window, window))
    pb = view(b, (window, window))
    mu_a = pa.mean(axis=(-1, -2))
    mu_b = pb.mean(axis=(-1, -2))
    var_a = (pa * pa).mean(axis=(-1, -2)) - mu_a**2
    var_b = (pb * pb).mean(axis=(-1, -2)) - mu_b**2
    cov = (pa * pb).mean(axis=(-1, -2)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def batch_ssim(X, X_bar, dims: tuple[int, int], max_value: float = 1.0, window: int = 8) -> np.ndarray:
    X, X_bar = _pair(X, X_bar)
    return np.array([ssim(a, b, dims, max_value, window) for a, b in zip(np.atleast_2d(X), np.atleast_2d(X_bar))])


@dataclass(frozen=True)
class ReconstructionLoss:
    """Signed loss (negated mean distance) and the raw mean distance."""

    signed: float
    raw: float
    sample_count: int


def reconstruction_loss(X, X_bar) -> ReconstructionLoss:
    """Mean per-sample MSE between originals and reconstructions.

    ``signed`` carries the leading minus of the leakage definition (lower =
    more leakage); ``raw`` is the plain mean distance, as tables report it.
    """
    d = per_sample_mse(X, X_bar)
    raw = float(np.mean(d))
    return ReconstructionLoss(signed=-raw, raw=raw, sample_count=int(d.size))


def feature_loss(predictions, r) -> float:
    """Mean squared distance from attribute predictions to the fixed vector ``r``.

    Measuring against a fixed vector rather than the true attribute means an
    attacker cannot recover the attribute by flipping its outputs.
    """
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    r = np.asarray(r, dtype=np.float64)
    if p.size == 0:
        raise MetricError("empty input")
    if p.shape[1] != r.shape[0]:
        raise MetricError(f"prediction dim {p.shape[1]} != |r| = {r.shape[0]}")
    return float(np.mean(np.sum((p - r) ** 2, axis=1)))


def check_lambdas(lambdas: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise MetricError("need at least one weight")
    if np.any(lam < 0):
        raise MetricError("weights must be nonnegative")
    if abs(lam.sum() - 1.0) > tol:
        raise MetricError(f"weights sum to {lam.sum()!r}, not 1")
    return lam


def overall_privacy_loss(l_r: float, l_attrs: Sequence[float], lambdas: Sequence[float]) -> float:
    lam = check_lambdas(lambdas)
    if lam.size != 1 + len(l_attrs):
        raise MetricError("need one weight for the reconstruction term plus one per attribute")
    return float(lam[0] * l_r + sum(w * v for w, v in zip(lam[1:], l_attrs)))


def _labels(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 2:
        return np.argmax(a, axis=1)
    return a.astype(int)


def accuracy(preds, labels) -> float:
    """Argmax-match rate; accepts score/one-hot rows or integer class ids."""
    p, y = _labels(preds), _labels(labels)
    if p.shape != y.shape:
        raise MetricError("length mismatch")
    if p.size == 0:
        raise MetricError("empty input")
    return float(np.mean(p == y))


def f1(preds, labels, positive_class: int = 1) -> float:
    p, y = _labels(preds), _labels(labels)
    if p.shape != y.shape:
        raise MetricError("length mismatch")
    if p.size == 0:
        raise MetricError("empty input")
    tp = int(np.sum((p == positive_class) & (y == positive_class)))
    fp = int(np.sum((p == positive_class) & (y != positive_class)))
    fn = int(np.sum((p != positive_class) & (y == positive_class)))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def macro_f1(preds, labels, n_classes: int) -> float:
    """Unweighted mean of the one-vs-rest F1 of every class."""
    return float(np.mean([f1(preds, labels, positive_class=c) for c in range(n_classes)]))


def equal_to_r_rate(predictions, r) -> float:
    """Share of predictions whose argmax equals the argmax of ``r``."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    return float(np.mean(np.argmax(p, axis=1) == int(np.argmax(r))))


def tabular_reconstruction_accuracy(X, X_bar, groups, tol: float = 0.05) -> np.ndarray:
    """Per-sample share of attributes reconstructed correctly.

    ``groups`` lists ``(kind, start, stop)`` column spans. One-hot spans
    (``categorical``/``binned``) count when the argmax matches; ``numeric``
    columns count when within ``tol`` of the original after scaling. A
    one-hot span cut by a column partition may hold no hot entry; it counts
    when the reconstruction also stays below 0.5 everywhere in the span.
    """
    X, X_bar = _pair(X, X_bar)
    X = np.atleast_2d(X)
    X_bar = np.atleast_2d(X_bar)
    if not groups:
        raise MetricError("no attribute groups")
    scores = []
    for kind, start, stop in groups:
        a, b = X[:, start:stop], X_bar[:, start:stop]
        if kind == "numeric":
            scores.append(np.all(np.abs(a - b) <= tol, axis=1))
        else:
            hot = a.max(axis=1) > 0.5
            match = np.argmax(a, axis=1) == np.argmax(b, axis=1)
            cold_ok = b.max(axis=1) < 0.5
            scores.append(np.where(hot, match, cold_ok))
    return np.mean(np.stack(scores, axis=1).astype(np.float64), axis=1)


# -- masks ---------------------------------------------------------------


def overlap_rate(m1, m2) -> float:
    """1 - normalized Hamming distance between two binary masks."""
    a = np.asarray(m1)
    b = np.asarray(m2)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("masks must be 1-D and of equal length")
    if a.size == 0:
        raise MetricError("empty masks")
    return float(np.mean(a == b))


def _log_binom_pmf_half(n: int, i: np.ndarray) -> np.ndarray:
    lg = np.vectorize(math.lgamma)
    return lg(n + 1) - lg(i + 1) - lg(n - i + 1) - n * math.log(2.0)


def overlap_probability(n: int, t: float, method: str = "exact") -> float:
    """P[o(m1, m2) >= t] for two independent uniform n-bit masks.

    The number of agreeing bits is Binomial(n, 1/2). ``exact`` sums integer
    binomial coefficients (log space above ``EXACT_INT_MAX_N``); ``normal_approx`` is the De Moivre-Laplace limit form
    Phi(sqrt(n)) - Phi((2t - 1) sqrt(n)).
    """
    if n < 1:
        raise MetricError("n must be >= 1")
    if not 0.5 < t <= 1.0:
        raise MetricError("t must lie in (1/2, 1]")
    if method == "exact":
        lo = math.ceil(t * n - 1e-12)
        if n <= EXACT_INT_MAX_N:
            # integer tail over 2^n; int / int division rounds correctly
            return sum(math.comb(n, i) for i in range(lo, n + 1)) / 2**n
        i = np.arange(lo, n + 1)
        logs = _log_binom_pmf_half(n, i)
        m = logs.max()
        return float(math.exp(m) * np.sum(np.exp(logs - m)))
    if method == "normal_approx":
        # upper-tail erfc keeps precision where both Phi values round to 1
        root = math.sqrt(n)
        return 0.5 * (math.erfc((2 * t - 1) * root / math.sqrt(2)) - math.erfc(root / math.sqrt(2)))
    raise MetricError(f"unknown method {method!r}")
