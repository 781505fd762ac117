"""Budgeted adversarial noise on latent representations.

Reconstruction noise is iterated signed-gradient ascent on the substitute
decoder's reconstruction error (optionally gated by a secret binary mask);
attribute noise is a single signed step that pulls an attribute extractor's
prediction toward a fixed vector. The two are mixed with convex weights.

``sign(0)`` is taken as 0, so masked or flat coordinates get no noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import check_lambdas
from .nn import NeuralNet, input_gradient

BUDGET_TOL = 1e-9


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseBudget:
    """Per-coordinate bound ``epsilon`` reached in ``n`` steps of size ``epsilon / n``.

    ``epsilon`` is a scalar (absolute latent units) or a vector with one bound
    per latent dimension (see :func:`relative_budget`).
    """

    epsilon: float | np.ndarray
    n: int = 10

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=np.float64)
        if eps.ndim > 1 or np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise NoiseError("epsilon must be a finite nonnegative scalar or vector")
        if int(self.n) != self.n or self.n < 1:
            raise NoiseError("iteration count n must be a positive integer")
        object.__setattr__(self, "epsilon", float(eps) if eps.ndim == 0 else eps)

    @property
    def alpha(self):
        return self.epsilon / self.n

    @property
    def is_zero(self) -> bool:
        return bool(np.all(np.asarray(self.epsilon) == 0))

    def bound(self, h: int) -> np.ndarray:
        eps = np.asarray(self.epsilon, dtype=np.float64)
        if eps.ndim == 1 and eps.shape[0] != h:
            raise NoiseError(f"budget has {eps.shape[0]} dims, representation has {h}")
        return np.broadcast_to(eps, (h,))

    def to_dict(self) -> dict:
        eps = self.epsilon
        return {"epsilon": eps.tolist() if isinstance(eps, np.ndarray) else eps, "n": self.n}


def relative_budget(epsilon: float, latent_range, n: int = 10, unit: float = 0.01) -> NoiseBudget:
    """Budget of ``epsilon * unit * range_j`` on latent dimension j.

    With the default unit, ``epsilon`` reads as a percentage of each
    dimension's dynamic range on the initiator's data.
    """
    rng = np.asarray(latent_range, dtype=np.float64)
    if rng.ndim != 1 or np.any(rng < 0):
        raise NoiseError("latent range must be a nonnegative vector")
    return NoiseBudget(epsilon * unit * rng, n)


@dataclass(frozen=True)
class MaskVector:
    m: np.ndarray
    owner: int = 0
    seed: int = 0

    def __post_init__(self):
        m = np.asarray(self.m)
        if m.ndim != 1 or m.size == 0 or not np.all((m == 0) | (m == 1)):
            raise NoiseError("mask must be a nonempty binary vector")
        m = m.astype(np.float64)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def __len__(self) -> int:
        return self.m.shape[0]

    def __repr__(self):
        # masks are secret; keep them out of logs
        return f"MaskVector(h={len(self)}, owner={self.owner})"


def generate_mask(h: int, seed: int, owner: int = 0) -> MaskVector:
    if h < 1:
        raise NoiseError("mask length must be >= 1")
    bits = np.random.default_rng(seed).integers(0, 2, size=h)
    return MaskVector(bits, owner, seed)


def mask_with_overlap(reference: MaskVector, rate: float, seed: int, owner: int = 0) -> MaskVector:
    """Mask agreeing with ``reference`` on exactly ``round(rate * h)`` positions."""
    h = len(reference)
    if not 0.0 <= rate <= 1.0:
        raise NoiseError("overlap rate must lie in [0, 1]")
    flips = h - int(round(rate * h))
    idx = np.random.default_rng(seed).choice(h, size=flips, replace=False)
    m = reference.m.copy()
    m[idx] = 1.0 - m[idx]
    return MaskVector(m, owner, seed)


@dataclass(frozen=True)
class AdversarialRepresentation:
    """Perturbed codes ``z_hat = z + delta`` (rows are samples)."""

    z_hat: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    budget: NoiseBudget

    def max_abs_noise(self) -> float:
        return float(np.max(np.abs(self.z_hat - self.z))) if self.z.size else 0.0

    def within_budget(self, tol: float = BUDGET_TOL) -> bool:
        h = self.z.shape[-1]
        return bool(np.all(np.abs(self.z_hat - self.z) <= self.budget.bound(h) + tol))


def _rows(a) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    return (a[None, :] if single else a), single


def _result(z, delta, budget, single) -> AdversarialRepresentation:
    # untouched coordinates keep their exact bits (z + 0.0 would turn -0.0 into 0.0)
    z_hat = np.where(delta == 0, z, z + delta)
    if single:
        return AdversarialRepresentation(z_hat[0], z[0], delta[0], budget)
    return AdversarialRepresentation(z_hat, z, delta, budget)


def masked_ifgsm(z, x, sdec: NeuralNet, mask: MaskVector | np.ndarray | None, budget: NoiseBudget) -> AdversarialRepresentation:
    """Iterated signed-gradient ascent of ||x - sdec(z_hat)||^2, gated by ``mask``.

    Each step moves every unmasked coordinate with nonzero gradient by
    exactly ``alpha``; the accumulated noise is kept separately so masked
    coordinates come back bit-identical.
    """
    Z, single = _rows(z)
    X, _ = _rows(x)
    h = Z.shape[1]
    if sdec.input_dim != h:
        raise NoiseError(f"decoder expects {sdec.input_dim}-dim codes, got {h}")
    if X.shape != (Z.shape[0], sdec.output_dim):
        raise NoiseError("originals do not match the codes or the decoder output")
    if mask is None:
        m = np.ones(h)
    else:
        m = mask.m if isinstance(mask, MaskVector) else np.asarray(mask, dtype=np.float64)
        if m.shape != (h,):
            raise NoiseError(f"mask length {m.shape[0] if m.ndim else '?'} != code length {h}")
    alpha = np.broadcast_to(budget.alpha, (h,)) if np.ndim(budget.alpha) else budget.alpha
    budget.bound(h)
    delta = np.zeros_like(Z)
    if budget.is_zero:
        return _result(Z, delta, budget, single)
    for _ in range(budget.n):
        g = input_gradient(sdec, Z + delta, "squared_error", X)
        delta = delta + alpha * np.sign(m * g)
    return _result(Z, delta, budget, single)


def ifgsm(z, x, sdec: NeuralNet, budget: NoiseBudget) -> AdversarialRepresentation:
    return masked_ifgsm(z, x, sdec, None, budget)


def attribute_noise(z, extractor: NeuralNet, r, epsilon, mask: MaskVector | None = None) -> np.ndarray:
    """One signed step of size ``epsilon`` descending ||r - extractor(z)||^2."""
    Z, single = _rows(z)
    r = np.asarray(r, dtype=np.float64)
    if extractor.input_dim != Z.shape[1]:
        raise NoiseError("extractor input dim does not match the codes")
    if extractor.output_dim != r.shape[0]:
        raise NoiseError(f"extractor outputs {extractor.output_dim} values but |r| = {r.shape[0]}")
    eps = np.asarray(epsilon, dtype=np.float64)
    if np.all(eps == 0):
        out = np.zeros_like(Z)
    else:
        g = input_gradient(extractor, Z, "squared_error", r)
        if mask is not None:
            m = mask.m if isinstance(mask, MaskVector) else np.asarray(mask, dtype=np.float64)
            g = m * g
        out = -eps * np.sign(g)
    return out[0] if single else out


def combine_noise(delta_r, attr_deltas: Sequence[np.ndarray], lambdas, epsilon=None) -> np.ndarray:
    """Convex mix ``lambda_0 * delta_r + sum_k lambda_k * delta_k``."""
    lam = check_lambdas(lambdas)
    if lam.size != 1 + len(attr_deltas):
        raise NoiseError("need one weight for the reconstruction noise plus one per attribute")
    d_r = np.asarray(delta_r, dtype=np.float64)
    out = lam[0] * d_r
    for w, d in zip(lam[1:], attr_deltas):
        d = np.asarray(d, dtype=np.float64)
        if d.shape != d_r.shape:
            raise NoiseError("noise components differ in shape")
        out = out + w * d
    if epsilon is not None:
        bound = np.asarray(epsilon, dtype=np.float64)
        if np.any(np.abs(out) > bound + BUDGET_TOL):
            raise NoiseError("combined noise exceeds the budget; components were not epsilon-bounded")
    return out


def uniform_noise(z, budget: NoiseBudget, seed: int) -> AdversarialRepresentation:
    """Baseline: i.i.d. uniform noise in [-epsilon, epsilon] per coordinate."""
    Z, single = _rows(z)
    bound = budget.bound(Z.shape[1])
    delta = np.random.default_rng(seed).uniform(-1.0, 1.0, size=Z.shape) * bound
    return _result(Z, delta, budget, single)


@dataclass
class SharingModels:
    """A party's local models used to craft its noise."""

    sdec: NeuralNet
    extractors: tuple[NeuralNet, ...] = ()
    fixed_vectors: tuple[np.ndarray, ...] = ()
    mask_attribute_noise: bool = True


def default_lambdas(M: int) -> tuple[float, ...]:
    """Half the weight on reconstruction, the rest split evenly over the attributes."""
    if M == 0:
        return (1.0,)
    return (0.5,) + (0.5 / M,) * M


def share_representations(
    X,
    handle,
    models: SharingModels,
    mask: MaskVector | None,
    budget: NoiseBudget,
    lambdas: Sequence[float] | None = None,
) -> AdversarialRepresentation:
    """Encode ``X`` through the published encoder and perturb every code.

    Reconstruction noise comes from :func:`masked_ifgsm`; attribute noise from
    :func:`attribute_noise` on the clean codes; both are mixed by ``lambdas``.
    """
    X = np.asarray(X, dtype=np.float64)
    Z = handle.encode(X)
    M = len(models.extractors)
    if len(models.fixed_vectors) != M:
        raise NoiseError("one fixed vector per attribute extractor")
    lam = check_lambdas((1.0,) if M == 0 else (lambdas if lambdas is not None else default_lambdas(M)))
    if lam.size != M + 1:
        raise NoiseError(f"{lam.size} weights for {M} attributes")
    rec = masked_ifgsm(Z, X, models.sdec, mask, budget)
    if M == 0:
        return rec
    bound = budget.bound(Z.shape[1])
    attr_mask = mask if models.mask_attribute_noise else None
    deltas = [attribute_noise(Z, f, r, bound, attr_mask) for f, r in zip(models.extractors, models.fixed_vectors)]
    delta = combine_noise(rec.delta, deltas, lam, bound)
    return _result(Z, delta, budget, False)


# -- shared-representation files ---------------------------------------------


def write_shares(path, party_id: int, z_hat, labels, sample_ids=None) -> None:
    """Append JSON-lines records {party_id, sample_id, z_hat, label}. Masks never go here."""
    z_hat = np.atleast_2d(np.asarray(z_hat, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    ids = range(z_hat.shape[0]) if sample_ids is None else sample_ids
    with open(path, "a") as fh:
        for sid, zr, yr in zip(ids, z_hat, labels):
            fh.write(json.dumps({"party_id": int(party_id), "sample_id": int(sid),
                                 "z_hat": zr.tolist(), "label": yr.tolist()}) + "\n")


def read_shares(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
