"""Simulation of K parties running publish -> share -> learn.

Parties are plain objects in one process. What crosses a party boundary is
limited to the published :class:`EncoderHandle`, perturbed codes and labels;
masks, raw samples and decoders stay on the owning :class:`Party`.

All randomness comes from ``ScenarioConfig.seed`` through :func:`derive_seed`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .attacks import (
    DecoderSpec,
    adversarial_training_attack,
    mask_bruteforce_attack,
    run_attribute_attack,
    run_reconstruction_attack,
    train_attribute_extractor,
    train_substitute_decoder,
)
from .data import (
    Dataset,
    InvalidPlanError,
    PartitionPlan,
    load_adult,
    load_mnist,
    one_hot,
    partition,
    synth_gaussian_clusters,
)
from .nn import NeuralNet, TrainConfig, forward, mlp, train
from .noise import (
    AdversarialRepresentation,
    MaskVector,
    NoiseBudget,
    SharingModels,
    default_lambdas,
    generate_mask,
    mask_with_overlap,
    relative_budget,
    share_representations,
    uniform_noise,
)
from .representation import Autoencoder, EncoderHandle, publish, train_autoencoder

SEED_BITS = (1 << 63) - 1

ATTACKS = ("recon", "advtrain", "uniform", "attribute", "mask_overlap", "mask_search")

# label functions over MNIST digits for the task-independence suite
DIGIT_TASKS = {
    "digit": (lambda d: d, 10),
    "parity": (lambda d: d % 2, 2),
    "high": (lambda d: (d >= 5).astype(int), 2),
    "loop": (lambda d: np.isin(d, (0, 6, 8, 9)).astype(int), 2),
    "prime": (lambda d: np.isin(d, (2, 3, 5, 7)).astype(int), 2),
}


class ConfigError(ValueError):
    pass


class BudgetViolation(RuntimeError):
    pass


def derive_seed(seed: int, *labels) -> int:
    """Child seed: ``seed`` XOR the first 8 bytes of sha256 over the labels."""
    digest = hashlib.sha256("/".join(str(x) for x in labels).encode()).digest()
    return (int(seed) ^ int.from_bytes(digest[:8], "little")) & SEED_BITS


# -- configuration -----------------------------------------------------------


def _train_cfg(doc: dict, where: str) -> TrainConfig:
    allowed = {f.name for f in fields(TrainConfig)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown training keys {sorted(unknown)}")
    try:
        return TrainConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class ModelSpec:
    hidden: tuple[int, ...]
    train: TrainConfig
    output: str = "identity"

    @classmethod
    def from_dict(cls, doc: dict, base: "ModelSpec", where: str) -> "ModelSpec":
        unknown = set(doc) - {"hidden", "train", "output"}
        if unknown:
            raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
        hidden = tuple(int(x) for x in doc.get("hidden", base.hidden))
        if any(h < 1 for h in hidden):
            raise ConfigError(f"{where}: hidden sizes must be >= 1")
        tr = base.train
        if "train" in doc:
            tr = _train_cfg({**tr.to_dict(), **doc["train"]}, f"{where}.train")
        return cls(hidden, tr, str(doc.get("output", base.output)))

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "train": self.train.to_dict(), "output": self.output}


def _adam(lr: float, epochs: int, loss: str = "squared_error") -> TrainConfig:
    return TrainConfig(learning_rate=lr, batch_size=64, epochs=epochs, loss=loss, optimizer="adam")


@dataclass(frozen=True)
class SyntheticSpec:
    n_features: int = 10
    classes: int = 4
    attributes: int = 2
    separation: float = 3.0
    noise: float = 1.0


@dataclass(frozen=True)
class VerticalSpec:
    owners: int = 3
    participants: tuple[int, ...] = (1, 2, 3)
    block_latent_dim: int = 16
    hidden: tuple[int, ...] = (64,)
    attacker_samples: int = 2000


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    dataset: str = "mnist"
    partition: str = "horizontal"
    K: int = 5
    samples_per_party: int = 2000
    test_samples: int = 2000
    epsilons: tuple[float, ...] = (0.0, 25.0, 50.0, 100.0)
    epsilon_mode: str = "relative"
    epsilon_unit: float = 0.002
    n: int = 10
    lambdas: tuple[float, ...] | None = None
    latent_dim: int = 64
    initiator: str | int = "largest"
    attacker: int = -1
    victim: int = -1
    attacks: tuple[str, ...] = ("recon", "advtrain", "uniform")
    mask_overlaps: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    mask_epsilon: float = 50.0
    mask_candidates: int = 8
    probe_fraction: float = 0.05
    tasks: tuple[str, ...] = ()
    task_epsilon: float = 50.0
    fixed_vector: tuple[float, ...] = (1.0, 0.0)
    per_sample: bool = False
    mask_attribute_noise: bool = True
    autoencoder: ModelSpec = ModelSpec((256, 128), _adam(1e-3, 30), "sigmoid")
    decoder: ModelSpec = ModelSpec((512,), _adam(3e-3, 20), "sigmoid")
    classifier: ModelSpec = ModelSpec((256,), _adam(1e-3, 30, "cross_entropy"), "softmax")
    extractor: ModelSpec = ModelSpec((64,), _adam(3e-3, 20, "cross_entropy"), "softmax")
    synthetic: SyntheticSpec = SyntheticSpec()
    vertical: VerticalSpec = VerticalSpec()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dataset not in ("mnist", "adult", "synthetic"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.partition not in ("horizontal", "vertical"):
            raise ConfigError(f"unknown partition mode {self.partition!r}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.samples_per_party < 1 or self.test_samples < 1:
            raise ConfigError("sample counts must be >= 1")
        if not self.epsilons or any(not (e >= 0 and math.isfinite(e)) for e in self.epsilons):
            raise ConfigError("epsilons must be a nonempty list of finite nonnegative numbers")
        if self.epsilon_mode not in ("relative", "absolute"):
            raise ConfigError(f"unknown epsilon_mode {self.epsilon_mode!r}")
        if not self.epsilon_unit > 0:
            raise ConfigError("epsilon_unit must be positive")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.lambdas is not None:
            try:
                metrics.check_lambdas(self.lambdas)
            except metrics.MetricError as exc:
                raise ConfigError(str(exc)) from exc
        if isinstance(self.initiator, str):
            if self.initiator != "largest":
                raise ConfigError("initiator must be 'largest' or a party index")
        elif not 0 <= self.initiator < self.K:
            raise ConfigError(f"initiator {self.initiator} is not a party")
        for role in ("attacker", "victim"):
            v = getattr(self, role)
            if v != -1 and not 0 <= v < self.K:
                raise ConfigError(f"{role} {v} is not a party")
        if self.attacker != -1 and self.attacker == self.victim:
            raise ConfigError("attacker and victim must differ")
        bad = [a for a in self.attacks if a not in ATTACKS]
        if bad:
            raise ConfigError(f"unknown attacks {bad}; choose from {list(ATTACKS)}")
        if any(not 0 <= o <= 1 for o in self.mask_overlaps):
            raise ConfigError("mask overlaps must lie in [0, 1]")
        if self.mask_candidates < 1:
            raise ConfigError("mask_candidates must be >= 1")
        if not 0 < self.probe_fraction <= 1:
            raise ConfigError("probe_fraction must lie in (0, 1]")
        for t in self.tasks:
            if t not in ("label", *DIGIT_TASKS) and not t.startswith("attribute:"):
                raise ConfigError(f"unknown task {t!r}")
        if self.partition == "vertical":
            v = self.vertical
            if v.owners < 1 or not v.participants:
                raise ConfigError("vertical mode needs owners >= 1 and a participant list")
            if any(not 1 <= k <= v.owners for k in v.participants):
                raise ConfigError("vertical participants must lie in 1..owners")
            if self.dataset == "mnist":
                raise ConfigError("vertical mode runs on tabular data (adult or synthetic)")

    # -- (de)serialization

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        base = cls.__dataclass_fields__
        kw = {}
        for key in ("autoencoder", "decoder", "classifier", "extractor"):
            if key in doc:
                sub = doc.pop(key)
                if not isinstance(sub, dict):
                    raise ConfigError(f"[{key}] must be a table")
                kw[key] = ModelSpec.from_dict(sub, base[key].default, key)
        for key, typ in (("synthetic", SyntheticSpec), ("vertical", VerticalSpec)):
            if key in doc:
                sub = doc.pop(key)
                names = {f.name for f in fields(typ)}
                if not isinstance(sub, dict) or set(sub) - names:
                    raise ConfigError(f"[{key}] accepts only {sorted(names)}")
                if "participants" in sub:
                    sub = {**sub, "participants": tuple(int(x) for x in sub["participants"])}
                if "hidden" in sub:
                    sub = {**sub, "hidden": tuple(int(x) for x in sub["hidden"])}
                kw[key] = typ(**sub)
        unknown = set(doc) - set(base)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key, val in doc.items():
            if key in ("epsilons", "mask_overlaps", "fixed_vector"):
                val = tuple(float(x) for x in val)
            elif key == "lambdas":
                val = None if val is None or len(val) == 0 else tuple(float(x) for x in val)
            elif key in ("attacks", "tasks"):
                val = tuple(str(x) for x in val)
            kw[key] = val
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        try:
            if path.suffix == ".json":
                doc = json.loads(text)
            else:
                try:
                    import tomllib
                except ModuleNotFoundError:  # python < 3.11
                    import tomli as tomllib
                doc = tomllib.loads(text)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ModelSpec):
                v = v.to_dict()
            elif isinstance(v, (SyntheticSpec, VerticalSpec)):
                v = {g.name: (list(x) if isinstance(x := getattr(v, g.name), tuple) else x) for g in fields(v)}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def with_epsilons(self, epsilons: Sequence[float]) -> "ScenarioConfig":
        return replace(self, epsilons=tuple(float(e) for e in epsilons))

    def budget(self, epsilon: float, latent_range) -> NoiseBudget:
        if self.epsilon_mode == "relative":
            return relative_budget(epsilon, latent_range, self.n, self.epsilon_unit)
        return NoiseBudget(float(epsilon), self.n)


# -- parties and pools -------------------------------------------------------


@dataclass
class Party:
    id: int
    data: Dataset
    mask: MaskVector
    roles: frozenset = frozenset()
    sdec: NeuralNet | None = None
    extractors: tuple[NeuralNet, ...] = ()
    fixed_vectors: tuple[np.ndarray, ...] = ()
    mask_attribute_noise: bool = True

    def __repr__(self):
        return f"Party(id={self.id}, n={len(self.data)}, roles={sorted(self.roles)})"

    def models(self) -> SharingModels:
        if self.sdec is None:
            raise RuntimeError(f"party {self.id} has no substitute decoder yet")
        return SharingModels(self.sdec, self.extractors, self.fixed_vectors, self.mask_attribute_noise)

    def share(self, X, handle: EncoderHandle, budget: NoiseBudget, lambdas=None) -> AdversarialRepresentation:
        """Perturb codes of ``X`` and re-check the budget before anything leaves the party."""
        rep = share_representations(X, handle, self.models(), self.mask, budget, lambdas)
        if not rep.within_budget():
            raise BudgetViolation(f"party {self.id}: max |z_hat - z| = {rep.max_abs_noise()} exceeds the budget")
        return rep


@dataclass(frozen=True)
class SharedPool:
    """Everything the parties published: codes, labels, owner and sample ids."""

    Z: np.ndarray
    Y: np.ndarray
    party: np.ndarray
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return self.Z.shape[0]

    def of(self, party_id: int) -> np.ndarray:
        return self.Z[self.party == party_id]

    def records(self) -> list[dict]:
        return [
            {"party_id": int(p), "sample_id": int(s), "z_hat": z.tolist(), "label": y.tolist()}
            for p, s, z, y in zip(self.party, self.sample_ids, self.Z, self.Y)
        ]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.Z, self.Y, self.party, self.sample_ids):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


@dataclass
class ScenarioReport:
    name: str
    config: dict
    rows: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "config": self.config, "rows": self.rows, "extras": self.extras}

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def long_rows(self) -> list[tuple]:
        """(epsilon, metric, value, seed) tuples for plotting."""
        seed = self.config.get("seed", 0)
        out = []
        for row in self.rows:
            eps = row.get("epsilon")
            for key, val in _flatten(row):
                if key != "epsilon" and isinstance(val, (int, float)) and not isinstance(val, bool):
                    out.append((eps, key, val, seed))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epsilon,metric,value,seed\n")
            for eps, key, val, seed in self.long_rows():
                fh.write(f"{eps!r},{key},{float(val)!r},{seed}\n")


def _flatten(d: dict, prefix: str = ""):
    for k, v in d.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, name + ".")
        else:
            yield name, v


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


# -- data --------------------------------------------------------------------


def _pick(n_total: int, n: int, seed: int) -> np.ndarray:
    if n > n_total:
        raise ConfigError(f"asked for {n} samples but only {n_total} are available")
    return np.sort(np.random.default_rng(seed).permutation(n_total)[:n])


def load_scenario_data(cfg: ScenarioConfig) -> tuple[list[Dataset], Dataset]:
    """Per-party training sets and a held-out test set (horizontal mode)."""
    K, N = cfg.K, cfg.samples_per_party
    if cfg.dataset == "synthetic":
        s = cfg.synthetic
        ds = synth_gaussian_clusters(K * N + cfg.test_samples, s.n_features, s.classes, s.attributes,
                                     derive_seed(cfg.seed, "synthetic"), s.separation, s.noise)
        pool, test = ds.head(K * N), ds.subset(np.arange(K * N, len(ds)))
    else:
        loader = load_mnist if cfg.dataset == "mnist" else load_adult
        pool, test = loader("train"), loader("test")
        test = test.subset(_pick(len(test), cfg.test_samples, derive_seed(cfg.seed, "test")))
    if K * N > len(pool):
        raise ConfigError(f"{K} parties x {N} samples exceeds the {len(pool)} available")
    plan = PartitionPlan.horizontal(len(pool), K, derive_seed(cfg.seed, "partition"), sizes=[N] * K)
    return partition(pool, plan), test


# -- phases ------------------------------------------------------------------


def choose_initiator(cfg: ScenarioConfig, datasets: Sequence[Dataset]) -> int:
    if cfg.initiator == "largest":
        sizes = [len(d) for d in datasets]
        return int(np.argmax(sizes))
    return int(cfg.initiator)


def run_encoder_publishing(cfg: ScenarioConfig, datasets: Sequence[Dataset]) -> tuple[EncoderHandle, Autoencoder, int]:
    """Initiator trains the autoencoder; everyone gets the same encoder handle."""
    init = choose_initiator(cfg, datasets)
    X = datasets[init].X
    if len(X) == 0:
        raise ConfigError("the initiator holds no data")
    a = cfg.autoencoder
    ae = train_autoencoder(X, cfg.latent_dim, a.train, a.hidden, derive_seed(cfg.seed, "autoencoder"), a.output)
    return publish(ae, X), ae, init


def _n_attr_defended(cfg: ScenarioConfig, ds: Dataset) -> int:
    M = len(ds.A) if cfg.lambdas is None else len(cfg.lambdas) - 1
    if M > len(ds.A):
        raise ConfigError(f"{len(cfg.lambdas)} weights need {M} private attributes, data has {len(ds.A)}")
    return M


def decoder_spec(cfg: ScenarioConfig, seed: int) -> DecoderSpec:
    d = cfg.decoder
    return DecoderSpec(d.hidden, d.output, d.train, seed)


def prepare_parties(cfg: ScenarioConfig, datasets: Sequence[Dataset], handle: EncoderHandle, initiator: int) -> list[Party]:
    """Masks and local models (substitute decoder, attribute extractors) for every party."""
    attacker, victim = resolve_roles(cfg, initiator)
    parties = []
    for i, ds in enumerate(datasets):
        roles = {"initiator"} if i == initiator else set()
        if i == attacker:
            roles.add("attacker")
        if i == victim:
            roles.add("victim")
        mask = generate_mask(handle.output_dim, derive_seed(cfg.seed, "party", i, "mask"), owner=i)
        sdec = train_substitute_decoder(ds.X, handle, decoder_spec(cfg, derive_seed(cfg.seed, "party", i, "sdec")))
        M = _n_attr_defended(cfg, ds)
        e = cfg.extractor
        extractors = tuple(
            train_attribute_extractor(ds, handle, k, e.train, e.hidden, derive_seed(cfg.seed, "party", i, "extractor", k))
            for k in range(M)
        )
        r = np.asarray(cfg.fixed_vector, dtype=np.float64)
        for k in range(M):
            if ds.A[k].shape[1] != r.shape[0]:
                raise ConfigError(f"fixed vector has {r.shape[0]} entries, attribute {k} has {ds.A[k].shape[1]} classes")
        parties.append(Party(i, ds, mask, frozenset(roles), sdec, extractors, (r,) * M, cfg.mask_attribute_noise))
    return parties


def resolve_roles(cfg: ScenarioConfig, initiator: int) -> tuple[int, int]:
    """(attacker, victim); both -1 when there is only one party."""
    if cfg.K == 1:
        return -1, -1
    attacker = cfg.K - 1 if cfg.attacker == -1 else cfg.attacker
    if cfg.victim != -1:
        victim = cfg.victim
    else:
        others = [i for i in range(cfg.K) if i != attacker]
        victim = next((i for i in others if i != initiator), others[0])
    if attacker == victim:
        raise ConfigError("attacker and victim resolve to the same party")
    return attacker, victim


def party_lambdas(cfg: ScenarioConfig, party: Party):
    M = len(party.extractors)
    return cfg.lambdas if cfg.lambdas is not None else default_lambdas(M)


def run_data_sharing(cfg: ScenarioConfig, parties: Sequence[Party], handle: EncoderHandle, budget: NoiseBudget) -> SharedPool:
    """Every party publishes perturbed codes of all its samples with its labels."""
    Z, Y, owner, ids = [], [], [], []
    for p in parties:
        rep = p.share(p.data.X, handle, budget, party_lambdas(cfg, p))
        Z.append(np.atleast_2d(rep.z_hat))
        Y.append(p.data.Y)
        owner.append(np.full(len(p.data), p.id))
        ids.append(p.data.ids)
    return SharedPool(np.vstack(Z), np.vstack(Y), np.concatenate(owner), np.concatenate(ids))


def share_test_set(cfg: ScenarioConfig, parties: Sequence[Party], handle: EncoderHandle, budget: NoiseBudget, test: Dataset) -> np.ndarray:
    """Held-out samples dealt round-robin to parties, each perturbed like its owner's shares."""
    Z = np.empty((len(test), handle.output_dim))
    for p in parties:
        idx = np.arange(p.id, len(test), len(parties))
        if idx.size:
            Z[idx] = np.atleast_2d(p.share(test.X[idx], handle, budget, party_lambdas(cfg, p)).z_hat)
    return Z


def utility_metrics(C: NeuralNet, Z_test, Y_test) -> dict:
    P = forward(C, Z_test)
    k = Y_test.shape[1]
    f = metrics.f1(P, Y_test, 1) if k == 2 else metrics.macro_f1(P, Y_test, k)
    return {"accuracy": metrics.accuracy(P, Y_test), "f1": f, "n_test": int(len(Y_test))}


def run_collaborative_learning(pool: SharedPool, spec: ModelSpec, seed: int, Z_test, Y_test, Y_train=None) -> tuple[NeuralNet, dict]:
    """Fit the downstream classifier on the pooled codes and score it on held-out codes."""
    if len(pool) == 0:
        raise ConfigError("the shared pool is empty")
    Y = pool.Y if Y_train is None else Y_train
    C = mlp([pool.Z.shape[1], *spec.hidden, Y.shape[1]], "classifier", seed, output="softmax")
    C = train(C, pool.Z, Y, spec.train)
    util = utility_metrics(C, Z_test, Y_test)
    util["n_train"] = len(pool)
    return C, util


# -- attacks -----------------------------------------------------------------


def _image_shape(cfg: ScenarioConfig):
    return (28, 28) if cfg.dataset == "mnist" else None


def _summary(report, cfg: ScenarioConfig) -> dict:
    out = dict(report.metrics)
    if cfg.per_sample:
        out["per_sample"] = {k: np.asarray(v).tolist() for k, v in report.per_sample.items()}
    return out


def run_attacks_at(cfg, parties, handle, budget, epsilon, pool, cache) -> dict:
    """Attacks of the roster against the victim's shares at one budget."""
    attacker = next((p for p in parties if "attacker" in p.roles), None)
    victim = next((p for p in parties if "victim" in p.roles), None)
    if attacker is None or victim is None:
        return {}
    out = {}
    shape = _image_shape(cfg)
    groups = victim.data.groups or None
    Zv, Xv = pool.of(victim.id), victim.data.X
    spec = decoder_spec(cfg, derive_seed(cfg.seed, "party", attacker.id, "sdec"))
    roster = set(cfg.attacks)
    if "recon" in roster or "uniform" in roster:
        out["recon"] = _summary(run_reconstruction_attack(attacker.sdec, Zv, Xv, shape, groups), cfg)
    adv_dec = None
    if "advtrain" in roster or "uniform" in roster:
        m = generate_mask(handle.output_dim, derive_seed(cfg.seed, "attack", "advtrain", epsilon))
        adv_dec = adversarial_training_attack(attacker.data.X, handle, m, budget, spec, sdec=attacker.sdec)
        out["advtrain"] = _summary(run_reconstruction_attack(adv_dec, Zv, Xv, shape, groups), cfg)
    if "uniform" in roster:
        U = uniform_noise(handle.encode(Xv), budget, derive_seed(cfg.seed, "uniform", victim.id, epsilon)).z_hat
        out["uniform_recon"] = _summary(run_reconstruction_attack(attacker.sdec, U, Xv, shape, groups), cfg)
        out["uniform_advtrain"] = _summary(run_reconstruction_attack(adv_dec, U, Xv, shape, groups), cfg)
    if "attribute" in roster and victim.data.A:
        e = cfg.extractor
        r = np.asarray(cfg.fixed_vector, dtype=np.float64)
        for k in range(len(victim.data.A)):
            key = ("extractor", k)
            if key not in cache:
                cache[key] = train_attribute_extractor(attacker.data, handle, k, e.train, e.hidden,
                                                       derive_seed(cfg.seed, "attack", "extractor", k))
            out[f"attribute_{k}"] = _summary(run_attribute_attack(cache[key], Zv, victim.data.A[k], r), cfg)
    return out


def run_mask_overlap(cfg, parties, handle) -> list[dict]:
    """Adversarial-training attack with attacker masks at controlled overlap with the victim's."""
    attacker = next(p for p in parties if "attacker" in p.roles)
    victim = next(p for p in parties if "victim" in p.roles)
    budget = cfg.budget(cfg.mask_epsilon, handle.latent_range)
    Zv = victim.share(victim.data.X, handle, budget, party_lambdas(cfg, victim)).z_hat
    spec = decoder_spec(cfg, derive_seed(cfg.seed, "party", attacker.id, "sdec"))
    rows = []
    for rate in cfg.mask_overlaps:
        m = mask_with_overlap(victim.mask, rate, derive_seed(cfg.seed, "overlap", rate), owner=attacker.id)
        dec = adversarial_training_attack(attacker.data.X, handle, m, budget, spec, sdec=attacker.sdec)
        rep = run_reconstruction_attack(dec, Zv, victim.data.X, _image_shape(cfg), victim.data.groups or None)
        rows.append({"overlap": rate, "realized_overlap": metrics.overlap_rate(m.m, victim.mask.m), **rep.metrics})
    return rows


def run_mask_search(cfg, parties, handle) -> dict:
    attacker = next(p for p in parties if "attacker" in p.roles)
    victim = next(p for p in parties if "victim" in p.roles)
    budget = cfg.budget(cfg.mask_epsilon, handle.latent_range)
    Zv = victim.share(victim.data.X, handle, budget, party_lambdas(cfg, victim)).z_hat
    n_probe = max(1, math.ceil(cfg.probe_fraction * len(victim.data)))
    res = mask_bruteforce_attack(
        attacker.data.X, handle, Zv[:n_probe], victim.data.X[:n_probe], budget, cfg.mask_candidates,
        seed=derive_seed(cfg.seed, "mask_search"),
        spec=decoder_spec(cfg, derive_seed(cfg.seed, "party", attacker.id, "sdec")),
        victim_mask=victim.mask,
    )
    out = dict(res.report.metrics)
    out["scores"] = res.scores
    out["probe_size"] = n_probe
    return out


# -- task independence -------------------------------------------------------


def task_labels(task: str, ds_labels: np.ndarray, attrs: Sequence[np.ndarray] = (), n_classes: int = 10) -> np.ndarray:
    """One-hot labels for ``task`` given digit/class ids (and attributes)."""
    if task == "label":
        return one_hot(ds_labels, n_classes)
    if task.startswith("attribute:"):
        k = int(task.split(":", 1)[1])
        if not 0 <= k < len(attrs):
            raise ConfigError(f"task {task!r}: no such private attribute")
        return attrs[k]
    if task not in DIGIT_TASKS:
        raise ConfigError(f"unknown task {task!r}")
    fn, k = DIGIT_TASKS[task]
    return one_hot(fn(np.asarray(ds_labels)), k)


def run_task_independence_suite(cfg, parties, handle, test: Dataset, tasks: Sequence[str]) -> list[dict]:
    """One shared set, one classifier per task; the set's hash is checked before every task."""
    if not tasks:
        return []
    budget = cfg.budget(cfg.task_epsilon, handle.latent_range)
    pool = run_data_sharing(cfg, parties, handle, budget)
    Z_test = share_test_set(cfg, parties, handle, budget, test)
    digits = np.argmax(pool.Y, axis=1)
    attrs = tuple(np.vstack([p.data.A[k] for p in parties]) for k in range(len(parties[0].data.A)))
    h0 = pool.content_hash()
    rows = []
    for t in tasks:
        if digits.size and t in DIGIT_TASKS and pool.Y.shape[1] != 10:
            raise ConfigError(f"task {t!r} needs 10-class digit labels")
        Y = task_labels(t, digits, attrs, pool.Y.shape[1])
        Yt = task_labels(t, test.labels, test.A, pool.Y.shape[1])
        if pool.content_hash() != h0:
            raise RuntimeError("shared set changed between tasks")
        _, util = run_collaborative_learning(pool, cfg.classifier, derive_seed(cfg.seed, "task", t), Z_test, Yt, Y)
        rows.append({"task": t, "n_classes": int(Y.shape[1]), "content_hash": pool.content_hash(), **util})
    return rows


# -- scenarios ---------------------------------------------------------------


@dataclass
class HorizontalSetup:
    parties: list
    test: Dataset
    handle: EncoderHandle
    autoencoder: Autoencoder
    initiator: int

    def role(self, name: str) -> Party:
        p = next((p for p in self.parties if name in p.roles), None)
        if p is None:
            raise ConfigError(f"no party has the {name} role (K = {len(self.parties)})")
        return p


def setup_horizontal(cfg: ScenarioConfig) -> HorizontalSetup:
    """Data split, encoder publishing and every party's local models."""
    datasets, test = load_scenario_data(cfg)
    handle, ae, init = run_encoder_publishing(cfg, datasets)
    parties = prepare_parties(cfg, datasets, handle, init)
    return HorizontalSetup(parties, test, handle, ae, init)


def run_horizontal(cfg: ScenarioConfig) -> ScenarioReport:
    st = setup_horizontal(cfg)
    parties, test, handle = st.parties, st.test, st.handle
    report = ScenarioReport(cfg.name, cfg.to_dict())
    report.extras["roles"] = {p.id: sorted(p.roles) for p in parties if p.roles}
    report.extras["latent_range"] = handle.latent_range.tolist()
    cache = {}
    for eps in cfg.epsilons:
        budget = cfg.budget(eps, handle.latent_range)
        pool = run_data_sharing(cfg, parties, handle, budget)
        Z_test = share_test_set(cfg, parties, handle, budget, test)
        _, util = run_collaborative_learning(pool, cfg.classifier, derive_seed(cfg.seed, "classifier", eps), Z_test, test.Y)
        row = {
            "epsilon": float(eps),
            "max_bound": float(np.max(budget.bound(handle.output_dim))),
            "pool_size": len(pool),
            "pool_hash": pool.content_hash(),
            "utility": util,
            "attacks": run_attacks_at(cfg, parties, handle, budget, eps, pool, cache),
        }
        report.rows.append(row)
    if cfg.K > 1:
        if "mask_overlap" in cfg.attacks:
            report.extras["mask_overlap"] = {"epsilon": cfg.mask_epsilon, "rows": run_mask_overlap(cfg, parties, handle)}
        if "mask_search" in cfg.attacks:
            report.extras["mask_search"] = {"epsilon": cfg.mask_epsilon, **run_mask_search(cfg, parties, handle)}
    if cfg.tasks:
        report.extras["tasks"] = {"epsilon": cfg.task_epsilon,
                                  "rows": run_task_independence_suite(cfg, parties, handle, test, cfg.tasks)}
    return report


def _concat_aligned(blocks: Sequence[np.ndarray], ids: Sequence[np.ndarray]) -> np.ndarray:
    for other in ids[1:]:
        if not np.array_equal(other, ids[0]):
            raise InvalidPlanError("shared blocks are not aligned on sample ids")
    return np.concatenate(blocks, axis=1)


def run_vertical_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Column-split data over ``vertical.owners`` parties; the label holder learns on concatenated codes.

    For each participant count K the first K owners share. The reconstruction
    columns attack owner 0 (the label holder): an attacker holding
    ``attacker_samples`` other rows of owner 0's columns queries owner 0's
    encoder and runs the adversarial-training attack. ``adv_tr`` is its
    reconstruction accuracy on clean codes, ``rec_acc`` on the shared ones.
    """
    v = cfg.vertical
    N = cfg.samples_per_party
    if cfg.dataset == "synthetic":
        s = cfg.synthetic
        full = synth_gaussian_clusters(N + v.attacker_samples + cfg.test_samples, s.n_features, s.classes,
                                       s.attributes, derive_seed(cfg.seed, "synthetic"), s.separation, s.noise)
        rows_train = np.arange(N)
        rows_aux = np.arange(N, N + v.attacker_samples)
        test = full.subset(np.arange(N + v.attacker_samples, len(full)))
        pool = full
    else:
        pool = load_adult("train")
        order = _pick(len(pool), N + v.attacker_samples, derive_seed(cfg.seed, "vertical", "rows"))
        order = np.random.default_rng(derive_seed(cfg.seed, "vertical", "shuffle")).permutation(order)
        rows_train, rows_aux = np.sort(order[:N]), np.sort(order[N:])
        test_all = load_adult("test")
        test = test_all.subset(_pick(len(test_all), cfg.test_samples, derive_seed(cfg.seed, "test")))
    try:
        plan = PartitionPlan.vertical(pool.n_features, v.owners, label_holder=0)
        train_parts = partition(pool.subset(rows_train), plan)
        aux_parts = partition(pool.subset(rows_aux), plan)
        test_parts = partition(test, plan)
    except InvalidPlanError as exc:
        raise ConfigError(str(exc)) from exc

    a = cfg.autoencoder
    owners, handles = [], []
    for i, part in enumerate(train_parts):
        h = min(v.block_latent_dim, part.n_features)
        ae = train_autoencoder(part.X, h, a.train, v.hidden, derive_seed(cfg.seed, "owner", i, "ae"), a.output)
        handle = publish(ae, part.X)
        mask = generate_mask(h, derive_seed(cfg.seed, "owner", i, "mask"), owner=i)
        roles = {"label_holder", "victim"} if i == plan.label_holder else set()
        # the owner's own decoder doubles as its substitute decoder
        owners.append(Party(i, part, mask, frozenset(roles), ae.dec))
        handles.append(handle)

    report = ScenarioReport(cfg.name, cfg.to_dict())
    report.extras["blocks"] = [[int(s), int(e)] for s, e in plan.assignment]
    attack_cols = {}
    victim, vh = owners[0], handles[0]
    spec = decoder_spec(cfg, derive_seed(cfg.seed, "vertical", "attacker", "sdec"))
    att_sdec = train_substitute_decoder(aux_parts[0].X, vh, spec)
    # columns without a schema (synthetic data) are scored as numeric attributes
    groups = victim.data.groups or tuple((f"x{j}", "numeric", j, j + 1) for j in range(victim.data.n_features))
    for eps in cfg.epsilons:
        budgets = [cfg.budget(eps, h.latent_range) for h in handles]
        shares = [p.share(p.data.X, h, b, (1.0,)) for p, h, b in zip(owners, handles, budgets)]
        test_shares = [p.share(tp.X, h, b, (1.0,)) for p, tp, h, b in zip(owners, test_parts, handles, budgets)]
        m = generate_mask(vh.output_dim, derive_seed(cfg.seed, "vertical", "attack", eps))
        dec = adversarial_training_attack(aux_parts[0].X, vh, m, budgets[0], spec, sdec=att_sdec)
        clean = run_reconstruction_attack(dec, vh.encode(victim.data.X), victim.data.X, groups=groups)
        shared = run_reconstruction_attack(dec, shares[0].z_hat, victim.data.X, groups=groups)
        attack_cols[eps] = {"adv_tr": clean.metrics["rec_acc"], "rec_acc": shared.metrics["rec_acc"],
                            "mse": shared.metrics["mse"]}
        for K in v.participants:
            W = _concat_aligned([s.z_hat for s in shares[:K]], [p.data.ids for p in owners[:K]])
            W_test = _concat_aligned([s.z_hat for s in test_shares[:K]], [tp.ids for tp in test_parts[:K]])
            pool_k = SharedPool(W, victim.data.Y, np.zeros(len(W), dtype=np.int64), victim.data.ids)
            _, util = run_collaborative_learning(pool_k, cfg.classifier, derive_seed(cfg.seed, "vertical", "clf", K, eps),
                                                 W_test, test_parts[0].Y)
            report.rows.append({"K": int(K), "epsilon": float(eps), "utility": util, "attacks": attack_cols[eps]})
    return report


def simulate(cfg: ScenarioConfig, epsilons: Sequence[float] | None = None) -> ScenarioReport:
    if epsilons is not None:
        cfg = cfg.with_epsilons(epsilons)
    if cfg.partition == "vertical":
        return run_vertical_scenario(cfg)
    return run_horizontal(cfg)
