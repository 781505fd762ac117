import json

import numpy as np
import pytest

from ars.attacks import (
    AttackError,
    AttackReport,
    DecoderSpec,
    adversarial_training_attack,
    mask_bruteforce_attack,
    run_attribute_attack,
    run_reconstruction_attack,
    train_attribute_extractor,
    train_substitute_decoder,
)
from ars.data import synth_gaussian_clusters
from ars.nn import TrainConfig, mlp
from ars.noise import NoiseBudget, generate_mask, mask_with_overlap, masked_ifgsm
from ars.representation import publish, train_autoencoder

SPEC = DecoderSpec(hidden=(32,), output="identity",
                   cfg=TrainConfig(learning_rate=3e-3, batch_size=32, epochs=30, optimizer="adam"), seed=1)


@pytest.fixture(scope="module")
def world():
    ds = synth_gaussian_clusters(900, 8, 3, private_attr_planes=1, seed=2, separation=3.0)
    ae = train_autoencoder(ds.X[:300], 6, TrainConfig(learning_rate=3e-3, batch_size=32, epochs=40, optimizer="adam"),
                           hidden=(16,), seed=0, output="identity")
    handle = publish(ae, ds.X[:300])
    return ds, handle


def test_substitute_decoder_beats_mean_predictor(world):
    ds, handle = world
    att, vic = ds.subset(np.arange(300, 600)), ds.subset(np.arange(600, 900))
    dec = train_substitute_decoder(att.X, handle, SPEC)
    rep = run_reconstruction_attack(dec, handle.encode(vic.X), vic.X)
    baseline = np.mean((vic.X - att.X.mean(0)) ** 2)
    assert rep.metrics["mse"] < 0.5 * baseline
    assert rep.metrics["reconstruction_loss_signed"] == -rep.metrics["mse"]


def test_recompute_matches_reported(world):
    ds, handle = world
    dec = train_substitute_decoder(ds.X[300:600], handle, SPEC)
    rep = run_reconstruction_attack(dec, handle.encode(ds.X[600:]), ds.X[600:])
    for k, v in rep.recompute().items():
        assert rep.metrics[k] == pytest.approx(v)


def test_advtrain_zero_budget_returns_plain_decoder(world):
    ds, handle = world
    sdec = train_substitute_decoder(ds.X[300:600], handle, SPEC)
    out = adversarial_training_attack(ds.X[300:600], handle, generate_mask(6, 0), NoiseBudget(0.0), SPEC, sdec=sdec)
    assert out is sdec


def test_advtrain_with_victims_mask_recovers_from_noise(world):
    ds, handle = world
    Xa, Xv = ds.X[300:600], ds.X[600:]
    sdec = train_substitute_decoder(Xa, handle, SPEC)
    vm = generate_mask(6, 7)
    budget = NoiseBudget(0.3 * handle.latent_range)
    Zv = masked_ifgsm(handle.encode(Xv), Xv, sdec, vm, budget).z_hat
    plain = run_reconstruction_attack(sdec, Zv, Xv).metrics["mse"]
    enhanced = adversarial_training_attack(Xa, handle, vm, budget, SPEC, sdec=sdec)
    assert run_reconstruction_attack(enhanced, Zv, Xv).metrics["mse"] < plain


def test_attribute_extractor_and_attack(world):
    ds, handle = world
    att = ds.subset(np.arange(300, 600))
    cfg = TrainConfig(learning_rate=3e-3, batch_size=32, epochs=30, loss="cross_entropy", optimizer="adam")
    F = train_attribute_extractor(att, handle, 0, cfg, hidden=(16,), seed=0)
    vic = ds.subset(np.arange(600, 900))
    rep = run_attribute_attack(F, handle.encode(vic.X), vic.A[0], [1.0, 0.0])
    assert rep.metrics["accuracy"] > 0.6
    assert 0 <= rep.metrics["equal_to_r"] <= 1
    with pytest.raises(AttackError):
        train_attribute_extractor(att, handle, 3, cfg)
    with pytest.raises(AttackError):
        train_attribute_extractor(att, handle, 0, TrainConfig())


def test_reconstruction_attack_input_checks(world):
    ds, handle = world
    dec = mlp([4, 8], "decoder", 0)
    with pytest.raises(AttackError):
        run_reconstruction_attack(dec, np.zeros((3, 5)), np.zeros((3, 8)))
    with pytest.raises(AttackError):
        run_reconstruction_attack(dec, np.zeros((3, 4)), np.zeros((2, 8)))


def test_image_and_tabular_metrics():
    dec = mlp([2, 64], "decoder", 0, output="sigmoid")
    rep = run_reconstruction_attack(dec, np.zeros((3, 2)), np.full((3, 64), 0.5), image_shape=(8, 8))
    assert "ssim" in rep.per_sample and len(rep.per_sample["ssim"]) == 3
    rep = run_reconstruction_attack(dec, np.zeros((3, 2)), np.full((3, 64), 0.5), groups=[("g", "numeric", 0, 1)])
    assert rep.metrics["rec_acc"] == 1.0


def test_report_serialization(tmp_path):
    rep = AttackReport("recon", {"mse": np.array([0.1, 0.3]), "psnr": np.array([10.0, 5.0])}, {"mse": 0.2}, {"eps": 1})
    doc = json.loads(rep.to_json())
    assert doc["per_sample"]["mse"] == [0.1, 0.3]
    assert "per_sample" not in rep.to_dict(include_samples=False)
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "sample,mse,psnr" and len(lines) == 3


def test_mask_search_prefers_the_victims_mask(world):
    ds, handle = world
    Xa, Xv = ds.X[300:600], ds.X[600:700]
    sdec = train_substitute_decoder(Xa, handle, SPEC)
    vm = generate_mask(6, 11)
    budget = NoiseBudget(0.4 * handle.latent_range)
    Zv = masked_ifgsm(handle.encode(Xv), Xv, sdec, vm, budget).z_hat
    cands = [mask_with_overlap(vm, 0.0, 1), mask_with_overlap(vm, 1.0, 2)]
    res = mask_bruteforce_attack(Xa, handle, Zv, Xv, budget, cands, spec=SPEC, victim_mask=vm)
    assert res.report.metrics["best_index"] == 1
    assert res.report.metrics["best_overlap"] == 1.0
    assert res.report.metrics["candidate_overlaps"] == [0.0, 1.0]
    assert len(res.scores) == 2


def test_mask_search_needs_candidates(world):
    ds, handle = world
    with pytest.raises(AttackError):
        mask_bruteforce_attack(ds.X[:10], handle, np.zeros((1, 6)), ds.X[:1], NoiseBudget(0.1), 0, spec=SPEC)
    with pytest.raises(AttackError):
        mask_bruteforce_attack(ds.X[:10], handle, np.zeros((1, 6)), ds.X[:1], NoiseBudget(0.1), [], spec=SPEC)
