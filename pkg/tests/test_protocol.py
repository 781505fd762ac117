import hashlib
import json

import numpy as np
import pytest

from ars import protocol
from ars.noise import AdversarialRepresentation, NoiseBudget
from ars.protocol import (
    BudgetViolation,
    ConfigError,
    ScenarioConfig,
    derive_seed,
    resolve_roles,
    setup_horizontal,
    simulate,
    task_labels,
)

SMALL = {
    "name": "small",
    "seed": 5,
    "dataset": "synthetic",
    "K": 3,
    "samples_per_party": 150,
    "test_samples": 150,
    "epsilons": [0, 50],
    "epsilon_unit": 0.02,
    "latent_dim": 6,
    "lambdas": [0.5, 0.25, 0.25],
    "attacks": ["recon", "advtrain", "uniform", "attribute", "mask_overlap", "mask_search"],
    "mask_candidates": 2,
    "tasks": ["label", "attribute:1"],
    "autoencoder": {"hidden": [16], "output": "identity", "train": {"epochs": 5}},
    "decoder": {"hidden": [16], "output": "identity", "train": {"epochs": 5}},
    "classifier": {"hidden": [16], "train": {"epochs": 5}},
    "extractor": {"hidden": [8], "train": {"epochs": 5}},
}


def small(**kw):
    return ScenarioConfig.from_dict({**SMALL, **kw})


def test_derive_seed_formula():
    digest = hashlib.sha256(b"party/3/mask").digest()
    expect = (7 ^ int.from_bytes(digest[:8], "little")) & ((1 << 63) - 1)
    assert derive_seed(7, "party", 3, "mask") == expect
    assert derive_seed(7, "a") != derive_seed(8, "a")


@pytest.mark.parametrize("bad", [
    {"K": 0}, {"epsilons": []}, {"epsilons": [-1]}, {"dataset": "cifar"}, {"lambdas": [0.7, 0.7]},
    {"attacks": ["gradient_leak"]}, {"attacker": 1, "victim": 1}, {"attacker": 9}, {"tasks": ["colour"]},
    {"initiator": "smallest"}, {"mask_overlaps": [1.5]}, {"bogus_key": 1}, {"decoder": {"depth": 3}},
    {"decoder": {"train": {"learning_rate": -1}}}, {"partition": "diagonal"},
    {"partition": "vertical", "dataset": "mnist"}, {"synthetic": {"dims": 3}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        small(**bad)


def test_config_roundtrip_and_load(tmp_path):
    cfg = small()
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SMALL))
    assert ScenarioConfig.load(p) == cfg
    t = tmp_path / "c.toml"
    t.write_text('dataset = "synthetic"\nK = 2\nepsilons = [0, 10]\n[decoder]\nhidden = [8]\n')
    c2 = ScenarioConfig.load(t)
    assert c2.K == 2 and c2.decoder.hidden == (8,) and c2.epsilons == (0.0, 10.0)
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.toml")
    (tmp_path / "broken.toml").write_text("K = = 2")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "broken.toml")


def test_shipped_configs_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    for p in sorted(root.glob("*.toml")):
        ScenarioConfig.load(p)


def test_relative_budget_scales_with_range():
    cfg = small()
    b = cfg.budget(50, np.array([1.0, 2.0]))
    np.testing.assert_allclose(b.epsilon, [1.0, 2.0])
    absolute = small(epsilon_mode="absolute").budget(0.5, np.array([1.0, 2.0]))
    assert absolute.epsilon == 0.5


def test_roles():
    cfg = small()
    assert resolve_roles(cfg, 0) == (2, 1)
    assert resolve_roles(small(attacker=0), 0) == (0, 1)
    assert resolve_roles(small(K=1), 0) == (-1, -1)


def test_task_labels():
    d = np.array([0, 3, 5, 8])
    np.testing.assert_array_equal(task_labels("parity", d).argmax(1), [0, 1, 1, 0])
    np.testing.assert_array_equal(task_labels("loop", d).argmax(1), [1, 0, 0, 1])
    np.testing.assert_array_equal(task_labels("high", d).argmax(1), [0, 0, 1, 1])
    with pytest.raises(ConfigError):
        task_labels("attribute:2", d, ())


@pytest.fixture(scope="module")
def setup():
    return setup_horizontal(small())


def test_setup_assigns_roles_and_private_state(setup):
    roles = {p.id: p.roles for p in setup.parties}
    assert "initiator" in roles[setup.initiator]
    assert setup.role("attacker").id == 2 and setup.role("victim").id == 1
    masks = [p.mask.m for p in setup.parties]
    assert not np.array_equal(masks[0], masks[1])
    assert all(len(p.extractors) == 2 for p in setup.parties)


def test_shared_pool_carries_no_private_state(setup):
    cfg = small()
    budget = cfg.budget(50, setup.handle.latent_range)
    pool = protocol.run_data_sharing(cfg, setup.parties, setup.handle, budget)
    recs = pool.records()
    assert len(recs) == 450
    assert set(recs[0]) == {"party_id", "sample_id", "z_hat", "label"}
    # every shared code is within budget of the clean code
    for p in setup.parties:
        diff = np.abs(pool.of(p.id) - setup.handle.encode(p.data.X))
        assert np.all(diff <= budget.bound(6) + 1e-9)


def test_party_refuses_over_budget_share(setup, monkeypatch):
    p = setup.parties[0]
    budget = NoiseBudget(0.1)

    def cheat(X, handle, models, mask, budget, lambdas=None):
        Z = handle.encode(X)
        return AdversarialRepresentation(Z + 1.0, Z, np.ones_like(Z), budget)

    monkeypatch.setattr(protocol, "share_representations", cheat)
    with pytest.raises(BudgetViolation):
        p.share(p.data.X, setup.handle, budget)


def test_simulate_is_deterministic_and_complete():
    a = simulate(small())
    b = simulate(small())
    assert a.to_json() == b.to_json()
    assert [r["epsilon"] for r in a.rows] == [0.0, 50.0]
    row = a.rows[1]
    assert {"recon", "advtrain", "uniform_recon", "uniform_advtrain", "attribute_0", "attribute_1"} <= set(row["attacks"])
    assert row["pool_size"] == 450
    assert [r["overlap"] for r in a.extras["mask_overlap"]["rows"]] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert "best_overlap" in a.extras["mask_search"]
    tasks = a.extras["tasks"]["rows"]
    assert len({t["content_hash"] for t in tasks}) == 1
    # zero budget leaves codes untouched, so the row is noise free
    assert a.rows[0]["max_bound"] == 0.0


def test_different_seed_changes_report():
    assert simulate(small(epsilons=[0])).to_json() != simulate(small(epsilons=[0], seed=6)).to_json()


def test_report_csv_long_form(tmp_path):
    rep = simulate(small(epsilons=[0], attacks=["recon"], tasks=[]))
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "epsilon,metric,value,seed"
    assert any(",utility.accuracy," in l for l in lines)
    assert all(l.endswith(",5") for l in lines[1:])


def test_single_party_runs_without_attacks():
    rep = simulate(small(K=1, epsilons=[0], tasks=[]))
    assert rep.rows[0]["attacks"] == {}


def test_vertical_synthetic_scenario():
    cfg = small(
        partition="vertical", samples_per_party=200, test_samples=100, epsilons=[0, 50], lambdas=None, tasks=[],
        vertical={"owners": 3, "participants": [1, 3], "block_latent_dim": 2, "hidden": [8], "attacker_samples": 100},
        synthetic={"n_features": 9},
    )
    rep = simulate(cfg)
    assert [(r["K"], r["epsilon"]) for r in rep.rows] == [(1, 0.0), (3, 0.0), (1, 50.0), (3, 50.0)]
    assert rep.extras["blocks"] == [[0, 3], [3, 6], [6, 9]]
    # one attack per budget, reported on every K row
    assert rep.rows[0]["attacks"] == rep.rows[1]["attacks"]
