import json
import subprocess
import sys

import pytest

from ars.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

TINY = """
name = "tiny"
seed = 3
dataset = "synthetic"
K = 3
samples_per_party = 120
test_samples = 90
epsilons = [0, 25]
epsilon_unit = 0.02
lambdas = [0.5, 0.25, 0.25]
latent_dim = 6
attacks = ["recon", "attribute"]

[autoencoder]
hidden = [16]
output = "identity"
train = { epochs = 4 }

[decoder]
hidden = [16]
output = "identity"
train = { epochs = 4 }

[classifier]
hidden = [16]
train = { epochs = 4 }

[extractor]
hidden = [8]
train = { epochs = 4 }
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def test_simulate_writes_report_csv_and_manifest(tmp_path, cfg, capsys):
    out = tmp_path / "r.json"
    assert main(["simulate", "--config", str(cfg), "--epsilon", "0,10,25", "--out", str(out), "--csv", str(tmp_path / "r.csv")]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert [r["epsilon"] for r in doc["rows"]] == [0.0, 10.0, 25.0]
    assert doc["manifest"] == "r.json.manifest.json"
    man = json.loads((tmp_path / "r.json.manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 3
    assert str(out) in man["outputs"]
    assert {"code_version", "started", "config"} <= set(man)
    assert (tmp_path / "r.csv").read_text().startswith("epsilon,metric,value,seed\n")


def test_simulate_twice_is_byte_identical(tmp_path, cfg):
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d / "r.json")]) == EXIT_OK
    assert (tmp_path / "a" / "r.json").read_bytes() == (tmp_path / "b" / "r.json").read_bytes()


def test_seed_override(tmp_path, cfg):
    assert main(["simulate", "--config", str(cfg), "--seed", "11", "--epsilon", "0", "--out", str(tmp_path / "r.json")]) == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text())["config"]["seed"] == 11


@pytest.mark.parametrize("kind", ["recon", "advtrain", "attr", "mask-search"])
def test_attack_kinds(tmp_path, cfg, kind, capsys):
    out = tmp_path / "a.json"
    argv = ["attack", kind, "--config", str(cfg), "--epsilon", "25", "--out", str(out), "--candidates", "2", "--per-sample"]
    assert main(argv) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["config"]["epsilon"] == 25.0
    assert doc["per_sample"]
    if kind == "mask-search":
        assert 0.0 <= doc["metrics"]["best_overlap"] <= 1.0
        assert len(doc["metrics"]["scores"]) == 2
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["kind"] in ("recon", "advtrain", "attribute", "mask_search")


def test_share_and_publish(tmp_path, cfg):
    assert main(["share", "--config", str(cfg), "--epsilon", "25", "--out", str(tmp_path / "s.jsonl")]) == EXIT_OK
    lines = (tmp_path / "s.jsonl").read_text().splitlines()
    assert len(lines) == 360
    assert set(json.loads(lines[0])) == {"party_id", "sample_id", "z_hat", "label"}
    assert main(["publish", "--config", str(cfg), "--out", str(tmp_path / "pub")]) == EXIT_OK
    assert {p.name for p in (tmp_path / "pub").iterdir()} >= {"enc.json", "dec.json", "encoder.json"}


def test_mask_analyze(capsys):
    assert main(["mask-analyze", "--n", "256", "--t", "0.75", "--method", "exact"]) == EXIT_OK
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert float(line.split(",")[-1]) <= 2.449e-16
    assert main(["mask-analyze", "--n", "4", "--t", "0.75"]) == EXIT_OK
    assert float(capsys.readouterr().out.strip().splitlines()[-1].split(",")[-1]) == pytest.approx(5 / 16)


def test_report_merges(tmp_path, cfg):
    main(["simulate", "--config", str(cfg), "--epsilon", "0", "--out", str(tmp_path / "r.json")])
    assert main(["report", str(tmp_path / "r.json"), "--out", str(tmp_path / "m.csv")]) == EXIT_OK
    head = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert head == "scenario,epsilon,metric,value,seed"
    assert main(["report", str(tmp_path / "r.json"), "--out", str(tmp_path / "m.json")]) == EXIT_OK
    assert len(json.loads((tmp_path / "m.json").read_text())["reports"]) == 1


def test_error_exit_codes(tmp_path, cfg, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "x.json")]) == EXIT_CONFIG
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text('K = 0\n')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x.json")]) == EXIT_CONFIG
    assert main(["mask-analyze", "--n", "8", "--t", "0.3"]) == EXIT_CONFIG
    assert main(["report", str(tmp_path / "missing.json"), "--out", str(tmp_path / "m.csv")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--config", str(cfg), "--out", "x", "--frobnicate"])
    assert info.value.code == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["attack", "steal", "--config", str(cfg), "--out", "x"])
    assert info.value.code == EXIT_CONFIG


def test_runtime_failure_exit_code(tmp_path, cfg, monkeypatch):
    import ars.cli

    def boom(cfg):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(ars.cli, "simulate", boom)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == EXIT_RUNTIME


def test_help_lists_every_subcommand():
    out = subprocess.run([sys.executable, "-m", "ars", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("publish", "share", "attack", "simulate", "mask-analyze", "report"):
        assert cmd in out.stdout
    out = subprocess.run([sys.executable, "-m", "ars", "attack", "--help"], capture_output=True, text=True)
    for flag in ("--candidates", "--epsilon", "--seed", "--config", "--out"):
        assert flag in out.stdout
