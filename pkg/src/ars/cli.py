"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments or configuration (including
missing input files), 3 failure while running.

Every command that writes results first writes ``<output>.manifest.json``
(command line, config, seed, outputs, code version, start time); result
files name their manifest.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .attacks import (
    adversarial_training_attack,
    mask_bruteforce_attack,
    run_attribute_attack,
    run_reconstruction_attack,
    train_attribute_extractor,
)
from .noise import generate_mask, write_shares
from .protocol import (
    ConfigError,
    ScenarioConfig,
    decoder_spec,
    derive_seed,
    party_lambdas,
    setup_horizontal,
    simulate,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _code_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"ars-{__version__}"


def write_manifest(output: Path, args, cfg: ScenarioConfig | None, outputs: list[Path]) -> Path:
    path = output.with_name(output.name + ".manifest.json")
    doc = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config_path": str(getattr(args, "config", "") or ""),
        "seed": cfg.seed if cfg is not None else None,
        "config": cfg.to_dict() if cfg is not None else None,
        "outputs": [str(p) for p in outputs],
        "code_version": _code_version(),
        "started": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _epsilon_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("epsilons must be nonnegative")
    return vals


def _write_json(path: Path, doc: dict, manifest: Path) -> None:
    doc = {**doc, "manifest": manifest.name}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- commands ----------------------------------------------------------------


def cmd_publish(args) -> None:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = write_manifest(out / "encoder", args, cfg, [out / "enc.json", out / "dec.json", out / "encoder.json"])
    st = setup_horizontal(replace(cfg, attacks=(), tasks=()))
    st.autoencoder.save(out)
    _write_json(out / "encoder.json", {
        "initiator": st.initiator,
        "latent_dim": st.handle.output_dim,
        "input_dim": st.handle.input_dim,
        "latent_range": st.handle.latent_range.tolist(),
    }, manifest)
    print(f"published {st.handle} from party {st.initiator} to {out}")


def cmd_share(args) -> None:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = write_manifest(out, args, cfg, [out])
    st = setup_horizontal(cfg)
    eps = cfg.mask_epsilon if args.epsilon is None else args.epsilon
    budget = cfg.budget(eps, st.handle.latent_range)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("")
    total = 0
    for p in st.parties:
        rep = p.share(p.data.X, st.handle, budget, party_lambdas(cfg, p))
        write_shares(out, p.id, rep.z_hat, p.data.Y, p.data.ids)
        total += len(p.data)
    print(f"wrote {total} shared records at epsilon={eps:g} to {out} (manifest {manifest.name})")


def cmd_attack(args) -> None:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = write_manifest(out, args, cfg, [out] + ([Path(args.csv)] if args.csv else []))
    if cfg.partition != "horizontal":
        raise ConfigError("single attacks run on horizontal scenarios; use simulate for vertical ones")
    st = setup_horizontal(replace(cfg, attacks=(), tasks=()))
    attacker, victim = st.role("attacker"), st.role("victim")
    handle = st.handle
    eps = cfg.mask_epsilon if args.epsilon is None else args.epsilon
    budget = cfg.budget(eps, handle.latent_range)
    Zv = victim.share(victim.data.X, handle, budget, party_lambdas(cfg, victim)).z_hat
    shape = (28, 28) if cfg.dataset == "mnist" else None
    groups = victim.data.groups or None
    spec = decoder_spec(cfg, derive_seed(cfg.seed, "party", attacker.id, "sdec"))
    conf = {"epsilon": eps, "attacker": attacker.id, "victim": victim.id, "decoder": spec.to_dict()}
    if args.kind == "recon":
        report = run_reconstruction_attack(attacker.sdec, Zv, victim.data.X, shape, groups, "recon", conf)
    elif args.kind == "advtrain":
        m = generate_mask(handle.output_dim, derive_seed(cfg.seed, "attack", "advtrain", eps))
        dec = adversarial_training_attack(attacker.data.X, handle, m, budget, spec, sdec=attacker.sdec)
        report = run_reconstruction_attack(dec, Zv, victim.data.X, shape, groups, "advtrain", conf)
    elif args.kind == "attr":
        if not victim.data.A:
            raise ConfigError("the dataset has no private attributes to attack")
        k = args.attribute
        if not 0 <= k < len(victim.data.A):
            raise ConfigError(f"attribute {k} out of range ({len(victim.data.A)} attributes)")
        e = cfg.extractor
        F = train_attribute_extractor(attacker.data, handle, k, e.train, e.hidden,
                                      derive_seed(cfg.seed, "attack", "extractor", k))
        report = run_attribute_attack(F, Zv, victim.data.A[k], cfg.fixed_vector, {**conf, "attribute": k})
    else:
        n_probe = max(1, int(np.ceil(cfg.probe_fraction * len(victim.data))))
        res = mask_bruteforce_attack(
            attacker.data.X, handle, Zv[:n_probe], victim.data.X[:n_probe], budget, args.candidates,
            seed=derive_seed(cfg.seed, "mask_search"), spec=spec, victim_mask=victim.mask,
        )
        report = res.report
        report.config.update(conf)
        report.metrics["scores"] = res.scores
    _write_json(out, report.to_dict(include_samples=args.per_sample), manifest)
    if args.csv:
        report.to_csv(args.csv)
    summary = {k: v for k, v in report.metrics.items() if isinstance(v, float)}
    print(json.dumps({"kind": report.kind, **summary}, sort_keys=True))


def cmd_simulate(args) -> None:
    cfg = _load_config(args)
    if args.epsilon is not None:
        cfg = cfg.with_epsilons(args.epsilon)
    out = Path(args.out)
    outputs = [out] + ([Path(args.csv)] if args.csv else [])
    manifest = write_manifest(out, args, cfg, outputs)
    report = simulate(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = json.loads(report.to_json())
    doc["manifest"] = manifest.name
    out.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    if args.csv:
        report.to_csv(args.csv)
    print(f"{len(report.rows)} rows -> {out}")


def cmd_mask_analyze(args) -> None:
    methods = ["exact", "normal_approx"] if args.method == "both" else [args.method]
    ts = args.t
    rows = []
    for t in ts:
        for m in methods:
            try:
                p = metrics.overlap_probability(args.n, t, m)
            except metrics.MetricError as exc:
                raise ConfigError(str(exc)) from exc
            rows.append({"n": args.n, "t": t, "method": m, "probability": p})
    if args.out:
        out = Path(args.out)
        manifest = write_manifest(out, args, None, [out])
        _write_json(out, {"rows": rows}, manifest)
    print("n,t,method,probability")
    for r in rows:
        print(f"{r['n']},{r['t']!r},{r['method']},{r['probability']:.6e}")


def cmd_report(args) -> None:
    out = Path(args.out)
    manifest = write_manifest(out, args, None, [out])
    merged = []
    for path in args.inputs:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"input not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except ValueError as exc:
            raise ConfigError(f"{p}: not JSON ({exc})") from exc
        if "rows" not in doc or "config" not in doc:
            raise ConfigError(f"{p}: not a scenario report")
        merged.append(doc)
    if out.suffix == ".csv":
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "epsilon", "metric", "value", "seed"])
            for doc in merged:
                for row in doc["rows"]:
                    for key, val in _flat(row):
                        if key != "epsilon" and isinstance(val, (int, float)) and not isinstance(val, bool):
                            w.writerow([doc["name"], row.get("epsilon"), key, repr(float(val)), doc["config"].get("seed")])
        fh_note = f"(manifest {manifest.name})"
    else:
        _write_json(out, {"reports": merged}, manifest)
        fh_note = ""
    print(f"merged {len(merged)} reports -> {out} {fh_note}".rstrip())


def _flat(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flat(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ars", description="Adversarial representation sharing experiments.")
    ap.add_argument("--version", action="version", version=f"ars {__version__}")
    ap.add_argument("--data-dir", help="dataset root (overrides ARS_DATA_DIR)")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def with_config(p):
        p.add_argument("--config", required=True, help="scenario config (.toml or .json)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("publish", help="train the initiator's autoencoder and save the encoder")
    with_config(p)
    p.add_argument("--out", required=True, help="output directory for enc.json / dec.json / encoder.json")
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("share", help="write every party's perturbed codes as JSON lines")
    with_config(p)
    p.add_argument("--epsilon", type=float, help="noise budget (default: config mask_epsilon)")
    p.add_argument("--out", required=True, help="output .jsonl file")
    p.set_defaults(func=cmd_share)

    p = sub.add_parser("attack", help="run one attack against the victim party")
    p.add_argument("kind", choices=["recon", "advtrain", "attr", "mask-search"])
    with_config(p)
    p.add_argument("--epsilon", type=float, help="noise budget (default: config mask_epsilon)")
    p.add_argument("--candidates", type=int, default=8, help="mask-search: number of candidate masks")
    p.add_argument("--attribute", type=int, default=0, help="attr: index of the private attribute")
    p.add_argument("--per-sample", action="store_true", help="include per-sample records in the JSON report")
    p.add_argument("--csv", help="also write per-sample records as CSV")
    p.add_argument("--out", required=True, help="output report .json")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("simulate", help="run a full scenario over an epsilon grid")
    with_config(p)
    p.add_argument("--epsilon", type=_epsilon_list, help="comma-separated grid overriding the config, e.g. 0,25,50")
    p.add_argument("--csv", help="also write long-form epsilon,metric,value,seed CSV")
    p.add_argument("--out", required=True, help="output ScenarioReport .json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mask-analyze", help="probability that two random masks overlap more than t")
    p.add_argument("--n", type=int, required=True, help="mask length")
    p.add_argument("--t", type=float, nargs="+", required=True, help="overlap threshold(s) in (1/2, 1]")
    p.add_argument("--method", choices=["exact", "normal_approx", "both"], default="exact")
    p.add_argument("--out", help="optional JSON output")
    p.set_defaults(func=cmd_mask_analyze)

    p = sub.add_parser("report", help="merge scenario reports into one CSV or JSON")
    p.add_argument("inputs", nargs="+", help="ScenarioReport JSON files")
    p.add_argument("--out", required=True, help="merged output (.csv or .json)")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.data_dir:
        os.environ["ARS_DATA_DIR"] = args.data_dir
    if getattr(args, "candidates", 1) < 1:
        print("error: --candidates must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure while running maps to one exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
