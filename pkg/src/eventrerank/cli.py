"""Command-line entry point: ``eventrerank <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import io
from .config import ConfigError, ExperimentConfig, load_config
from .core import HorizonRangeError, SequenceError, SequenceLengthError
from .energy import EnergyFunction, continuation_features, prefix_tail_counts
from .fitting import NumericalError, fit_mle
from .inference import InferConfig, predict
from .metrics import (
    InsufficientDataError,
    OtdConfig,
    cascading_analysis,
    energy_histogram_export,
    evaluate,
    histogram_csv,
)
from .models import IntensityModel
from .nce import train_energy
from .rng import RngStream
from .synth import SynthSpec, SynthSpecError, generate
from .thinning import ThinningError, default_workers

logger = logging.getLogger("eventrerank")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DATA_ERRORS = (io.DataError, SequenceError, HorizonRangeError, SequenceLengthError,
               InsufficientDataError)
NUMERIC_ERRORS = (NumericalError, ThinningError, FloatingPointError)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(io.dump_json(obj) + "\n")


def load_split(cfg: ExperimentConfig, split: str):
    """The dataset for ``split``, generated when the config carries a synth spec for it."""
    if split in cfg.synth:
        return generate(cfg.synth[split])
    if split not in cfg.data:
        return None
    return io.load_dataset(cfg.data[split], cfg.num_types)


def _expect_model(obj, kind, path):
    ok = isinstance(obj, EnergyFunction) if kind == "energy" else isinstance(obj, IntensityModel)
    if not ok:
        raise io.ModelFormatError(f"{path}: expected a {kind} model, found {type(obj).__name__}")
    return obj


# ---------------------------------------------------------------- commands

def run_fit_base(cfg: ExperimentConfig, out: Path) -> IntensityModel:
    train, dev = load_split(cfg, "train"), load_split(cfg, "dev")
    history: list = []
    model = fit_mle(cfg.base_family, train, cfg.base_optimizer, dev=dev, history=history)
    io.save_model(out / "base.model", model)
    io.write_jsonl(out / "base_log.jsonl", history)
    n_train = max(len(train), 1)
    summary = {
        "family": cfg.base_family,
        "parameters": model.to_vector().tolist(),
        "train_ll_per_seq": model.batch_log_likelihood(train.sequences) / n_train,
    }
    if dev is not None:
        summary["dev_ll_per_seq"] = model.batch_log_likelihood(dev.sequences) / max(len(dev), 1)
    _write_json(out / "base_summary.json", summary)
    return model


def run_fit_energy(cfg: ExperimentConfig, base: IntensityModel, out: Path) -> EnergyFunction:
    train = cfg.horizon.split(load_split(cfg, "train"))
    dev_data = load_split(cfg, "dev")
    dev = cfg.horizon.split(dev_data) if dev_data is not None else None
    root = RngStream(cfg.seed)
    init = EnergyFunction(cfg.feature_config(), cfg.hidden,
                          rng=root.named("energy-init").generator())
    history: list = []
    fn = train_energy(base, init, train, cfg.train, rng=root.named("nce"), dev=dev,
                      history=history)
    io.save_model(out / "energy.model", fn)
    io.write_jsonl(out / "energy_log.jsonl", history)
    best = min(history[1:] or history, key=lambda r: r["dev_loss"])
    _write_json(out / "energy_summary.json", {
        "objective": cfg.train.objective,
        "regularize": cfg.train.regularize,
        "N": cfg.train.N,
        "epochs_run": len(history) - 1,
        "best_epoch": best["epoch"],
        "best_dev_loss": best["dev_loss"],
        "initial_dev_loss": history[0]["dev_loss"],
    })
    return fn


def run_predict(cfg: ExperimentConfig, base, energy: EnergyFunction, out: Path) -> Path:
    test = load_split(cfg, "test")
    splits = cfg.horizon.split(test)
    stream = RngStream(cfg.seed).named("proposals")
    fcfg = energy.cfg

    def one(i):
        sp = splits[i]
        chosen, proposals = predict(base, energy, sp.prefix, sp.T_prime, cfg.infer,
                                    stream.spawn(i))
        tail = prefix_tail_counts(sp.prefix, sp.T, sp.T_prime - sp.T, fcfg.num_types)
        e_truth = float(energy.energies(
            continuation_features(tail, sp.truth, sp.T, sp.T_prime, fcfg))[0])
        return io.prediction_record(test.seq_ids[i], sp.T, sp.T_prime, chosen, proposals,
                                    e_truth)

    workers = default_workers()
    if workers > 1 and len(splits) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, range(len(splits))))
    else:
        records = [one(i) for i in range(len(splits))]
    path = out / "predictions.jsonl"
    io.write_jsonl(path, records)
    return path


def _pairs(records, truth: "io.Dataset", key):
    by_id = dict(zip(truth.seq_ids, truth.sequences))
    pairs = []
    for rec in records:
        if rec["seq_id"] not in by_id:
            raise io.DataError(f"prediction for unknown seq_id {rec['seq_id']!r}")
        seq = by_id[rec["seq_id"]]
        pairs.append((seq.window(rec["T"], rec["T_prime"]), io.record_sequence(rec, key)))
    return pairs


def _cascading(pairs):
    try:
        return cascading_analysis(pairs).to_dict()
    except InsufficientDataError as exc:
        return {"error": str(exc)}


def run_evaluate(pred_path, truth_path, out: Path, otd_cfg: OtdConfig | None = None,
                 num_types: int | None = None) -> dict:
    records = io.read_jsonl(pred_path)
    truth = io.load_dataset(truth_path, num_types)
    K = truth.num_types
    otd_cfg = otd_cfg or OtdConfig()
    report = {"num_types": K}
    for label, key in (("hypro", "events"), ("base", "base_events")):
        if records and key not in records[0]:
            continue
        pairs = _pairs(records, truth, key)
        rep = evaluate(pairs, K, otd_cfg)
        report[label] = {**rep.to_dict(), "cascading": _cascading(pairs)}
    if "base" in report and report["base"]["rmse"] > 0:
        report["rmse_ratio"] = report["hypro"]["rmse"] / report["base"]["rmse"]
    _write_json(out / "report.json", report)

    pops = {
        "truth": [r["truth_energy"] for r in records if "truth_energy" in r],
        "proposals": [e for r in records for e in r.get("energies", [])],
        "chosen": [min(r["energies"]) for r in records if r.get("energies")],
    }
    pops = {k: v for k, v in pops.items() if v}
    if pops:
        allv = np.concatenate([np.asarray(v, float) for v in pops.values()])
        lo, hi = float(allv.min()), float(allv.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        rows = [row for label, v in pops.items()
                for row in energy_histogram_export(label, v, range=(lo, hi))]
        (out / "energy_histograms.csv").write_text(histogram_csv(rows))
    return report


def run_synth(spec_path, out_path) -> None:
    spec_path = Path(spec_path)
    if not spec_path.exists():
        raise ConfigError(f"spec file not found: {spec_path}")
    try:
        raw = yaml.safe_load(spec_path.read_text())
        spec = SynthSpec.from_dict(raw)
    except (yaml.YAMLError, TypeError, SynthSpecError) as exc:
        raise ConfigError(f"{spec_path}: {exc}") from None
    io.save_dataset(generate(spec), out_path)


def run_pipeline(cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    for split, spec in cfg.synth.items():
        path = out / "data" / f"{split}.jsonl"
        io.save_dataset(generate(spec), path)
        cfg.data[split] = path
    cfg.synth = {}
    _write_json(out / "config.resolved.json",
                {**cfg.to_dict(), "data": {k: Path(v).name for k, v in cfg.data.items()}})
    base = run_fit_base(cfg, out / "base")
    energy = run_fit_energy(cfg, base, out / "energy")
    pred = run_predict(cfg, base, energy, out / "predict")
    report = run_evaluate(pred, cfg.data["test"], out / "eval", cfg.otd, cfg.num_types)
    _write_json(out / "metrics.json", io.strip_wall_clock(report))
    return report


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eventrerank",
                                description="Long-horizon event sequence prediction "
                                            "with energy-based reranking.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit-base", help="fit the autoregressive base model by MLE")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("fit-energy", help="train the energy function by NCE")
    s.add_argument("--config", required=True)
    s.add_argument("--base", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--objective", choices=("binary", "multi"))
    s.add_argument("--regularize", action="store_true")
    s.add_argument("--n-noise", type=int, dest="n_noise")

    s = sub.add_parser("predict", help="rerank base-model proposals over the test split")
    s.add_argument("--config", required=True)
    s.add_argument("--base", required=True)
    s.add_argument("--energy", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--m-proposals", type=int, dest="m_proposals")

    s = sub.add_parser("evaluate", help="score predictions against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="optional; supplies the OTD settings and K")

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("pipeline", help="synth (if configured), fit, predict, evaluate")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    return p


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "synth":
        run_synth(args.spec, args.out)
        return
    if cmd == "evaluate":
        cfg = load_config(args.config, check_paths=False) if args.config else None
        run_evaluate(args.pred, args.truth, Path(args.out),
                     cfg.otd if cfg else None, cfg.num_types if cfg else None)
        return
    cfg = load_config(args.config)
    out = Path(args.out)
    if cmd == "pipeline":
        run_pipeline(cfg, out)
    elif cmd == "fit-base":
        run_fit_base(cfg, out)
    elif cmd == "fit-energy":
        overrides = {"objective": args.objective, "N": args.n_noise,
                     "regularize": True if args.regularize else None}
        try:
            cfg.train = dataclasses.replace(
                cfg.train, **{k: v for k, v in overrides.items() if v is not None})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        base = _expect_model(io.load_model(args.base), "base", args.base)
        run_fit_energy(cfg, base, out)
    elif cmd == "predict":
        if args.m_proposals is not None:
            try:
                cfg.infer = InferConfig(args.m_proposals)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        base = _expect_model(io.load_model(args.base), "base", args.base)
        energy = _expect_model(io.load_model(args.energy), "energy", args.energy)
        if energy.cfg.num_types != cfg.num_types or base.num_types != cfg.num_types:
            raise ConfigError("model K does not match the config num_types")
        run_predict(cfg, base, energy, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", under="ignore"):
            _dispatch(args)
    except (ConfigError, SynthSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
