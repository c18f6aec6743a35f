"""Command-line experiment runner.

Subcommands:
  run        execute every (strategy x seed) experiment from a config file
  summarize  rebuild summary.csv from an existing rounds.csv
  gen-data   write a synthetic labeled dataset to disk

All floats are serialized with repr, so identical runs produce
byte-identical logs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import data as datamod
from . import evaluation, federation
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .data import Dataset, PartitionSpec
from .evaluation import ProbeConfig, RunSummary, compare_runs, summarize_run
from .federation import ExperimentConfig, RoundRecord, derived_rng

ROUNDS_COLUMNS = (
    "strategy", "seed", "round", "vehicle_count", "mean_local_loss", "top1",
    "aggregate_weights", "vehicle_ids", "velocities", "blur_levels",
    "local_losses", "aggregation_skipped",
)
SUMMARY_COLUMNS = ("strategy", "seed", "round", "loss", "top1", "curve_std")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def fmt_list(values) -> str:
    return ";".join(fmt(v) for v in values)


def record_row(strategy: str, seed: int, rec: RoundRecord) -> list[str]:
    return [
        strategy, str(seed), str(rec.round_index), str(len(rec.vehicle_ids)),
        fmt(rec.mean_local_loss), fmt(rec.top1), fmt_list(rec.weights),
        fmt_list(rec.vehicle_ids), fmt_list(rec.velocities), fmt_list(rec.blur_levels),
        fmt_list(rec.local_losses), fmt(rec.aggregation_skipped),
    ]


def record_json(strategy: str, seed: int, rec: RoundRecord) -> dict:
    return {
        "strategy": strategy,
        "seed": seed,
        "round": rec.round_index,
        "vehicle_count": len(rec.vehicle_ids),
        "mean_local_loss": rec.mean_local_loss,
        "top1": rec.top1,
        "aggregate_weights": list(rec.weights),
        "vehicle_ids": list(rec.vehicle_ids),
        "velocities": list(rec.velocities),
        "blur_levels": list(rec.blur_levels),
        "local_losses": list(rec.local_losses),
        "aggregation_skipped": rec.aggregation_skipped,
    }


def load_run_dataset(cfg: RunConfig) -> Dataset:
    dc = cfg.data
    if dc.source == "synthetic":
        return datamod.gen_synthetic(dc.classes, dc.per_class, dc.side, dc.seed, dc.noise)
    if dc.source == "cifar10":
        return datamod.load_cifar10(dc.cifar_dir)
    return datamod.load_dataset(dc.file)


def experiment_config(cfg: RunConfig, strategy: str) -> ExperimentConfig:
    return ExperimentConfig(
        encoder=cfg.encoder,
        mobility=cfg.mobility,
        camera=cfg.camera,
        loss=cfg.loss,
        sgd=cfg.sgd,
        rounds=dataclasses.replace(cfg.rounds, strategy=strategy),
        fedco_tau=cfg.fedco_tau,
    )


def run_one(cfg: RunConfig, strategy: str, seed: int, dataset: Dataset) -> list[RoundRecord]:
    """One (strategy, seed) experiment over a shared dataset."""
    probe_split = datamod.split_probe(dataset, cfg.probe.train_size, cfg.probe.test_size,
                                      seed=cfg.data.seed + 1)
    vehicle_ds = datamod.restrict(dataset, probe_split.vehicle_indices)
    spec = cfg.partition

    def make_shards(round_key: int) -> list:
        return datamod.partition(vehicle_ds, spec,
                                 seed=int(derived_rng(seed, federation.SEED_PARTITION,
                                                      round_key).integers(2**31)))

    shards = make_shards(0)
    probe = ProbeConfig(k=cfg.probe.k, train_indices=probe_split.train_indices,
                        test_indices=probe_split.test_indices)

    def evaluate(params, _round_idx):
        return evaluation.knn_top1(params, cfg.encoder, dataset, probe)

    exp_cfg = experiment_config(cfg, strategy)
    result = federation.run_experiment(
        exp_cfg, vehicle_ds, shards, master_seed=seed, evaluate=evaluate,
        reshard=make_shards if cfg.rounds.redraw_shards_each_round else None)
    return result.records


def write_rounds(out_dir: Path, rows: list[list[str]], json_records: list[dict]) -> None:
    csv_lines = [",".join(ROUNDS_COLUMNS)]
    csv_lines += [",".join(r) for r in rows]
    (out_dir / "rounds.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    (out_dir / "rounds.json").write_text(
        json.dumps(json_records, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_summary(out_dir: Path, summaries: list[RunSummary]) -> None:
    rows, _deltas = compare_runs(summaries)
    lines = [",".join(SUMMARY_COLUMNS)]
    for r in rows:
        lines.append(",".join([r.strategy, str(r.seed), str(r.rounds),
                               fmt(r.final_loss), fmt(r.final_top1), fmt(r.curve_std)]))
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def summaries_from_rows(rows: list[dict]) -> list[RunSummary]:
    by_run: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        by_run.setdefault((row["strategy"], row["seed"]), []).append(row)
    summaries = []
    for (strategy, seed), group in sorted(by_run.items()):
        ordered = sorted(group, key=lambda r: int(r["round"]))
        losses = [float(r["mean_local_loss"]) for r in ordered]
        top1s = [float(r["top1"]) if r["top1"] not in ("", None) else None for r in ordered]
        summaries.append(summarize_run(strategy, int(seed), losses, top1s))
    return summaries


def read_rounds_csv(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigError(f"empty rounds file: {path}")
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    out_dir = Path(args.out) if args.out else Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_run_dataset(cfg)
    all_rows: list[list[str]] = []
    all_json: list[dict] = []
    summaries: list[RunSummary] = []
    try:
        for strategy in cfg.strategies:
            for seed in cfg.seeds:
                print(f"running strategy={strategy} seed={seed} "
                      f"({cfg.rounds.max_rounds} rounds)", file=sys.stderr)
                records = run_one(cfg, strategy, seed, dataset)
                for rec in records:
                    all_rows.append(record_row(strategy, seed, rec))
                    all_json.append(record_json(strategy, seed, rec))
                if len(records) >= 2:
                    summaries.append(summarize_run(
                        strategy, seed,
                        [r.mean_local_loss for r in records],
                        [r.top1 for r in records]))
    except Exception:
        # flush whatever completed before the failure, then surface it
        write_rounds(out_dir, all_rows, all_json)
        raise
    write_rounds(out_dir, all_rows, all_json)
    if summaries:
        write_summary(out_dir, summaries)
    (out_dir / "config-echo.ini").write_text(serialize_config(cfg), encoding="utf-8")
    print(f"wrote {out_dir}/rounds.csv ({len(all_rows)} rows)", file=sys.stderr)
    return 0


def cmd_summarize(args) -> int:
    in_dir = Path(args.in_dir)
    rows = read_rounds_csv(in_dir / "rounds.csv")
    summaries = summaries_from_rows(rows)
    if not summaries:
        print("no complete runs found in rounds.csv", file=sys.stderr)
        return 1
    write_summary(in_dir, summaries)
    print(f"wrote {in_dir}/summary.csv", file=sys.stderr)
    return 0


def cmd_gen_data(args) -> int:
    ds = datamod.gen_synthetic(args.classes, args.per_class, args.side, args.seed,
                               noise=args.noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datamod.save_dataset(ds, out)
    print(f"wrote {out} ({len(ds)} images, {ds.class_count} classes)", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flsimco",
        description="Federated contrastive-learning simulator with blur-weighted aggregation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run experiments from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory (default from config)")
    p_run.set_defaults(func=cmd_run)

    p_sum = sub.add_parser("summarize", help="recompute summary.csv from rounds.csv")
    p_sum.add_argument("--in", dest="in_dir", required=True)
    p_sum.set_defaults(func=cmd_summarize)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset (.npz)")
    p_gen.add_argument("--classes", type=int, required=True)
    p_gen.add_argument("--per-class", type=int, required=True)
    p_gen.add_argument("--side", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--noise", type=float, default=0.1)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, datamod.DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
