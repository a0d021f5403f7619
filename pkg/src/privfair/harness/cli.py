"""Command-line entry point.

Subcommands: generate, train, sweep, attack, analyze, metrics.
Exit codes: 0 success; 2 config/validation error (including module errors such
as calibration range or divergence on a single training); 3 sweep with more
than 10% failed rows; 4 IO error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from ..datasets import CIVILCOMMENTS_GROUPS, save_csv
from ..fairmetrics import (
    UndefinedMetricError,
    accuracy,
    delta_variance,
    group_stats,
    modified_p_rule,
    p_rule,
    unequal_risk,
)
from .analyze import run_analyze
from .attack import run_attack
from .config import ExperimentConfig, load_config
from .pipelines import format_row, prepare_datasets, results_header, run_single
from .sweep import run_sweep


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privfair",
        description="Privacy-fairness benchmark: DP-SGD / DP-PCA sweeps, leakage attack, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/validation/test CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model at a single epsilon, print its result row")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", required=True, type=float)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("sweep", help="run the epsilon grid, writing results.csv/failures.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("attack", help="group-inference attack on DP-PCA projections")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("analyze", help="fit metric-vs-epsilon curves from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--metrics", required=True, help="comma-separated metric column names")
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="fairness metrics for externally produced predictions")
    p.add_argument("--predictions", required=True, help="CSV with columns prediction,label,group")
    p.add_argument("--out", required=True)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "paper_faithful", False):
        cfg.paper_faithful = True
    return cfg


def _cmd_generate(args) -> int:
    cfg = _load(args)
    splits = prepare_datasets(cfg) if cfg.data_dir is None else None
    if splits is None:
        raise ValueError("generate writes synthetic data; unset data_dir in the config")
    os.makedirs(args.out, exist_ok=True)
    for ds in splits:
        path = os.path.join(args.out, f"{ds.split}.csv")
        save_csv(ds, path)
        print(f"{ds.split}: {ds.n} rows, dim {ds.dim} -> {path}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load(args)
    if args.epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {args.epsilon}")
    datasets = prepare_datasets(cfg)
    row = run_single(cfg, *datasets, args.epsilon, 0, 0)
    print(results_header(datasets[2].group_names))
    print(format_row(row, datasets[2].group_names, cfg.record_timing))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    outcome = run_sweep(cfg, args.out, resume=args.resume, jobs=args.jobs)
    print(
        f"sweep: {outcome.n_completed}/{outcome.n_rows} rows completed, "
        f"{outcome.n_failed} failed -> {outcome.results_path}"
    )
    if outcome.n_failed:
        print(f"failure reasons in {outcome.failures_path}", file=sys.stderr)
    return outcome.exit_code


def _cmd_attack(args) -> int:
    cfg = _load(args)
    path = run_attack(cfg, args.out)
    print(f"attack report -> {path}")
    return 0


def _cmd_analyze(args) -> int:
    path = run_analyze(args.results, args.metrics.split(","), args.out)
    print(f"analysis -> {path}")
    return 0


def _read_predictions(path):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"failed reading predictions {path}: {exc}") from exc
    if not lines or lines[0].split(",") != ["prediction", "label", "group"]:
        raise ValueError(f"{path}: header must be exactly prediction,label,group")
    if len(lines) == 1:
        raise ValueError(f"{path}: no prediction rows")
    name_to_id = {name: i for i, name in enumerate(CIVILCOMMENTS_GROUPS)}
    preds, labels, gids = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 3:
            raise ValueError(f"{path}: line {lineno} has {len(cells)} cells, expected 3")
        if cells[0] not in ("0", "1") or cells[1] not in ("0", "1"):
            raise ValueError(f"{path}: line {lineno}: prediction and label must be 0 or 1")
        if cells[2] not in name_to_id:
            raise ValueError(f"{path}: line {lineno}: unknown group name {cells[2]!r}")
        preds.append(int(cells[0]))
        labels.append(int(cells[1]))
        gids.append(name_to_id[cells[2]])
    return np.asarray(preds), np.asarray(labels), np.asarray(gids)


def _cmd_metrics(args) -> int:
    preds, labels, gids = _read_predictions(args.predictions)
    stats = group_stats(preds, labels, gids, CIVILCOMMENTS_GROUPS)
    for w in stats.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        mpr = repr(modified_p_rule(stats))
    except UndefinedMetricError as exc:
        print(f"warning: modified_p_rule undefined ({exc}); writing nan", file=sys.stderr)
        mpr = "nan"
    cols = ["accuracy", "unequal_risk", "delta_variance", "p_rule", "modified_p_rule"]
    cells = [
        repr(accuracy(preds, labels)),
        repr(unequal_risk(stats)),
        repr(delta_variance(stats)),
        repr(p_rule(stats)),
        mpr,
    ]
    by_id = {g: i for i, g in enumerate(stats.group_ids)}
    for g, name in enumerate(CIVILCOMMENTS_GROUPS):
        cols += [f"risk_{name}", f"f1_{name}"]
        if g in by_id:
            cells += [repr(stats.risks[by_id[g]]), repr(stats.f1s[by_id[g]])]
        else:
            cells += ["nan", "nan"]
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        fh.write(",".join(cells) + "\n")
    print(f"metrics -> {args.out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "attack": _cmd_attack,
    "analyze": _cmd_analyze,
    "metrics": _cmd_metrics,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
