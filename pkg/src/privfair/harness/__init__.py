"""Experiment orchestration: config, pipelines, sweeps, the attack, analysis, CLI."""

from .analyze import run_analyze
from .attack import attack_single, run_attack
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .pipelines import (
    format_row,
    prepare_datasets,
    results_header,
    run_single,
    train_ffn,
)
from .sweep import SweepOutcome, run_sweep

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepOutcome",
    "attack_single",
    "format_row",
    "load_config",
    "parse_config",
    "prepare_datasets",
    "results_header",
    "run_analyze",
    "run_attack",
    "run_single",
    "run_sweep",
    "train_ffn",
]
