"""Leakage attack on DP-PCA representations.

For each epsilon in the grid: project the (row-normalized) data through the
Wishart-noised PCA, then train non-private FFNs on the projections to infer
the protected attribute — one-vs-rest over the registered groups, predictions
by argmax of the per-group scores. Reported against the majority baseline:
any advantage is information the 'private' representation still carries.

The alternative target `label` trains a single FFN on the task label instead,
for measuring how much task signal survives the projection.
"""

from __future__ import annotations

import os
import time

import numpy as np

from ..dppca import dp_pca, normalize_rows, project
from ..randmat import SeededRng, derive_seed
from .config import ExperimentConfig
from .pipelines import prepare_datasets, train_ffn

ATTACK_HEADER = "epsilon,target,attacker_accuracy,majority_baseline,advantage,wall_time_s"


def attack_single(cfg: ExperimentConfig, datasets, eps_value: float, eps_index: int) -> dict:
    """One epsilon point: returns attacker accuracy vs the majority baseline."""
    train, validation, test = datasets
    seed = derive_seed(cfg.seed, eps_index, 0)
    x_train = normalize_rows(train.features)
    x_val = normalize_rows(validation.features)
    x_test = normalize_rows(test.features)
    proj = dp_pca(x_train, cfg.k, eps_value, SeededRng(derive_seed(seed, 0)))
    p_train, p_val, p_test = (project(x, proj) for x in (x_train, x_val, x_test))

    if cfg.attack_target == "group":
        n_groups = len(train.group_names)
        scores = np.empty((test.n, n_groups))
        for g in range(n_groups):
            spec, params = train_ffn(
                p_train,
                (train.group_ids == g).astype(np.float64),
                p_val,
                (validation.group_ids == g).astype(np.float64),
                cfg,
                derive_seed(seed, 1 + g),
            )
            scores[:, g] = spec.predict_proba(params, p_test)
        predicted = np.argmax(scores, axis=1)
        truth = test.group_ids
    else:  # label
        spec, params = train_ffn(
            p_train, train.labels, p_val, validation.labels, cfg, derive_seed(seed, 1)
        )
        predicted = (spec.predict_proba(params, p_test) >= 0.5).astype(np.int64)
        truth = test.labels

    attacker = float(np.mean(predicted == truth))
    baseline = float(np.max(np.bincount(truth)) / truth.size)
    return {
        "target": cfg.attack_target,
        "attacker_accuracy": attacker,
        "majority_baseline": baseline,
        "advantage": attacker - baseline,
    }


def run_attack(cfg: ExperimentConfig, out_dir: str) -> str:
    """Attack at every grid epsilon; writes attack.csv and returns its path."""
    grid = cfg.epsilon_grid()
    datasets = prepare_datasets(cfg)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "attack.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ATTACK_HEADER + "\n")
        for i, (eps_string, eps_value) in enumerate(grid):
            t0 = time.perf_counter()
            rep = attack_single(cfg, datasets, eps_value, i)
            wall = "%.3f" % (time.perf_counter() - t0) if cfg.record_timing else "0.0"
            fh.write(
                f"{eps_string},{rep['target']},{rep['attacker_accuracy']!r},"
                f"{rep['majority_baseline']!r},{rep['advantage']!r},{wall}\n"
            )
            fh.flush()
    return path
