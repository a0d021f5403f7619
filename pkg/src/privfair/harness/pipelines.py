"""The three experiment pipelines and the fixed results-row contract.

Privacy semantics per pipeline:
  - logistic:      all of epsilon spent by DP-SGD (noise calibrated per row).
  - groupdro_mlp:  same accounting; GroupDRO reweights per-sample gradients
                   *before* clipping, so sensitivity stays at the clip bound.
  - pca_ffn:       all of epsilon spent by the Wishart mechanism on the second
                   moment; the downstream FFN is trained non-privately (that
                   is the point of the leakage experiment).
"""

from __future__ import annotations

import math
import time

import numpy as np

from .. import accountant
from ..accountant import DEFAULT_ORDERS, WIDE_ORDERS, CalibrationRangeError, PrivacyReport
from ..datasets import Dataset, load_csv, synth_generate
from ..dppca import dp_pca, normalize_rows, project
from ..dpsgd import DpSgdConfig, train_private
from ..fairmetrics import (
    UndefinedMetricError,
    accuracy,
    delta_variance,
    group_stats,
    modified_p_rule,
    p_rule,
    unequal_risk,
)
from ..models import LogisticSpec, MlpSpec, adamw_init, adamw_step, groupdro_init, groupdro_update
from ..randmat import SeededRng, derive_seed
from .config import ExperimentConfig

METRIC_COLUMNS = ("accuracy", "unequal_risk", "delta_variance", "p_rule", "modified_p_rule")


def results_header(group_names) -> str:
    cols = ["epsilon", "repetition", *METRIC_COLUMNS]
    for g in group_names:
        cols += [f"risk_{g}", f"f1_{g}"]
    cols += ["phi", "sigma", "steps", "sampling_rate", "wall_time_s"]
    return ",".join(cols)


def prepare_datasets(cfg: ExperimentConfig):
    """(train, validation, test) from data_dir CSVs or the synthetic generator."""
    if cfg.data_dir:
        import os.path

        return tuple(
            load_csv(os.path.join(cfg.data_dir, f"{split}.csv"))
            for split in ("train", "validation", "test")
        )
    return synth_generate(cfg.synth_config())


def pick_orders(epsilon: float, phi: float, steps: int, q: float):
    """Order grid for this target: default, falling back to the wide grid.

    The (eps, phi) conversion floors reachable epsilon at ln(1/phi)/(alpha-1),
    so very small targets need the high-order tail. The fallback is a pure
    function of the arguments, which keeps rows reproducible.
    """
    try:
        accountant.calibrate_sigma(epsilon, phi, steps, q, DEFAULT_ORDERS)
        return DEFAULT_ORDERS
    except CalibrationRangeError:
        # verify the wide grid actually reaches it (raises otherwise)
        accountant.calibrate_sigma(epsilon, phi, steps, q, WIDE_ORDERS)
        return WIDE_ORDERS


def _dpsgd_geometry(cfg: ExperimentConfig, n: int):
    b = min(cfg.batch_size, n)
    steps = cfg.epochs * (n // b)
    return b, steps, b / n


def _train_dpsgd_row(cfg: ExperimentConfig, train: Dataset, epsilon: float, seed: int):
    """Calibrate noise for the target epsilon and run one DP-SGD training."""
    n = train.n
    _, steps, q = _dpsgd_geometry(cfg, n)
    orders = pick_orders(epsilon, cfg.phi, steps, q)
    sigma = accountant.calibrate_sigma(epsilon, cfg.phi, steps, q, orders)
    dcfg = DpSgdConfig(
        clip_bound=cfg.clip_bound,
        noise_multiplier=sigma,
        learning_rate=cfg.lr,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=seed,
    )
    if cfg.pipeline == "logistic":
        spec = LogisticSpec(train.dim, loss="logloss")
        return spec, train_private(spec, train, dcfg, cfg.phi, orders=orders, record_log=False)

    # groupdro_mlp: per-sample weights w_i = B * q'_{g_i} / count_{g_i}(batch),
    # updated online from batch group losses; batch mean of w_i * grad_i is then
    # exactly the gradient of the robust loss sum_g q'_g * mean-loss_g.
    spec = MlpSpec((train.dim, *cfg.mlp_hidden, 1), loss=cfg.mlp_loss)
    gids = train.group_ids
    features = train.features
    labels = train.labels.astype(np.float64)
    state = groupdro_init(len(train.group_names), cfg.eta)

    def weight_fn(params, idx):
        nonlocal state
        losses = spec.per_sample_loss(params, features[idx], labels[idx])
        g = gids[idx]
        present = np.unique(g)
        group_losses = {int(gg): float(losses[g == gg].mean()) for gg in present}
        state, _ = groupdro_update(state, group_losses)
        counts = {int(gg): int(np.sum(g == gg)) for gg in present}
        w = np.empty(idx.size)
        for gg in present:
            w[g == gg] = idx.size * state.q[int(gg)] / counts[int(gg)]
        return w

    return spec, train_private(
        spec, train, dcfg, cfg.phi, orders=orders, sample_weight_fn=weight_fn, record_log=False
    )


def train_ffn(x_train, y_train, x_val, y_val, cfg: ExperimentConfig, seed: int):
    """Non-private AdamW training of the downstream FFN; returns (spec, params).

    Early stopping on validation MSE with the configured patience (disabled in
    paper-faithful mode); the best-on-validation parameters are returned.
    """
    epochs, lr, patience = cfg.ffn_schedule()
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64).ravel()
    spec = MlpSpec((x_train.shape[1], *cfg.ffn_hidden, 1), loss="mse")
    params = spec.init_params(SeededRng(derive_seed(seed, 1)))
    shuffle = SeededRng(derive_seed(seed, 2))
    opt = adamw_init(spec.n_params, cfg.ffn_weight_decay)
    n = x_train.shape[0]
    b = min(cfg.ffn_batch_size, n)

    best_params, best_val = params, math.inf
    stale = 0
    for _epoch in range(epochs):
        perm = shuffle.gen.permutation(n)
        for lo in range(0, n, b):
            idx = perm[lo : lo + b]
            grad = spec.per_sample_grads(params, x_train[idx], y_train[idx]).mean(axis=0)
            params = adamw_step(params, grad, opt, lr)
        if patience is None:
            continue
        val = spec.mean_loss(params, x_val, y_val)
        if val < best_val - 1e-12:
            best_val, best_params, stale = val, params, 0
        else:
            stale += 1
            if stale > patience:
                break
    return spec, (params if patience is None else best_params)


def run_single(
    cfg: ExperimentConfig,
    train: Dataset,
    validation: Dataset,
    test: Dataset,
    eps_value: float,
    eps_index: int,
    repetition: int,
) -> dict:
    """One (epsilon, repetition) row: train per the pipeline, evaluate on test."""
    seed = derive_seed(cfg.seed, eps_index, repetition)
    t0 = time.perf_counter()

    if cfg.pipeline in ("logistic", "groupdro_mlp"):
        if cfg.normalize_features:
            train = Dataset(
                normalize_rows(train.features), train.labels, train.group_ids,
                train.group_names, train.split,
            )
            test = Dataset(
                normalize_rows(test.features), test.labels, test.group_ids,
                test.group_names, test.split,
            )
        spec, trained = _train_dpsgd_row(cfg, train, eps_value, seed)
        proba = spec.predict_proba(trained.parameters, test.features)
        privacy = trained.privacy
    elif cfg.pipeline == "pca_ffn":
        x_train = normalize_rows(train.features)
        x_val = normalize_rows(validation.features)
        x_test = normalize_rows(test.features)
        proj = dp_pca(x_train, cfg.k, eps_value, SeededRng(derive_seed(seed, 0)))
        spec, params = train_ffn(
            project(x_train, proj), train.labels, project(x_val, proj), validation.labels,
            cfg, seed,
        )
        proba = spec.predict_proba(params, project(x_test, proj))
        # epsilon is consumed entirely by the Wishart mechanism (pure DP: phi=0);
        # sigma/steps/sampling_rate describe the single private release
        privacy = PrivacyReport(epsilon=eps_value, phi=0.0, sigma=0.0, steps=1, sampling_rate=1.0)
    else:  # pragma: no cover - ExperimentConfig already rejects unknown pipelines
        raise ValueError(f"unknown pipeline {cfg.pipeline!r}")

    predictions = (np.asarray(proba) >= 0.5).astype(np.int64)
    wall = time.perf_counter() - t0
    return evaluate_row(cfg, test, predictions, privacy, repetition, wall)


def evaluate_row(
    cfg: ExperimentConfig,
    test: Dataset,
    predictions: np.ndarray,
    privacy: PrivacyReport,
    repetition: int,
    wall_time_s: float,
) -> dict:
    """Metric columns + privacy columns for one completed training."""
    stats = group_stats(predictions, test.labels, test.group_ids, test.group_names)
    row = {
        "epsilon": privacy.epsilon,
        "repetition": repetition,
        "accuracy": accuracy(predictions, test.labels),
        "unequal_risk": unequal_risk(stats, cfg.risk_field),
        "delta_variance": delta_variance(stats),
        "p_rule": p_rule(stats),
        "modified_p_rule": modified_p_rule(stats),
    }
    by_id = {g: i for i, g in enumerate(stats.group_ids)}
    for g, name in enumerate(test.group_names):
        if g in by_id:
            row[f"risk_{name}"] = stats.risks[by_id[g]]
            row[f"f1_{name}"] = stats.f1s[by_id[g]]
        else:  # absent from the test split: reported as missing, never imputed
            row[f"risk_{name}"] = math.nan
            row[f"f1_{name}"] = math.nan
    row["phi"] = privacy.phi
    row["sigma"] = privacy.sigma
    row["steps"] = privacy.steps
    row["sampling_rate"] = privacy.sampling_rate
    row["wall_time_s"] = wall_time_s
    return row


def format_row(row: dict, group_names, record_timing: bool) -> str:
    """Render a result row to the fixed CSV contract (deterministic bytes).

    Floats use repr (shortest round-trip form). The epsilon cell is the
    accountant's value recomputed at the calibrated noise — account(sigma,
    steps, q, phi) reproduces it bit-for-bit from the row's own privacy
    columns (for pca_ffn rows it is the grid value itself). Wall time is
    zeroed when timing is off so repeated runs are byte-identical.
    """
    cells = [repr(float(row["epsilon"])), str(int(row["repetition"]))]
    cells += [repr(float(row[m])) for m in METRIC_COLUMNS]
    for g in group_names:
        cells.append(repr(float(row[f"risk_{g}"])))
        cells.append(repr(float(row[f"f1_{g}"])))
    cells.append(repr(float(row["phi"])))
    cells.append(repr(float(row["sigma"])))
    cells.append(str(int(row["steps"])))
    cells.append(repr(float(row["sampling_rate"])))
    cells.append("%.3f" % row["wall_time_s"] if record_timing else "0.0")
    return ",".join(cells)
