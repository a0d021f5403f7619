"""Harness tests: config parsing, grids, pipelines, sweep/resume, attack, CLI."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from privfair.accountant import account
from privfair.analysis import log_fit
from privfair.datasets import CIVILCOMMENTS_GROUPS, load_csv
from privfair.harness import (
    ConfigError,
    ExperimentConfig,
    attack_single,
    format_row,
    parse_config,
    prepare_datasets,
    results_header,
    run_analyze,
    run_single,
    run_sweep,
)
from privfair.harness.pipelines import METRIC_COLUMNS
from privfair.harness.sweep import _read_journal


def small_cfg(**over):
    """A config small enough for per-test training runs."""
    base = dict(
        pipeline="logistic",
        epochs=3,
        batch_size=256,
        synth_counts=(300, 250, 250, 150, 60, 40, 120, 120),
        repetitions=1,
        record_timing=False,
    )
    base.update(over)
    return ExperimentConfig(**base)


# --- config parsing -------------------------------------------------------


def test_parse_config_roundtrip_and_comments():
    cfg = parse_config(
        """
        # experiment
        pipeline = logistic
        grid_start = 0.5
        grid_stop = 2.0   # inline comment
        grid_step = 0.5
        repetitions = 2
        lr = 1.5
        normalize_features = true
        synth_counts = 300, 250, 250, 150, 60, 40, 120, 120
        """
    )
    assert cfg.repetitions == 2
    assert cfg.lr == 1.5
    assert cfg.normalize_features is True
    assert cfg.synth_counts == (300, 250, 250, 150, 60, 40, 120, 120)
    assert [s for s, _ in cfg.epsilon_grid()] == ["0.5", "1.0", "1.5", "2.0"]


def test_parse_config_unknown_key_is_error():
    with pytest.raises(ConfigError, match="unknown config key 'lear_rate'"):
        parse_config("lear_rate = 0.1")


def test_parse_config_duplicate_key_is_error():
    with pytest.raises(ConfigError, match="duplicate key 'lr'"):
        parse_config("lr = 0.1\nlr = 0.2")


def test_parse_config_bad_value_names_line():
    with pytest.raises(ConfigError, match="<config>:2"):
        parse_config("pipeline = logistic\nepochs = three")


def test_parse_config_missing_equals():
    with pytest.raises(ConfigError, match="expected `key = value`"):
        parse_config("just some words")


def test_config_rejects_unknown_pipeline():
    with pytest.raises(ConfigError, match="pipeline must be one of"):
        ExperimentConfig(pipeline="svm")


def test_config_rejects_bad_risk_field():
    with pytest.raises(ConfigError, match="risk_field"):
        ExperimentConfig(risk_field="hinge")


def test_config_rejects_nonpositive():
    with pytest.raises(ConfigError, match="phi must be positive"):
        ExperimentConfig(phi=0.0)
    with pytest.raises(ConfigError, match="repetitions"):
        ExperimentConfig(repetitions=0)


# --- epsilon grids --------------------------------------------------------


def test_default_logistic_grid_has_400_points():
    grid = ExperimentConfig(pipeline="logistic").epsilon_grid()
    assert len(grid) == 400
    assert grid[0][0] == "0.1"
    assert grid[-1][0] == "40.0"
    # decimal stepping: the pretty strings survive, no float drift
    assert grid[2][0] == "0.3"
    assert grid[398][0] == "39.9"


def test_default_pca_grid_has_20_points():
    grid = ExperimentConfig(pipeline="pca_ffn").epsilon_grid()
    assert len(grid) == 20
    assert grid[0][0] == "0.1"
    assert grid[1][0] == "0.6"
    assert grid[-1][0] == "9.6"


def test_explicit_epsilons_win_over_grid():
    cfg = ExperimentConfig(epsilons=("1.0", "0.5"), grid_start="0.1",
                           grid_stop="40.0", grid_step="0.1")
    assert cfg.epsilon_grid() == [("1.0", 1.0), ("0.5", 0.5)]


def test_grid_rejects_nonpositive_epsilon():
    with pytest.raises(ConfigError, match="positive"):
        ExperimentConfig(epsilons=("0.5", "0")).epsilon_grid()
    with pytest.raises(ConfigError, match="grid_step"):
        ExperimentConfig(grid_start="1", grid_stop="2", grid_step="0").epsilon_grid()


def test_grid_empty_is_error():
    with pytest.raises(ConfigError, match="empty"):
        ExperimentConfig(grid_start="5", grid_stop="4", grid_step="1").epsilon_grid()


# --- pipelines ------------------------------------------------------------


def test_run_single_row_is_deterministic():
    cfg = small_cfg()
    data = prepare_datasets(cfg)
    a = run_single(cfg, *data, 1.0, 0, 0)
    b = run_single(cfg, *data, 1.0, 0, 0)
    ga = format_row(a, data[2].group_names, cfg.record_timing)
    gb = format_row(b, data[2].group_names, cfg.record_timing)
    assert ga == gb


def test_run_single_distinct_repetitions_differ():
    cfg = small_cfg()
    data = prepare_datasets(cfg)
    a = run_single(cfg, *data, 1.0, 0, 0)
    b = run_single(cfg, *data, 1.0, 0, 1)
    assert a["accuracy"] != b["accuracy"] or a["unequal_risk"] != b["unequal_risk"]


def test_row_epsilon_is_the_accountants_value():
    """The epsilon cell must be exactly reproducible from the row's own
    privacy columns through the accountant."""
    cfg = small_cfg()
    data = prepare_datasets(cfg)
    row = run_single(cfg, *data, 1.0, 0, 0)
    recomputed = account(row["sigma"], row["steps"], row["sampling_rate"], row["phi"])
    assert row["epsilon"] == recomputed.epsilon
    assert abs(row["epsilon"] - 1.0) <= 1e-6


def test_logistic_high_epsilon_matches_nonprivate_baseline():
    cfg = small_cfg(epochs=40, lr=1.0, clip_bound=8.0)
    train, val, test = prepare_datasets(cfg)
    row = run_single(cfg, train, val, test, 1e6, 0, 0)

    # non-private logistic on the same data: plain batch gradient descent
    from privfair.models import LogisticSpec

    spec = LogisticSpec(train.dim, loss="logloss")
    params = np.zeros(spec.n_params)
    for _ in range(400):
        grads = spec.per_sample_grads(params, train.features, train.labels.astype(float))
        params = params - 1.0 * grads.mean(axis=0)
    base_acc = np.mean(
        (spec.predict_proba(params, test.features) >= 0.5).astype(int) == test.labels
    )
    assert abs(row["accuracy"] - base_acc) <= 0.02


def test_pca_ffn_row_reports_pure_dp():
    cfg = small_cfg(pipeline="pca_ffn", k=8, ffn_epochs=20, ffn_patience=5)
    data = prepare_datasets(cfg)
    row = run_single(cfg, *data, 2.0, 0, 0)
    assert row["phi"] == 0.0
    assert row["sigma"] == 0.0
    assert row["steps"] == 1
    assert row["sampling_rate"] == 1.0
    assert row["epsilon"] == 2.0


def test_groupdro_row_runs_and_is_deterministic():
    cfg = small_cfg(pipeline="groupdro_mlp", epochs=2, mlp_hidden=(8,), eta=0.5)
    data = prepare_datasets(cfg)
    a = run_single(cfg, *data, 5.0, 1, 0)
    b = run_single(cfg, *data, 5.0, 1, 0)
    assert format_row(a, data[2].group_names, False) == format_row(b, data[2].group_names, False)
    assert 0.0 <= a["accuracy"] <= 1.0


def test_results_header_contract():
    names = list(CIVILCOMMENTS_GROUPS)
    h = results_header(names)
    expected = "epsilon,repetition,accuracy,unequal_risk,delta_variance,p_rule,modified_p_rule"
    for g in names:
        expected += f",risk_{g},f1_{g}"
    expected += ",phi,sigma,steps,sampling_rate,wall_time_s"
    assert h == expected
    assert METRIC_COLUMNS == ("accuracy", "unequal_risk", "delta_variance",
                              "p_rule", "modified_p_rule")


def test_format_row_zeroes_wall_time_when_timing_off():
    cfg = small_cfg()
    data = prepare_datasets(cfg)
    row = run_single(cfg, *data, 1.0, 0, 0)
    line = format_row(row, data[2].group_names, False)
    assert line.endswith(",0.0")
    timed = format_row(row, data[2].group_names, True)
    assert not timed.endswith(",0.0")


# --- sweep / resume -------------------------------------------------------


def sweep_cfg(**over):
    return small_cfg(epsilons=("0.5", "1.0", "2.0"), repetitions=2, **over)


def test_sweep_writes_sorted_complete_results(tmp_path):
    cfg = sweep_cfg()
    out = run_sweep(cfg, str(tmp_path / "out"), jobs=1)
    assert out.n_rows == 6 and out.n_completed == 6 and out.n_failed == 0
    assert out.exit_code == 0
    lines = open(out.results_path, encoding="utf-8").read().splitlines()
    assert lines[0] == results_header(CIVILCOMMENTS_GROUPS)
    assert len(lines) == 7
    eps = [float(l.split(",")[0]) for l in lines[1:]]
    reps = [int(l.split(",")[1]) for l in lines[1:]]
    assert eps == sorted(eps)
    assert reps == [0, 1, 0, 1, 0, 1]
    failures = open(out.failures_path, encoding="utf-8").read().splitlines()
    assert failures == ["epsilon,repetition,stage,error"]


def test_sweep_reruns_byte_identical(tmp_path):
    cfg = sweep_cfg()
    a = run_sweep(cfg, str(tmp_path / "a"), jobs=1)
    b = run_sweep(cfg, str(tmp_path / "b"), jobs=2)
    assert open(a.results_path, "rb").read() == open(b.results_path, "rb").read()


def test_sweep_resume_after_interruption_identical(tmp_path):
    cfg = sweep_cfg()
    full = run_sweep(cfg, str(tmp_path / "full"), jobs=1)
    reference = open(full.results_path, "rb").read()

    # simulate an interrupted run: journal with header + 3 rows + torn line
    part_dir = tmp_path / "part"
    part_dir.mkdir()
    lines = reference.decode().splitlines()
    torn = "\n".join(lines[:4]) + "\n" + lines[4][:37]  # no trailing newline
    (part_dir / "results.csv").write_text(torn, encoding="utf-8")

    out = run_sweep(cfg, str(part_dir), resume=True, jobs=1)
    assert open(out.results_path, "rb").read() == reference


def test_sweep_resume_keeps_finished_rows_verbatim(tmp_path):
    cfg = sweep_cfg()
    full = run_sweep(cfg, str(tmp_path / "full"), jobs=1)
    lines = open(full.results_path, encoding="utf-8").read().splitlines()

    # poison one completed row; resume must keep its bytes, not recompute
    poisoned = lines[1].split(",")
    poisoned[2] = "0.123456789"  # accuracy cell nobody would produce
    marked = ",".join(poisoned)
    part_dir = tmp_path / "part"
    part_dir.mkdir()
    (part_dir / "results.csv").write_text(
        "\n".join([lines[0], marked]) + "\n", encoding="utf-8"
    )
    out = run_sweep(cfg, str(part_dir), resume=True, jobs=1)
    resumed = open(out.results_path, encoding="utf-8").read().splitlines()
    assert marked in resumed


def test_resume_rejects_foreign_results(tmp_path):
    cfg = sweep_cfg()
    d = tmp_path / "out"
    d.mkdir()
    (d / "results.csv").write_text(
        results_header(CIVILCOMMENTS_GROUPS) + "\n" + "9.75,0," + ",".join(["0.0"] * 24) + "\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="refusing to resume"):
        run_sweep(cfg, str(d), resume=True, jobs=1)


def test_resume_rejects_wrong_header(tmp_path):
    cfg = sweep_cfg()
    d = tmp_path / "out"
    d.mkdir()
    (d / "results.csv").write_text("epsilon,repetition,oops\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="header does not match"):
        run_sweep(cfg, str(d), resume=True, jobs=1)


def test_read_journal_tolerates_missing_file(tmp_path):
    assert _read_journal(str(tmp_path / "nope.csv"), "h", [("1.0", 1.0)], 1) == {}


def test_sweep_failed_rows_recorded_and_retried(tmp_path):
    # epsilon far below even the wide-order floor: calibration must fail,
    # the sweep must continue, and the failure must land in failures.csv
    cfg = small_cfg(epsilons=("0.00001", "1.0"), repetitions=1)
    out = run_sweep(cfg, str(tmp_path / "out"), jobs=1)
    assert out.n_completed == 1
    assert out.n_failed == 1
    assert out.exit_code == 3  # 1 of 2 rows > 10%
    failures = open(out.failures_path, encoding="utf-8").read().splitlines()
    assert len(failures) == 2
    assert failures[1].startswith("0.00001,0,")
    # resume retries the failed slot (and fails it again), keeping the good row
    out2 = run_sweep(cfg, str(tmp_path / "out"), resume=True, jobs=1)
    assert out2.n_completed == 1
    assert out2.n_failed == 1


# --- analyze --------------------------------------------------------------


def _write_results_csv(path, rows):
    header = results_header(CIVILCOMMENTS_GROUPS)
    pad = header.count(",") + 1 - 3
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for eps, rep, acc in rows:
            fh.write(f"{eps!r},{rep},{acc!r}" + ",0.0" * pad + "\n")


def test_analyze_recovers_planted_log_curve(tmp_path):
    rows = []
    for i, eps in enumerate(np.linspace(0.1, 40.0, 120)):
        rows.append((float(eps), 0, 2.0 * math.log(eps) + 0.25))
    src = tmp_path / "results.csv"
    _write_results_csv(str(src), rows)
    out_dir = tmp_path / "analysis"
    path = run_analyze(str(src), ["accuracy"], str(out_dir))
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == "metric,model,slope,intercept,r_squared,p_value,n_points"
    logline = next(l for l in lines[1:] if l.startswith("accuracy,logarithmic,"))
    cells = logline.split(",")
    assert abs(float(cells[2]) - 2.0) < 1e-9
    assert abs(float(cells[3]) - 0.25) < 1e-9
    assert float(cells[4]) == pytest.approx(1.0, abs=1e-12)
    assert (out_dir / "accuracy.svg").exists()
    assert (out_dir / "accuracy.fit.txt").exists()
    curve = open(out_dir / "accuracy.fit.txt", encoding="utf-8").read().splitlines()
    assert curve[0] == "epsilon,logarithmic,linear"
    assert len(curve) == 201


def test_analyze_row_count_is_metrics_times_two(tmp_path):
    rows = [(e, 0, 0.5 + 0.01 * i) for i, e in enumerate((0.5, 1.0, 2.0, 4.0))]
    src = tmp_path / "results.csv"
    _write_results_csv(str(src), rows)
    path = run_analyze(str(src), ["accuracy", "unequal_risk"], str(tmp_path / "out"))
    lines = open(path, encoding="utf-8").read().splitlines()
    assert len(lines) == 1 + 2 * 2


def test_analyze_unknown_metric_errors(tmp_path):
    src = tmp_path / "results.csv"
    _write_results_csv(str(src), [(1.0, 0, 0.5), (2.0, 0, 0.6), (3.0, 0, 0.7)])
    with pytest.raises(ValueError, match="no column named 'auc'"):
        run_analyze(str(src), ["auc"], str(tmp_path / "out"))


def test_analyze_too_few_points_errors(tmp_path):
    src = tmp_path / "results.csv"
    _write_results_csv(str(src), [(1.0, 0, 0.5), (2.0, 0, 0.6)])
    with pytest.raises(ValueError, match="fewer than 3 usable points"):
        run_analyze(str(src), ["accuracy"], str(tmp_path / "out"))


def test_analyze_rejects_non_results_csv(tmp_path):
    src = tmp_path / "notresults.csv"
    src.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header must start epsilon,repetition"):
        run_analyze(str(src), ["accuracy"], str(tmp_path / "out"))


# --- attack ---------------------------------------------------------------


def test_attack_single_baseline_and_determinism():
    cfg = small_cfg(
        pipeline="pca_ffn", k=8, ffn_epochs=8, ffn_patience=3,
        synth_group_signal_strength=0.0,
    )
    data = prepare_datasets(cfg)
    a = attack_single(cfg, data, 1.0, 0)
    b = attack_single(cfg, data, 1.0, 0)
    assert a == b
    counts = np.bincount(data[2].group_ids)
    assert a["majority_baseline"] == pytest.approx(counts.max() / counts.sum())
    assert a["advantage"] == pytest.approx(a["attacker_accuracy"] - a["majority_baseline"])


def test_attack_label_target_runs():
    cfg = small_cfg(
        pipeline="pca_ffn", k=8, ffn_epochs=8, ffn_patience=3, attack_target="label",
    )
    data = prepare_datasets(cfg)
    rep = attack_single(cfg, data, 5.0, 0)
    assert rep["target"] == "label"
    assert 0.0 <= rep["attacker_accuracy"] <= 1.0


# --- CLI ------------------------------------------------------------------


def run_cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "privfair.harness.cli", *argv],
        capture_output=True, text=True, timeout=600,
    )


SMALL_CONF = """
pipeline = logistic
epochs = 3
batch_size = 256
synth_counts = 300, 250, 250, 150, 60, 40, 120, 120
record_timing = false
"""


def test_cli_train_prints_row(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text(SMALL_CONF, encoding="utf-8")
    res = run_cli("train", "--config", str(conf), "--epsilon", "1.0")
    assert res.returncode == 0
    lines = res.stdout.strip().splitlines()
    assert lines[0].startswith("epsilon,repetition,accuracy,")
    assert abs(float(lines[1].split(",")[0]) - 1.0) < 1e-5


def test_cli_config_error_exits_2(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("pipeline = svm\n", encoding="utf-8")
    res = run_cli("train", "--config", str(conf), "--epsilon", "1.0")
    assert res.returncode == 2
    assert "pipeline" in res.stderr


def test_cli_missing_config_exits_4(tmp_path):
    res = run_cli("train", "--config", str(tmp_path / "nope.conf"), "--epsilon", "1.0")
    assert res.returncode == 4


def test_cli_generate_roundtrip(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text(SMALL_CONF, encoding="utf-8")
    res = run_cli("generate", "--config", str(conf), "--out", str(tmp_path / "data"))
    assert res.returncode == 0
    splits = [load_csv(tmp_path / "data" / f"{s}.csv") for s in ("train", "validation", "test")]
    assert [d.split for d in splits] == ["train", "validation", "test"]
    total = sum((300, 250, 250, 150, 60, 40, 120, 120))
    assert sum(d.n for d in splits) == total
    # 70/10/20 within per-(group,label)-cell rounding
    assert abs(splits[0].n - 0.7 * total) <= 16


def test_cli_sweep_and_analyze_end_to_end(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text(SMALL_CONF + "epsilons = 0.5, 1.0, 2.0, 4.0\n", encoding="utf-8")
    out = tmp_path / "sweep"
    res = run_cli("sweep", "--config", str(conf), "--out", str(out), "--jobs", "1")
    assert res.returncode == 0, res.stderr
    res = run_cli(
        "analyze", "--results", str(out / "results.csv"),
        "--metrics", "accuracy,unequal_risk", "--out", str(tmp_path / "an"),
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "an" / "analysis.csv").exists()
    assert (tmp_path / "an" / "accuracy.svg").exists()


def test_cli_sweep_partial_failure_exits_3(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text(SMALL_CONF + "epsilons = 0.00001, 1.0\n", encoding="utf-8")
    res = run_cli("sweep", "--config", str(conf), "--out", str(tmp_path / "s"), "--jobs", "1")
    assert res.returncode == 3


def test_cli_metrics_subcommand(tmp_path):
    preds = tmp_path / "preds.csv"
    preds.write_text(
        "prediction,label,group\n"
        "1,1,male\n0,0,male\n1,0,male\n"
        "1,1,female\n0,1,female\n0,0,female\n",
        encoding="utf-8",
    )
    out = tmp_path / "m.csv"
    res = run_cli("metrics", "--predictions", str(preds), "--out", str(out))
    assert res.returncode == 0
    lines = open(out, encoding="utf-8").read().splitlines()
    cols = lines[0].split(",")
    cells = lines[1].split(",")
    vals = dict(zip(cols, cells))
    assert float(vals["accuracy"]) == pytest.approx(4 / 6)
    # absent groups are nan
    assert vals["risk_LGBTQ"] == "nan"
    assert float(vals["risk_male"]) == pytest.approx(1 / 3)


def test_cli_metrics_bad_header_exits_2(tmp_path):
    preds = tmp_path / "preds.csv"
    preds.write_text("pred,label,group\n1,1,male\n", encoding="utf-8")
    res = run_cli("metrics", "--predictions", str(preds), "--out", str(tmp_path / "m.csv"))
    assert res.returncode == 2
