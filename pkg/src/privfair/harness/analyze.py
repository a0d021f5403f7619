"""Fits and figures over sweep results: metric-vs-epsilon curves.

Per requested metric: a logarithmic fit (y = a ln x + b) and a linear fit,
written to analysis.csv, plus an SVG scatter with both fitted curves and a
plain-text sample of the curves for replotting elsewhere.
"""

from __future__ import annotations

import math
import os

import numpy as np

from ..analysis import linear_fit, log_fit

ANALYSIS_HEADER = "metric,model,slope,intercept,r_squared,p_value,n_points"
_CURVE_SAMPLES = 200


def read_results(path: str) -> tuple:
    """(header columns, rows of string cells) from a results CSV."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"failed reading results {path}: {exc}") from exc
    if not lines:
        raise ValueError(f"{path}: empty results file")
    columns = lines[0].split(",")
    if columns[:2] != ["epsilon", "repetition"]:
        raise ValueError(f"{path}: not a results CSV (header must start epsilon,repetition)")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(columns):
            raise ValueError(f"{path}: line {lineno} has {len(cells)} cells, expected {len(columns)}")
        rows.append(cells)
    return columns, rows


def _metric_points(columns, rows, metric, path):
    if metric not in columns:
        raise ValueError(f"{path}: no column named {metric!r} in results header")
    ci = columns.index(metric)
    xs, ys = [], []
    for cells in rows:
        x, y = float(cells[0]), float(cells[ci])
        if math.isfinite(x) and math.isfinite(y):
            xs.append(x)
            ys.append(y)
    if len(xs) < 3:
        raise ValueError(f"{path}: fewer than 3 usable points for metric {metric!r}")
    return np.asarray(xs), np.asarray(ys)


def _write_curves(path, xs, log_rep, lin_rep):
    grid = np.linspace(float(xs.min()), float(xs.max()), _CURVE_SAMPLES)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epsilon,logarithmic,linear\n")
        for x in grid:
            ylog = log_rep.slope * math.log(x) + log_rep.intercept
            ylin = lin_rep.slope * x + lin_rep.intercept
            fh.write(f"{x!r},{ylog!r},{ylin!r}\n")


def _plot(path, metric, xs, ys, log_rep, lin_rep):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.scatter(xs, ys, s=12, alpha=0.55, color="#1f6fb2", label="sweep rows", zorder=3)
    grid = np.linspace(float(xs.min()), float(xs.max()), _CURVE_SAMPLES)
    ax.plot(
        grid,
        log_rep.slope * np.log(grid) + log_rep.intercept,
        color="#c23b22",
        label=f"log fit (R²={log_rep.r_squared:.3f})",
    )
    ax.plot(
        grid,
        lin_rep.slope * grid + lin_rep.intercept,
        color="#3a7d44",
        linestyle="--",
        label=f"linear fit (R²={lin_rep.r_squared:.3f})",
    )
    ax.set_xlabel("epsilon")
    ax.set_ylabel(metric)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def run_analyze(results_path: str, metrics, out_dir: str) -> str:
    """Fit every requested metric; emits analysis.csv + per-metric SVG/fit.txt."""
    metrics = [m.strip() for m in metrics if m.strip()]
    if not metrics:
        raise ValueError("no metrics requested")
    columns, rows = read_results(results_path)
    os.makedirs(out_dir, exist_ok=True)
    analysis_path = os.path.join(out_dir, "analysis.csv")
    with open(analysis_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ANALYSIS_HEADER + "\n")
        for metric in metrics:
            xs, ys = _metric_points(columns, rows, metric, results_path)
            log_rep = log_fit(xs, ys)
            lin_rep = linear_fit(xs, ys)
            for rep in (log_rep, lin_rep):
                fh.write(
                    f"{metric},{rep.model},{rep.slope!r},{rep.intercept!r},"
                    f"{rep.r_squared!r},{rep.slope_p_value!r},{rep.n}\n"
                )
            _write_curves(os.path.join(out_dir, f"{metric}.fit.txt"), xs, log_rep, lin_rep)
            _plot(os.path.join(out_dir, f"{metric}.svg"), metric, xs, ys, log_rep, lin_rep)
    return analysis_path
