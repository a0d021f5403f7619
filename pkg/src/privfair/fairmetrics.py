"""Per-group evaluation statistics and the four group-fairness measures.

Conventions that keep every metric well-defined on finite samples:
  - F1 is 0 when a group has no true and no predicted positives (flagged).
  - p-rule is 0 when positive rates differ in zero-ness, 1 when all are zero.
  - the prior-normalized p-rule refuses groups with zero label prior.
Metrics are computed over groups present in the evaluation data; registered
groups that are absent are reported in the warnings list, never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class UndefinedMetricError(ValueError):
    """A metric's defining ratio does not exist for this input (e.g. zero prior)."""


@dataclass(frozen=True)
class GroupStats:
    """Per-group counts and rates for the groups present in an evaluation split."""

    group_ids: tuple  # ascending ids of present groups
    group_names: tuple
    counts: tuple
    label_priors: tuple  # E[Y | g]
    positive_rates: tuple  # E[theta(X) | g]
    risks: tuple  # 0-1 loss per group
    f1s: tuple
    warnings: tuple


def group_stats(predictions, labels, groups, group_names: Sequence[str]) -> GroupStats:
    """Exact per-group counts/rates. Absent registered groups land in warnings."""
    pred = np.asarray(predictions).astype(np.int64).ravel()
    lab = np.asarray(labels).astype(np.int64).ravel()
    gid = np.asarray(groups).astype(np.int64).ravel()
    if not (pred.size == lab.size == gid.size):
        raise ValueError(
            f"length mismatch: predictions {pred.size}, labels {lab.size}, groups {gid.size}"
        )
    if pred.size == 0:
        raise ValueError("empty input")
    for name, v in (("predictions", pred), ("labels", lab)):
        bad = (v != 0) & (v != 1)
        if bad.any():
            raise ValueError(f"{name} must be binary; offending value {v[bad][0]} at row {int(np.argmax(bad))}")
    n_reg = len(group_names)
    if gid.min() < 0 or gid.max() >= n_reg:
        raise ValueError(f"group id outside registry [0, {n_reg})")

    ids, names, counts, priors, rates, risks, f1s, warns = [], [], [], [], [], [], [], []
    for g in range(n_reg):
        mask = gid == g
        c = int(mask.sum())
        if c == 0:
            warns.append(f"group '{group_names[g]}' absent from evaluation data")
            continue
        p_g, y_g = pred[mask], lab[mask]
        tp = int(np.sum((p_g == 1) & (y_g == 1)))
        fp = int(np.sum((p_g == 1) & (y_g == 0)))
        fn = int(np.sum((p_g == 0) & (y_g == 1)))
        denom = 2 * tp + fp + fn
        if denom == 0:
            f1 = 0.0
            warns.append(f"group '{group_names[g]}': no true or predicted positives, F1 set to 0")
        else:
            f1 = 2.0 * tp / denom
        ids.append(g)
        names.append(group_names[g])
        counts.append(c)
        priors.append(float(np.mean(y_g)))
        rates.append(float(np.mean(p_g)))
        risks.append(float(np.mean(p_g != y_g)))
        f1s.append(f1)
    return GroupStats(
        tuple(ids), tuple(names), tuple(counts), tuple(priors),
        tuple(rates), tuple(risks), tuple(f1s), tuple(warns),
    )


def accuracy(predictions, labels) -> float:
    pred = np.asarray(predictions).ravel()
    lab = np.asarray(labels).ravel()
    if pred.size != lab.size or pred.size == 0:
        raise ValueError("predictions and labels must be nonempty and equal length")
    return float(np.mean(pred == lab))


def _risk_values(stats: GroupStats, risk_field: str) -> np.ndarray:
    if risk_field == "zero_one_risk":
        return np.asarray(stats.risks, dtype=np.float64)
    if risk_field == "one_minus_f1":
        return 1.0 - np.asarray(stats.f1s, dtype=np.float64)
    raise ValueError(f"unknown risk_field {risk_field!r}")


def unequal_risk(stats: GroupStats, risk_field: str = "zero_one_risk") -> float:
    """Largest pairwise absolute risk gap between groups (smaller = fairer)."""
    if len(stats.group_ids) < 2:
        raise ValueError("unequal_risk needs at least 2 groups")
    r = _risk_values(stats, risk_field)
    return float(r.max() - r.min())


def delta_variance(stats: GroupStats) -> float:
    """Population variance of per-group F1 scores."""
    f1 = np.asarray(stats.f1s, dtype=np.float64)
    if f1.size < 1:
        raise ValueError("no groups present")
    if f1.max() == f1.min():  # exact 0 for identical scores (mean() rounding otherwise leaks ~1e-33)
        return 0.0
    return float(np.mean((f1 - f1.mean()) ** 2))


def _min_pairwise_ratio(rates: np.ndarray) -> float:
    # zero conventions: all zero -> perfectly equal; mixed zero -> maximally unequal
    zero = rates == 0.0
    if zero.all():
        return 1.0
    if zero.any():
        return 0.0
    return float(rates.min() / rates.max())


def p_rule(stats: GroupStats) -> float:
    """min over group pairs of min(r_i/r_j, r_j/r_i) on positive prediction rates."""
    if len(stats.group_ids) < 2:
        raise ValueError("p_rule needs at least 2 groups")
    return _min_pairwise_ratio(np.asarray(stats.positive_rates, dtype=np.float64))


def modified_p_rule(stats: GroupStats) -> float:
    """p-rule on prior-normalized rates r_g / E[Y | g]; zero priors are undefined."""
    if len(stats.group_ids) < 2:
        raise ValueError("modified_p_rule needs at least 2 groups")
    priors = np.asarray(stats.label_priors, dtype=np.float64)
    if (priors == 0.0).any():
        g = stats.group_names[int(np.argmax(priors == 0.0))]
        raise UndefinedMetricError(f"group '{g}' has zero label prior; prior-normalized rate undefined")
    rates = np.asarray(stats.positive_rates, dtype=np.float64) / priors
    return _min_pairwise_ratio(rates)
