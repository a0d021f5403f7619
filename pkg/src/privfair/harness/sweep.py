"""Epsilon sweeps: journaled results, resume, bounded worker pool.

Rows are pure functions of (config, grid index, repetition), so execution
order never matters: completed rows are appended to results.csv as a journal,
and on completion the file is rewritten sorted by (grid index, repetition).
A resumed run keeps existing journal lines verbatim (bytes untouched), runs
only the missing slots, and ends with the same sorted rewrite — hence resumed
and uninterrupted sweeps produce identical files.

Failed rows land in failures.csv with a machine-readable reason and are
retried on resume (failures.csv is rewritten fresh each run).
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .config import ConfigError, ExperimentConfig
from .pipelines import format_row, prepare_datasets, results_header, run_single

FAILURE_HEADER = "epsilon,repetition,stage,error"

# a journal row is matched back to its grid slot through the epsilon cell;
# calibration guarantees |cell - target| <= 1e-7 relative, grid spacing is
# far coarser, so nearest-value matching within this tolerance is unambiguous
_MATCH_RTOL = 1e-5


@dataclass
class SweepOutcome:
    results_path: str
    failures_path: str
    n_rows: int
    n_completed: int
    n_failed: int

    @property
    def exit_code(self) -> int:
        return 3 if self.n_failed > 0.10 * self.n_rows else 0


def _slot_of_line(line: str, grid: list) -> tuple:
    """(grid index, repetition) for a journal line, or None if it cannot match."""
    cells = line.split(",")
    if len(cells) < 3:
        return None
    try:
        eps = float(cells[0])
        rep = int(cells[1])
    except ValueError:
        return None
    best, best_diff = None, None
    for i, (_, target) in enumerate(grid):
        diff = abs(eps - target)
        if best_diff is None or diff < best_diff:
            best, best_diff = i, diff
    if best is None or best_diff > _MATCH_RTOL * grid[best][1]:
        return None
    return best, rep


def _read_journal(path: str, header: str, grid: list, repetitions: int) -> dict:
    """Parse an existing results journal into {(grid index, rep): line}.

    Tolerates a torn final line (no trailing newline); refuses files whose
    header or rows do not belong to this config's grid.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            blob = fh.read()
    except FileNotFoundError:
        return {}
    if not blob:
        return {}
    complete = blob.endswith("\n")
    lines = blob.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not complete and lines:
        lines.pop()  # torn write from the interrupted run
    if not lines:
        return {}
    if lines[0] != header:
        raise ConfigError(
            f"{path}: existing results header does not match this config; "
            "refusing to resume (move the file aside or fix the config)"
        )
    done = {}
    for line in lines[1:]:
        slot = _slot_of_line(line, grid)
        if slot is None or slot[1] < 0 or slot[1] >= repetitions:
            raise ConfigError(
                f"{path}: row does not belong to this config's grid: {line[:80]!r}; "
                "refusing to resume"
            )
        done[slot] = line
    return done


def run_sweep(
    cfg: ExperimentConfig,
    out_dir: str,
    resume: bool = False,
    jobs: int | None = None,
) -> SweepOutcome:
    grid = cfg.epsilon_grid()
    datasets = prepare_datasets(cfg)
    header = results_header(datasets[2].group_names)
    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(out_dir, "results.csv")
    failures_path = os.path.join(out_dir, "failures.csv")

    done = _read_journal(results_path, header, grid, cfg.repetitions) if resume else {}
    slots = [
        (i, rep)
        for i in range(len(grid))
        for rep in range(cfg.repetitions)
        if (i, rep) not in done
    ]

    lock = threading.Lock()
    failures = []
    with open(results_path, "w", encoding="utf-8", newline="\n") as journal:
        journal.write(header + "\n")
        for line in done.values():
            journal.write(line + "\n")
        journal.flush()

        def work(slot):
            i, rep = slot
            eps_string, eps_value = grid[i]
            try:
                row = run_single(cfg, *datasets, eps_value, i, rep)
                line = format_row(row, datasets[2].group_names, cfg.record_timing)
            except Exception as exc:  # noqa: BLE001 - a row failure must not kill the sweep
                with lock:
                    failures.append((i, rep, eps_string, type(exc).__name__, str(exc)))
                return
            with lock:
                done[slot] = line
                journal.write(line + "\n")
                journal.flush()

        n_jobs = jobs if jobs else (os.cpu_count() or 1)
        if n_jobs <= 1:
            for slot in slots:
                work(slot)
        else:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                list(pool.map(work, slots))

    # final rewrite: deterministic order regardless of completion order
    with open(results_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for slot in sorted(done):
            fh.write(done[slot] + "\n")

    with open(failures_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(FAILURE_HEADER + "\n")
        for _i, rep, eps_string, stage, message in sorted(failures):
            msg = message.replace("\n", " ").replace(",", ";")
            fh.write(f"{eps_string},{rep},{stage},{msg}\n")

    total = len(grid) * cfg.repetitions
    return SweepOutcome(
        results_path=results_path,
        failures_path=failures_path,
        n_rows=total,
        n_completed=len(done),
        n_failed=len(failures),
    )
