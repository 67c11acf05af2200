"""Delimited result files.

Every CSV starts with a versioned schema comment so downstream parsers can
detect drift. All writes are atomic. Result files are deterministic given
the same config; wall-clock numbers live in a separate timings.csv sidecar
so reruns reproduce the result files byte for byte.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .data import atomic_write_text

SCHEMA_VERSION = 1


@dataclass
class ResultRow:
    method: str
    dataset: str
    arch: str
    seed: int
    metric: str
    best_student: int
    best_student_val: float
    best_student_test: float
    ensemble_val: float
    ensemble_test: float
    best_epoch: int
    best_epoch_val: float
    student_params: int
    disc_params: int
    teacher_params: int
    group_params: int


RESULT_FIELDS = [
    "method", "dataset", "arch", "seed", "metric",
    "best_student", "best_student_val", "best_student_test",
    "ensemble_val", "ensemble_test", "best_epoch", "best_epoch_val",
    "student_params", "disc_params", "teacher_params", "group_params",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(name: str, fields: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# graphdistill {name} v{SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_results_csv(path: str, rows: list[ResultRow]) -> None:
    data = [[getattr(r, f) for f in RESULT_FIELDS] for r in rows]
    atomic_write_text(path, render_csv("results", RESULT_FIELDS, data))


def mean_std(values: list[float]) -> tuple[float, float | None]:
    """Sample mean and sample standard deviation (ddof=1).

    A single value has no spread estimate; the std comes back None and is
    rendered as an empty cell.
    """
    n = len(values)
    if n == 0:
        raise ValueError("mean_std needs at least one value")
    mean = sum(values) / n
    if n == 1:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


SUMMARY_FIELDS = [
    "method", "dataset", "arch", "metric", "repeats",
    "best_student_test_mean", "best_student_test_std",
    "ensemble_test_mean", "ensemble_test_std",
]


def summarize(rows: list[ResultRow]) -> list[list]:
    if not rows:
        return []
    by_key: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        by_key.setdefault((r.method, r.dataset, r.arch, r.metric), []).append(r)
    out = []
    for key in sorted(by_key):
        group = by_key[key]
        bmean, bstd = mean_std([r.best_student_test for r in group])
        emean, estd = mean_std([r.ensemble_test for r in group])
        out.append(list(key) + [len(group), bmean,
                                "" if bstd is None else bstd,
                                emean, "" if estd is None else estd])
    return out


def write_summary_csv(path: str, rows: list[ResultRow]) -> None:
    atomic_write_text(path, render_csv("summary", SUMMARY_FIELDS, summarize(rows)))


EPOCH_FIELDS = ["seed", "epoch", "phase", "student", "ce", "l_g", "l_b",
                "total", "val"]


def write_epochs_csv(path: str, per_seed_reports: dict[int, list]) -> None:
    """One row per (seed, epoch, student) plus an ensemble row whose loss
    cells are empty."""
    rows = []
    for seed in sorted(per_seed_reports):
        for rep in per_seed_reports[seed]:
            for m in range(len(rep.val)):
                rows.append([seed, rep.epoch, rep.phase, m, rep.ce[m],
                             rep.l_g[m], rep.l_b[m], rep.total[m], rep.val[m]])
            rows.append([seed, rep.epoch, rep.phase, "ensemble",
                         "", "", "", "", rep.ensemble_val])
    atomic_write_text(path, render_csv("epochs", EPOCH_FIELDS, rows))


TIMING_FIELDS = ["seed", "kind", "epoch", "value_ms"]


def write_timings_csv(path: str, per_seed_reports: dict[int, list],
                      run_totals_ms: dict[int, float]) -> None:
    rows = []
    for seed in sorted(per_seed_reports):
        for rep in per_seed_reports[seed]:
            rows.append([seed, "epoch", rep.epoch, rep.wall_ms])
        if seed in run_totals_ms:
            rows.append([seed, "run", "", run_totals_ms[seed]])
    atomic_write_text(path, render_csv("timings", TIMING_FIELDS, rows))


DYNAMIC_FIELDS = ["kind", "level", "seed", "metric", "single", "kd", "oad",
                  "kd_minus_single", "oad_minus_single"]

DYNAMIC_SUMMARY_FIELDS = ["kind", "level", "metric", "repeats",
                          "kd_minus_single_mean", "kd_minus_single_std",
                          "oad_minus_single_mean", "oad_minus_single_std"]


def write_dynamic_csv(path: str, rows: list[list]) -> None:
    atomic_write_text(path, render_csv("dynamic", DYNAMIC_FIELDS, rows))


def write_dynamic_summary_csv(path: str, rows: list[list]) -> None:
    atomic_write_text(path, render_csv("dynamic-summary",
                                       DYNAMIC_SUMMARY_FIELDS, rows))


SWEEP_FIELDS = ["group_size", "seed", "metric",
                "best_student_test", "ensemble_test"]


def write_sweep_csv(path: str, rows: list[list]) -> None:
    atomic_write_text(path, render_csv("group-size-sweep", SWEEP_FIELDS, rows))
