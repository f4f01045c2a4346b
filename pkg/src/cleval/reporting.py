"""Run-record persistence and report emission.

Records are JSON Lines, one object per trial, schema-versioned, sorted
canonically by (phase, r, s) on read so append order never matters.
Result tables follow the "Acc / AvgAcc" two-decimal percentage cell
format, with "- / -" for algorithms whose evaluation diverged entirely.
All emitted numbers are recomputable from the records; timing is kept in
its own sub-object and excluded from canonical comparisons.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, DataFormatError
from .protocol import SCHEMA_VERSION, PhaseReport, RunRecord


def write_records(records: Iterable[RunRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: malformed JSON at line {lineno}: {exc}") from None
            version = payload.get("schema_version")
            if version != SCHEMA_VERSION:
                raise DataFormatError(
                    f"{path}: line {lineno}: schema version {version!r}, "
                    f"this reader handles {SCHEMA_VERSION}"
                )
            try:
                records.append(RunRecord.from_dict(payload))
            except KeyError as exc:
                raise DataFormatError(
                    f"{path}: line {lineno}: missing field {exc}"
                ) from None
    return canonical_records(records)


def canonical_records(
    records: Sequence[RunRecord], include_timing: bool = True
) -> list[RunRecord]:
    """Canonical (phase, r, s) order; optionally with timing blanked so
    two runs can be compared byte-for-byte."""
    ordered = sorted(records, key=lambda rec: (rec.phase, rec.r, rec.s))
    if include_timing:
        return ordered
    stripped = []
    for rec in ordered:
        clone = RunRecord.from_dict(rec.to_dict())
        clone.timing = {}
        stripped.append(clone)
    return stripped


def records_digest(records: Sequence[RunRecord]) -> str:
    """Byte-stable serialization of the deterministic record content."""
    rows = [rec.to_dict() for rec in canonical_records(records, include_timing=False)]
    return json.dumps(rows, sort_keys=True)


def write_report(report: PhaseReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")


def read_report(path: str | Path) -> PhaseReport:
    return PhaseReport.from_dict(json.loads(Path(path).read_text()))


def format_cell(acc: float, avg_acc: float, diverged: bool = False) -> str:
    if diverged:
        return "- / -"
    return f"{100.0 * acc:.2f} / {100.0 * avg_acc:.2f}"


def _check_conditions(reports: Sequence[PhaseReport]) -> list[str]:
    """Distinct condition labels, first-seen order; every report sharing
    a condition must agree on scenario shape and S."""
    seen: dict[str, PhaseReport] = {}
    order: list[str] = []
    for rep in reports:
        anchor = seen.get(rep.condition)
        if anchor is None:
            seen[rep.condition] = rep
            order.append(rep.condition)
            continue
        if anchor.scenario != rep.scenario or anchor.S != rep.S:
            raise ConfigurationError(
                f"inconsistent scenario metadata under condition '{rep.condition}': "
                f"{anchor.algorithm} vs {rep.algorithm}"
            )
    return order


def emit_results_table(reports: Sequence[PhaseReport]) -> tuple[str, str]:
    """(csv_text, aligned_text): one row per algorithm, one column per
    condition, cells "Acc / AvgAcc" in two-decimal percent."""
    if not reports:
        raise ConfigurationError("no reports to tabulate")
    conditions = _check_conditions(reports)
    algorithms = sorted({rep.algorithm for rep in reports})
    cells: dict[tuple[str, str], str] = {}
    for rep in reports:
        key = (rep.algorithm, rep.condition)
        if key in cells:
            raise ConfigurationError(
                f"duplicate report for algorithm '{rep.algorithm}' "
                f"under condition '{rep.condition}'"
            )
        cells[key] = format_cell(rep.eval_acc, rep.eval_avg_acc, rep.eval_diverged)

    header = ["algorithm"] + conditions
    rows = [
        [algo] + [cells.get((algo, cond), "") for cond in conditions]
        for algo in algorithms
    ]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)

    widths = [max(len(str(row[i])) for row in [header] + rows) for i in range(len(header))]
    lines = []
    for row in [header] + rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip())
    return buf.getvalue(), "\n".join(lines) + "\n"


def _mean_sd(values: list[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def emit_curves(records: Sequence[RunRecord]) -> str:
    """Tidy long-format CSV: (algorithm, t, mean, sd, metric) rows for
    the per-task accuracy curve, the parameter-count growth, and the
    total training seconds of each algorithm."""
    if not records:
        raise ConfigurationError("no records to summarize")
    by_algo: dict[str, list[RunRecord]] = {}
    for rec in canonical_records(records):
        by_algo.setdefault(rec.algorithm, []).append(rec)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["algorithm", "t", "mean", "sd", "metric"])
    for algo in sorted(by_algo):
        group = by_algo[algo]
        max_t = max(len(rec.acc_series) for rec in group)
        for t in range(max_t):
            at_t = [rec.acc_series[t] for rec in group if len(rec.acc_series) > t]
            mean, sd = _mean_sd(at_t)
            writer.writerow([algo, t + 1, repr(mean), repr(sd), "acc"])
        max_t = max(len(rec.param_counts) for rec in group)
        for t in range(max_t):
            at_t = [float(rec.param_counts[t]) for rec in group if len(rec.param_counts) > t]
            mean, sd = _mean_sd(at_t)
            writer.writerow([algo, t + 1, repr(mean), repr(sd), "param_count"])
        totals = [rec.timing.get("seconds_total", 0.0) for rec in group]
        mean, sd = _mean_sd(totals)
        writer.writerow([algo, max_t, repr(mean), repr(sd), "train_seconds"])
    return buf.getvalue()
