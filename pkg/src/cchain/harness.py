"""Batch evaluation: run recorded interviews and summarise the outcomes.

A record set is a directory of answer-script JSON files plus a
``manifest.csv`` with columns ``record_id,anomaly,file``.  Running a batch
replays every script against its anomaly; per-record failures are collected,
never fatal.  Summaries use the sample (n-1) standard deviation and the
coefficient of variation s / mean.  Report tables truncate to three decimals
for display.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .authoring import truncate3
from .engine import Diagnosis, SessionError, Verdict, run_script
from .kb import KbError, KnowledgeBase

MANIFEST_NAME = "manifest.csv"


class HarnessError(Exception):
    """Base class for batch-evaluation problems."""


class InsufficientDataError(HarnessError):
    """A summary was requested over an empty collection."""


class RecordSetError(HarnessError):
    """A record-set directory or manifest is malformed."""


@dataclass(frozen=True)
class Record:
    record_id: str
    anomaly_id: str
    script: Mapping[str, Any]


@dataclass(frozen=True)
class RecordOutcome:
    record_id: str
    anomaly_id: str
    diagnosis: Diagnosis


@dataclass(frozen=True)
class BatchResult:
    outcomes: tuple[RecordOutcome, ...]
    errors: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class SummaryStats:
    n: int
    x_bar: float
    s: float | None
    cv: float | None


def summarize(values: Sequence[float]) -> SummaryStats:
    """Mean, sample (n-1) standard deviation and coefficient of variation.

    One value yields a mean alone; the spread columns need at least two.
    The coefficient of variation is undefined for a zero mean.
    """
    if not values:
        raise InsufficientDataError("summarize needs at least one value")
    x_bar = statistics.fmean(values)
    if len(values) < 2:
        return SummaryStats(n=1, x_bar=x_bar, s=None, cv=None)
    s = statistics.stdev(values)
    cv = s / x_bar if x_bar != 0.0 else None
    return SummaryStats(n=len(values), x_bar=x_bar, s=s, cv=cv)


# ---------------------------------------------------------------------------
# Record sets on disk


def load_record_set(directory) -> list[Record]:
    root = Path(directory)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise RecordSetError(f"record set {root} has no {MANIFEST_NAME}")
    with open(manifest, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RecordSetError(f"{manifest} is empty") from None
        if header != ["record_id", "anomaly", "file"]:
            raise RecordSetError(
                f"{manifest} header must be record_id,anomaly,file"
            )
        records = []
        seen: set[str] = set()
        for line_no, cells in enumerate(reader, start=2):
            if not cells or all(c.strip() == "" for c in cells):
                continue
            if len(cells) != 3:
                raise RecordSetError(f"{manifest} line {line_no}: expected 3 cells")
            record_id, anomaly_id, file_name = cells
            if record_id in seen:
                raise RecordSetError(f"{manifest} line {line_no}: duplicate record id {record_id!r}")
            seen.add(record_id)
            script_path = root / file_name
            try:
                with open(script_path, encoding="utf-8") as sf:
                    script = json.load(sf)
            except FileNotFoundError:
                raise RecordSetError(f"{manifest} line {line_no}: missing script {file_name!r}") from None
            except json.JSONDecodeError as e:
                raise RecordSetError(
                    f"{manifest} line {line_no}: script {file_name!r} is not valid JSON ({e})"
                ) from None
            records.append(Record(record_id=record_id, anomaly_id=anomaly_id, script=script))
    return records


def write_record_set(directory, records: Iterable[Record]) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for record in records:
        file_name = f"{record.record_id}.json"
        with open(root / file_name, "w", encoding="utf-8", newline="") as fh:
            json.dump(record.script, fh, indent=2, sort_keys=True)
            fh.write("\n")
        rows.append([record.record_id, record.anomaly_id, file_name])
    with open(root / MANIFEST_NAME, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "anomaly", "file"])
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Batch execution


def run_batch(kb: KnowledgeBase, records: Iterable[Record]) -> BatchResult:
    """Replay every record; collect failures instead of raising."""
    outcomes = []
    errors = []
    for record in records:
        try:
            diagnosis = run_script(kb, record.anomaly_id, record.script)
        except (SessionError, KbError) as e:
            errors.append((record.record_id, str(e)))
            continue
        outcomes.append(
            RecordOutcome(record_id=record.record_id, anomaly_id=record.anomaly_id, diagnosis=diagnosis)
        )
    return BatchResult(outcomes=tuple(outcomes), errors=tuple(errors))


def group_outcomes(
    kb: KnowledgeBase, outcomes: Iterable[RecordOutcome]
) -> dict[str, list[RecordOutcome]]:
    """Outcomes bucketed by anomaly, in knowledge-base declaration order."""
    buckets: dict[str, list[RecordOutcome]] = {}
    by_anomaly: dict[str, list[RecordOutcome]] = {}
    for outcome in outcomes:
        by_anomaly.setdefault(outcome.anomaly_id, []).append(outcome)
    for anomaly in kb.anomalies:
        if anomaly.id in by_anomaly:
            buckets[anomaly.id] = by_anomaly.pop(anomaly.id)
    for anomaly_id in by_anomaly:  # pragma: no cover - run_batch validates ids
        buckets[anomaly_id] = by_anomaly[anomaly_id]
    return buckets


def _fmt(value: float | None) -> str:
    return "" if value is None else str(truncate3(value))


def emit_report(kb: KnowledgeBase, batch: BatchResult) -> str:
    """Per-anomaly summary CSV: spread statistics over the certainty degrees
    plus verdict counts.  ``n`` counts all evaluated records; degrees exist
    only for evidence-bearing ones, and no-evidence records count as negative.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["anomaly", "x_bar", "s", "cv", "n", "positives", "negatives", "rfi"])
    for anomaly_id, outcomes in group_outcomes(kb, batch.outcomes).items():
        degrees = [
            o.diagnosis.certainty_degree
            for o in outcomes
            if o.diagnosis.certainty_degree is not None
        ]
        stats = summarize(degrees) if degrees else None
        verdicts = [o.diagnosis.verdict for o in outcomes]
        writer.writerow(
            [
                anomaly_id,
                _fmt(stats.x_bar) if stats else "",
                _fmt(stats.s) if stats else "",
                _fmt(stats.cv) if stats else "",
                len(outcomes),
                sum(v is Verdict.POSITIVE for v in verdicts),
                sum(v is Verdict.NEGATIVE for v in verdicts),
                sum(v is Verdict.NEEDS_EXAMINATION for v in verdicts),
            ]
        )
    return out.getvalue()


def errorbar_rows(stats_by_anomaly: Sequence[tuple[str, SummaryStats]]) -> str:
    """Error-bar CSV: mean with one standard deviation to either side.

    Bounds are computed in decimal so printed means and deviations subtract
    exactly (0.935 with s 0.060 gives 0.875 and 0.995, not a float hair off).
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["anomaly", "mean", "lower", "upper"])
    for anomaly_id, stats in stats_by_anomaly:
        mean = Decimal(str(stats.x_bar))
        if stats.s is None:
            writer.writerow([anomaly_id, _fmt(stats.x_bar), "", ""])
            continue
        spread = Decimal(str(stats.s))
        writer.writerow(
            [
                anomaly_id,
                _fmt(stats.x_bar),
                str((mean - spread).quantize(Decimal("0.001"), rounding="ROUND_DOWN")),
                str((mean + spread).quantize(Decimal("0.001"), rounding="ROUND_DOWN")),
            ]
        )
    return out.getvalue()


def emit_errorbar_data(kb: KnowledgeBase, batch: BatchResult) -> str:
    """Error-bar CSV for a batch, one line per anomaly in declaration order."""
    rows = []
    for anomaly_id, outcomes in group_outcomes(kb, batch.outcomes).items():
        degrees = [
            o.diagnosis.certainty_degree
            for o in outcomes
            if o.diagnosis.certainty_degree is not None
        ]
        if degrees:
            rows.append((anomaly_id, summarize(degrees)))
    return errorbar_rows(rows)
