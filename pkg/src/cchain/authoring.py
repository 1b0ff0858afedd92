"""Knowledge authoring: expert questionnaire sheets -> knowledge base.

A questionnaire sheet is a CSV with columns ``symptom_id,prompt,class,
cf_expert1..cf_expertN``: one row per symptom, one certainty factor (0-100)
per expert.  From a sheet we derive:

* a probability table -- each symptom's share of the anomaly's total
  certainty, with cumulative and complement columns;
* a certainty-effect table -- one row per symptom class, where the effect is
  the class's strongest certainty factor divided by the sum of all class
  maxima.  Effects double as the answer thresholds used during diagnosis.

Cut-off sheets (``anomaly,kind,v1..vN[,reference]``) aggregate per-expert
verdict thresholds by plain averaging; when a supplied reference value
disagrees with the recomputed mean by more than 0.005 the aggregation keeps
the mean and emits a discrepancy note rather than silently correcting.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from math import fsum
from typing import Any, Mapping, Sequence

from .kb import CutoffEntry, KnowledgeBase, parse_kb_document

CUTOFF_DISCREPANCY_TOLERANCE = 0.005


class AuthoringError(Exception):
    """Base class for questionnaire and cut-off sheet problems."""


class SheetFormatError(AuthoringError):
    """A CSV sheet is malformed (header, row shape, value types)."""


class DegenerateSheetError(AuthoringError):
    """The sheet carries no usable certainty (all factors zero, or no rows)."""


class CutoffSheetError(AuthoringError):
    """A cut-off sheet is malformed or internally inconsistent."""


@dataclass(frozen=True)
class SheetRow:
    symptom_id: str
    prompt: str
    class_label: str
    expert_cfs: tuple[float, ...]


@dataclass(frozen=True)
class QuestionnaireSheet:
    anomaly_id: str
    rows: tuple[SheetRow, ...]


@dataclass(frozen=True)
class ProbabilityRow:
    symptom_id: str
    class_label: str
    certainty_factor: float
    probability: float
    cumulative: float
    amendment: float


@dataclass(frozen=True)
class EffectRow:
    class_label: str
    class_max_cf: float
    certainty_effect: float
    uncertainty_effect: float
    cumulative: float


@dataclass(frozen=True)
class CutoffSheetRow:
    anomaly_id: str
    kind: str  # "tpd" | "tnd"
    values: tuple[float, ...]
    reference: float | None = None


@dataclass(frozen=True)
class ExpertCutoffSheet:
    rows: tuple[CutoffSheetRow, ...]


@dataclass(frozen=True)
class CutoffAggregation:
    entries: tuple[CutoffEntry, ...]
    notes: tuple[str, ...] = ()

    def entry(self, anomaly_id: str) -> CutoffEntry:
        for e in self.entries:
            if e.anomaly_id == anomaly_id:
                return e
        raise CutoffSheetError(f"no cut-off values for anomaly {anomaly_id!r}")


@dataclass(frozen=True)
class Scaffold:
    """Optional extra KB material spliced in by build_kb: display names,
    profile questions, derived facts, hand-written rules, notes."""

    anomaly_names: Mapping[str, str] = field(default_factory=dict)
    profile_questions: tuple = ()
    derived_facts: tuple = ()
    rules: tuple = ()
    notes: tuple[str, ...] = ()


def truncate3(value: float) -> Decimal:
    """Display precision for report tables: three decimals, truncated."""
    return Decimal(str(float(value))).quantize(Decimal("0.001"), rounding=ROUND_DOWN)


# ---------------------------------------------------------------------------
# CSV parsing


def parse_questionnaire_csv(text: str, anomaly_id: str) -> QuestionnaireSheet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SheetFormatError("questionnaire sheet is empty") from None
    if header[:3] != ["symptom_id", "prompt", "class"]:
        raise SheetFormatError(
            "questionnaire header must start with symptom_id,prompt,class"
        )
    expert_cols = header[3:]
    expected = [f"cf_expert{i}" for i in range(1, len(expert_cols) + 1)]
    if not expert_cols or expert_cols != expected:
        raise SheetFormatError(
            "questionnaire header must end with cf_expert1..cf_expertN"
        )
    rows = []
    for line_no, cells in enumerate(reader, start=2):
        if not cells or all(c.strip() == "" for c in cells):
            continue
        if len(cells) != len(header):
            raise SheetFormatError(
                f"line {line_no}: expected {len(header)} cells, got {len(cells)}"
            )
        symptom_id, prompt, class_label = cells[0], cells[1], cells[2]
        cfs = []
        for col, cell in zip(expert_cols, cells[3:]):
            try:
                cf = float(cell)
            except ValueError:
                raise SheetFormatError(
                    f"line {line_no}: {col} must be a number, got {cell!r}"
                ) from None
            if not 0.0 <= cf <= 100.0:
                raise SheetFormatError(
                    f"line {line_no}: {col} must lie in [0, 100], got {cell!r}"
                )
            cfs.append(cf)
        rows.append(
            SheetRow(
                symptom_id=symptom_id,
                prompt=prompt,
                class_label=class_label,
                expert_cfs=tuple(cfs),
            )
        )
    if not rows:
        raise DegenerateSheetError(f"questionnaire for {anomaly_id!r} has no rows")
    ids = [r.symptom_id for r in rows]
    if len(set(ids)) != len(ids):
        raise SheetFormatError("questionnaire symptom ids must be unique")
    return QuestionnaireSheet(anomaly_id=anomaly_id, rows=tuple(rows))


def parse_cutoff_csv(text: str) -> ExpertCutoffSheet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CutoffSheetError("cut-off sheet is empty") from None
    if header[:2] != ["anomaly", "kind"]:
        raise CutoffSheetError("cut-off header must start with anomaly,kind")
    value_cols = header[2:]
    has_reference = bool(value_cols) and value_cols[-1] == "reference"
    if has_reference:
        value_cols = value_cols[:-1]
    expected = [f"v{i}" for i in range(1, len(value_cols) + 1)]
    if not value_cols or value_cols != expected:
        raise CutoffSheetError("cut-off header must continue with v1..vN")
    rows = []
    for line_no, cells in enumerate(reader, start=2):
        if not cells or all(c.strip() == "" for c in cells):
            continue
        if len(cells) != len(header):
            raise CutoffSheetError(
                f"line {line_no}: expected {len(header)} cells, got {len(cells)}"
            )
        anomaly_id, kind = cells[0], cells[1]
        if kind not in ("tpd", "tnd"):
            raise CutoffSheetError(
                f"line {line_no}: kind must be 'tpd' or 'tnd', got {kind!r}"
            )
        raw_values = cells[2 : 2 + len(value_cols)]
        values = []
        for col, cell in zip(value_cols, raw_values):
            try:
                v = float(cell)
            except ValueError:
                raise CutoffSheetError(
                    f"line {line_no}: {col} must be a number, got {cell!r}"
                ) from None
            if not 0.0 <= v <= 1.0:
                raise CutoffSheetError(
                    f"line {line_no}: {col} must lie in [0, 1], got {cell!r}"
                )
            values.append(v)
        reference = None
        if has_reference and cells[-1].strip() != "":
            try:
                reference = float(cells[-1])
            except ValueError:
                raise CutoffSheetError(
                    f"line {line_no}: reference must be a number, got {cells[-1]!r}"
                ) from None
        rows.append(
            CutoffSheetRow(
                anomaly_id=anomaly_id,
                kind=kind,
                values=tuple(values),
                reference=reference,
            )
        )
    if not rows:
        raise CutoffSheetError("cut-off sheet has no rows")
    sheet = ExpertCutoffSheet(rows=tuple(rows))
    _check_cutoff_sheet(sheet)
    return sheet


def _check_cutoff_sheet(sheet: ExpertCutoffSheet) -> None:
    by_anomaly: dict[str, dict[str, CutoffSheetRow]] = {}
    for row in sheet.rows:
        kinds = by_anomaly.setdefault(row.anomaly_id, {})
        if row.kind in kinds:
            raise CutoffSheetError(
                f"duplicate {row.kind} row for anomaly {row.anomaly_id!r}"
            )
        kinds[row.kind] = row
    for anomaly_id, kinds in by_anomaly.items():
        if set(kinds) != {"tpd", "tnd"}:
            raise CutoffSheetError(
                f"anomaly {anomaly_id!r} needs both a tpd and a tnd row"
            )
        tpd, tnd = kinds["tpd"], kinds["tnd"]
        if len(tpd.values) != len(tnd.values):
            raise CutoffSheetError(
                f"anomaly {anomaly_id!r}: tpd and tnd rows disagree on expert count"
            )
        for i, (hi, lo) in enumerate(zip(tpd.values, tnd.values), start=1):
            if not lo < hi:
                raise CutoffSheetError(
                    f"anomaly {anomaly_id!r}: expert {i} has tnd {lo} >= tpd {hi}"
                )


# ---------------------------------------------------------------------------
# Derived tables


def average_expert_cfs(row: SheetRow) -> float:
    """Mean certainty factor across the experts of one questionnaire row."""
    return fsum(row.expert_cfs) / len(row.expert_cfs)


def probability_table(sheet: QuestionnaireSheet) -> tuple[ProbabilityRow, ...]:
    """Per-symptom share of the anomaly's total certainty, in sheet order.

    The cumulative column divides the running certainty sum by the total, so
    the final row is exactly 1; the amendment column is the complement
    probability (amendment + probability == 1 for every row).
    """
    cfs = [average_expert_cfs(r) for r in sheet.rows]
    total = fsum(cfs)
    if total <= 0.0:
        raise DegenerateSheetError(
            f"questionnaire for {sheet.anomaly_id!r} has zero total certainty"
        )
    rows = []
    running = 0.0
    for row, cf in zip(sheet.rows, cfs):
        running += cf
        p = cf / total
        rows.append(
            ProbabilityRow(
                symptom_id=row.symptom_id,
                class_label=row.class_label,
                certainty_factor=cf,
                probability=p,
                cumulative=running / total,
                amendment=1.0 - p,
            )
        )
    return tuple(rows)


def certainty_effect_table(sheet: QuestionnaireSheet) -> tuple[EffectRow, ...]:
    """One row per symptom class, in order of first appearance.

    A class's certainty effect is its strongest certainty factor divided by
    the sum of all class maxima; effects therefore sum to exactly 1 and the
    cumulative column ends at 1.
    """
    class_order: list[str] = []
    class_max: dict[str, float] = {}
    for row in sheet.rows:
        cf = average_expert_cfs(row)
        if row.class_label not in class_max:
            class_order.append(row.class_label)
            class_max[row.class_label] = cf
        else:
            class_max[row.class_label] = max(class_max[row.class_label], cf)
    total = fsum(class_max.values())
    if total <= 0.0:
        raise DegenerateSheetError(
            f"questionnaire for {sheet.anomaly_id!r} has zero total certainty"
        )
    rows = []
    running = 0.0
    for label in class_order:
        cf = class_max[label]
        running += cf
        effect = cf / total
        rows.append(
            EffectRow(
                class_label=label,
                class_max_cf=cf,
                certainty_effect=effect,
                uncertainty_effect=1.0 - effect,
                cumulative=running / total,
            )
        )
    return tuple(rows)


def aggregate_cutoffs(sheet: ExpertCutoffSheet) -> CutoffAggregation:
    """Average each anomaly's expert thresholds; flag reference mismatches."""
    means: dict[str, dict[str, float]] = {}
    notes: list[str] = []
    order: list[str] = []
    for row in sheet.rows:
        mean = fsum(row.values) / len(row.values)
        if row.anomaly_id not in means:
            order.append(row.anomaly_id)
        means.setdefault(row.anomaly_id, {})[row.kind] = mean
        if row.reference is not None and abs(mean - row.reference) > CUTOFF_DISCREPANCY_TOLERANCE:
            notes.append(
                f"cut-off discrepancy: {row.anomaly_id} {row.kind} recomputes to"
                f" {mean:.3f} but the sheet supplied {row.reference:.3f}"
                f" (difference {abs(mean - row.reference):.3f}); keeping the recomputed mean"
            )
    entries = tuple(
        CutoffEntry(anomaly_id=a, tnd=means[a]["tnd"], tpd=means[a]["tpd"]) for a in order
    )
    return CutoffAggregation(entries=entries, notes=tuple(notes))


# ---------------------------------------------------------------------------
# Report rendering (three-decimal truncated display, CSV)


def render_probability_csv(rows: Sequence[ProbabilityRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["symptom_id", "class", "certainty_factor", "probability", "cumulative_probability", "probability_amendment"]
    )
    for r in rows:
        writer.writerow(
            [
                r.symptom_id,
                r.class_label,
                f"{truncate3(r.certainty_factor)}",
                f"{truncate3(r.probability)}",
                f"{truncate3(r.cumulative)}",
                f"{truncate3(r.amendment)}",
            ]
        )
    return out.getvalue()


def render_effect_csv(rows: Sequence[EffectRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["class", "class_max_cf", "certainty_effect", "uncertainty_effect", "cumulative_certainty_effect"]
    )
    for r in rows:
        writer.writerow(
            [
                r.class_label,
                f"{truncate3(r.class_max_cf)}",
                f"{truncate3(r.certainty_effect)}",
                f"{truncate3(r.uncertainty_effect)}",
                f"{truncate3(r.cumulative)}",
            ]
        )
    return out.getvalue()


# ---------------------------------------------------------------------------
# Assembly


def parse_scaffold(text: str) -> Scaffold:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise AuthoringError(f"scaffold is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise AuthoringError("scaffold must be a JSON object")
    unknown = set(doc) - {"anomaly_names", "profile_questions", "derived_facts", "rules", "notes"}
    if unknown:
        raise AuthoringError(f"scaffold has unknown field(s): {', '.join(sorted(unknown))}")
    names = doc.get("anomaly_names", {})
    if not isinstance(names, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in names.items()
    ):
        raise AuthoringError("scaffold.anomaly_names must map ids to display names")
    for key in ("profile_questions", "derived_facts", "rules", "notes"):
        if key in doc and not isinstance(doc[key], list):
            raise AuthoringError(f"scaffold.{key} must be an array")
    return Scaffold(
        anomaly_names=names,
        profile_questions=tuple(doc.get("profile_questions", ())),
        derived_facts=tuple(doc.get("derived_facts", ())),
        rules=tuple(doc.get("rules", ())),
        notes=tuple(doc.get("notes", ())),
    )


def class_rule_id(anomaly_id: str, class_label: str) -> str:
    return f"{anomaly_id}_class_{class_label.lower()}"


def build_kb(
    sheets: Sequence[QuestionnaireSheet],
    cutoffs: CutoffAggregation,
    scaffold: Scaffold | None = None,
    version: str = "1",
) -> KnowledgeBase:
    """Assemble a full knowledge base from questionnaire sheets.

    Every symptom class becomes one diagnosis rule: antecedent certainty 100,
    a single premise on the class's strongest symptom (whose prompt stands in
    for the whole class), and the class's certainty effect as the implied
    answer threshold.  Scaffold material -- profile questions, derived facts,
    extra rules -- is spliced in verbatim and validated with everything else.
    """
    scaffold = scaffold or Scaffold()
    if not sheets:
        raise DegenerateSheetError("build_kb needs at least one questionnaire sheet")

    doc: dict[str, Any] = {
        "anomalies": [],
        "symptoms": [],
        "profile_questions": list(scaffold.profile_questions),
        "derived_facts": list(scaffold.derived_facts),
        "rules": [],
        "cutoffs": [],
        "metadata": {
            "version": version,
            "notes": list(cutoffs.notes) + list(scaffold.notes),
        },
    }

    for sheet in sheets:
        display = scaffold.anomaly_names.get(
            sheet.anomaly_id, sheet.anomaly_id.replace("_", " ").capitalize()
        )
        doc["anomalies"].append({"id": sheet.anomaly_id, "name": display})

        effects = {row.class_label: row for row in certainty_effect_table(sheet)}
        representative: dict[str, SheetRow] = {}
        for row in sheet.rows:
            cf = average_expert_cfs(row)
            doc["symptoms"].append(
                {
                    "id": row.symptom_id,
                    "prompt": row.prompt,
                    "anomaly": sheet.anomaly_id,
                    "class": row.class_label,
                    "certainty_factor": cf,
                    "certainty_effect": effects[row.class_label].certainty_effect,
                }
            )
            best = representative.get(row.class_label)
            if best is None or cf > average_expert_cfs(best):
                representative[row.class_label] = row
        for effect_row in effects.values():
            rep = representative[effect_row.class_label]
            doc["rules"].append(
                {
                    "id": class_rule_id(sheet.anomaly_id, effect_row.class_label),
                    "premises": [{"symptom": rep.symptom_id}],
                    "guards": [],
                    "antecedent_cf": 100.0,
                    "conclusion": {"anomaly": sheet.anomaly_id},
                }
            )
        entry = cutoffs.entry(sheet.anomaly_id)
        doc["cutoffs"].append(
            {"anomaly": sheet.anomaly_id, "tnd": entry.tnd, "tpd": entry.tpd}
        )

    doc["rules"].extend(scaffold.rules)
    return parse_kb_document(doc)
