"""Knowledge-base model: domain types, JSON parsing, validation, serialisation.

A knowledge base is a UTF-8 JSON document with seven sections: anomalies,
symptoms, profile_questions, derived_facts, rules, cutoffs and metadata.
Parsing validates every structural invariant and names the offending entity;
serialisation is canonical (sorted keys, two-space indent, every number
rendered with six decimal places) so equal knowledge bases serialise to
byte-identical documents and parse/serialise round-trip exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Any, Iterable, Mapping, Sequence

ID_PATTERN = re.compile(r"^[a-z][a-z0-9_]*$")
CLASS_PATTERN = re.compile(r"^[A-Z]$")

GUARD_OPS = ("eq", "ne", "lt", "le", "gt", "ge", "between")

CLASS_EFFECT_SUM_TOLERANCE = 0.005


class KbError(Exception):
    """Base class for everything wrong with a knowledge base."""


class KbSyntaxError(KbError):
    """The document is not valid JSON; carries line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class KbStructureError(KbError):
    """A section or field is missing, has the wrong type, or a bad value."""


class KbReferenceError(KbError):
    """An identifier points at nothing."""


class KbInvariantError(KbError):
    """A semantic invariant does not hold; the message names it."""


class UnknownAnomalyError(KbError):
    """A lookup used an anomaly id the knowledge base does not declare."""


def quantize6(value: float) -> float:
    """Canonical numeric precision: six decimal places, ties to even."""
    return float(Decimal(str(float(value))).quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class Anomaly:
    id: str
    name: str


@dataclass(frozen=True)
class Symptom:
    id: str
    prompt: str
    anomaly_id: str
    class_label: str
    certainty_factor: float
    certainty_effect: float


@dataclass(frozen=True)
class ProfileQuestion:
    id: str
    prompt: str
    kind: str  # "numeric" | "categorical"
    unit: str | None = None
    allowed: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Band:
    """One interval of a numeric input; ``max`` is inclusive, None means open-ended."""

    label: str
    max: float | None


@dataclass(frozen=True)
class MappingInput:
    question_id: str
    bands: tuple[Band, ...] | None = None


@dataclass(frozen=True)
class DerivedFact:
    """Either a mapping fact (categorical, derived from answers) or an
    inferred fact (carries a certainty value accumulated from rules)."""

    id: str
    kind: str  # "mapping" | "inferred"
    inputs: tuple[MappingInput, ...] = ()
    mapping: tuple[tuple[tuple[str, ...], str], ...] = ()
    description: str | None = None

    def lookup(self, key: tuple[str, ...]) -> str | None:
        for when, value in self.mapping:
            if when == key:
                return value
        return None


@dataclass(frozen=True)
class Premise:
    """Reference to evidence a rule needs: a symptom or an inferred fact."""

    symptom: str | None = None
    fact: str | None = None
    min_cf: float | None = None


@dataclass(frozen=True)
class Guard:
    """Predicate over a profile answer (or mapping-fact value)."""

    question_id: str
    op: str
    value: Any = None
    min: float | None = None
    max: float | None = None


@dataclass(frozen=True)
class Rule:
    id: str
    premises: tuple[Premise, ...]
    guards: tuple[Guard, ...]
    antecedent_cf: float
    conclusion_kind: str  # "anomaly" | "fact"
    conclusion_id: str


@dataclass(frozen=True)
class CutoffEntry:
    anomaly_id: str
    tnd: float
    tpd: float


@dataclass(frozen=True)
class Metadata:
    version: str
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class KnowledgeBase:
    anomalies: tuple[Anomaly, ...]
    symptoms: tuple[Symptom, ...]
    profile_questions: tuple[ProfileQuestion, ...]
    derived_facts: tuple[DerivedFact, ...]
    rules: tuple[Rule, ...]
    cutoffs: tuple[CutoffEntry, ...]
    metadata: Metadata
    _by_id: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        index = {
            "anomaly": {a.id: a for a in self.anomalies},
            "symptom": {s.id: s for s in self.symptoms},
            "profile": {q.id: q for q in self.profile_questions},
            "fact": {f.id: f for f in self.derived_facts},
            "rule": {r.id: r for r in self.rules},
            "cutoff": {c.anomaly_id: c for c in self.cutoffs},
            "symptom_order": {s.id: i for i, s in enumerate(self.symptoms)},
        }
        object.__setattr__(self, "_by_id", index)

    def anomaly(self, anomaly_id: str) -> Anomaly:
        try:
            return self._by_id["anomaly"][anomaly_id]
        except KeyError:
            raise UnknownAnomalyError(f"unknown anomaly {anomaly_id!r}") from None

    def symptom(self, symptom_id: str) -> Symptom:
        return self._by_id["symptom"][symptom_id]

    def profile_question(self, question_id: str) -> ProfileQuestion:
        return self._by_id["profile"][question_id]

    def derived_fact(self, fact_id: str) -> DerivedFact:
        return self._by_id["fact"][fact_id]

    def rule(self, rule_id: str) -> Rule:
        return self._by_id["rule"][rule_id]

    def cutoff(self, anomaly_id: str) -> CutoffEntry:
        self.anomaly(anomaly_id)
        return self._by_id["cutoff"][anomaly_id]

    def symptom_order(self, symptom_id: str) -> int:
        return self._by_id["symptom_order"][symptom_id]

    def has_anomaly(self, some_id: str) -> bool:
        return some_id in self._by_id["anomaly"]

    def has_symptom(self, some_id: str) -> bool:
        return some_id in self._by_id["symptom"]

    def has_profile_question(self, some_id: str) -> bool:
        return some_id in self._by_id["profile"]

    def has_derived_fact(self, some_id: str) -> bool:
        return some_id in self._by_id["fact"]


def goal_rules(kb: KnowledgeBase, anomaly_id: str) -> tuple[Rule, ...]:
    """Rules concluding the given anomaly, in declaration order."""
    kb.anomaly(anomaly_id)
    return tuple(
        r for r in kb.rules if r.conclusion_kind == "anomaly" and r.conclusion_id == anomaly_id
    )


def reachable_rules(kb: KnowledgeBase, anomaly_id: str) -> tuple[Rule, ...]:
    """All rules that can contribute to the goal, directly or through
    inferred facts, in declaration order."""
    kb.anomaly(anomaly_id)
    wanted_facts: set[str] = set()
    chosen: dict[str, Rule] = {}
    changed = True
    while changed:
        changed = False
        for rule in kb.rules:
            if rule.id in chosen:
                continue
            concludes_goal = (
                rule.conclusion_kind == "anomaly" and rule.conclusion_id == anomaly_id
            )
            concludes_needed_fact = (
                rule.conclusion_kind == "fact" and rule.conclusion_id in wanted_facts
            )
            if concludes_goal or concludes_needed_fact:
                chosen[rule.id] = rule
                for premise in rule.premises:
                    if premise.fact is not None and premise.fact not in wanted_facts:
                        wanted_facts.add(premise.fact)
                changed = True
    return tuple(r for r in kb.rules if r.id in chosen)


def goal_symptoms(kb: KnowledgeBase, anomaly_id: str) -> tuple[Symptom, ...]:
    """Symptoms referenced by any goal-reachable rule, in declaration order."""
    referenced = {
        premise.symptom
        for rule in reachable_rules(kb, anomaly_id)
        for premise in rule.premises
        if premise.symptom is not None
    }
    return tuple(s for s in kb.symptoms if s.id in referenced)


# ---------------------------------------------------------------------------
# Parsing


def _expect(condition: bool, error: type[KbError], message: str) -> None:
    if not condition:
        raise error(message)


def _req(obj: Mapping[str, Any], key: str, where: str) -> Any:
    _expect(isinstance(obj, Mapping), KbStructureError, f"{where} must be an object")
    if key not in obj:
        raise KbStructureError(f"{where} is missing required field {key!r}")
    return obj[key]


def _req_str(obj: Mapping[str, Any], key: str, where: str) -> str:
    value = _req(obj, key, where)
    _expect(
        isinstance(value, str) and value != "",
        KbStructureError,
        f"{where}.{key} must be a non-empty string",
    )
    return value


def _req_number(obj: Mapping[str, Any], key: str, where: str, low: float, high: float) -> float:
    value = _req(obj, key, where)
    _expect(
        isinstance(value, (int, float)) and not isinstance(value, bool),
        KbStructureError,
        f"{where}.{key} must be a number",
    )
    _expect(
        low <= float(value) <= high,
        KbStructureError,
        f"{where}.{key} must lie in [{low}, {high}], got {value!r}",
    )
    return quantize6(float(value))


def _req_id(obj: Mapping[str, Any], key: str, where: str) -> str:
    value = _req_str(obj, key, where)
    _expect(
        ID_PATTERN.match(value) is not None,
        KbStructureError,
        f"{where}.{key} must match [a-z][a-z0-9_]*, got {value!r}",
    )
    return value


def _req_list(obj: Mapping[str, Any], key: str, where: str) -> list:
    value = _req(obj, key, where)
    _expect(isinstance(value, list), KbStructureError, f"{where}.{key} must be an array")
    return value


def _no_unknown_keys(obj: Mapping[str, Any], known: Iterable[str], where: str) -> None:
    unknown = set(obj) - set(known)
    _expect(
        not unknown,
        KbStructureError,
        f"{where} has unknown field(s): {', '.join(sorted(unknown))}",
    )


def _parse_profile_question(raw: Any, where: str) -> ProfileQuestion:
    _expect(isinstance(raw, Mapping), KbStructureError, f"{where} must be an object")
    kind = _req_str(raw, "kind", where)
    _expect(
        kind in ("numeric", "categorical"),
        KbStructureError,
        f"{where}.kind must be 'numeric' or 'categorical', got {kind!r}",
    )
    qid = _req_id(raw, "id", where)
    prompt = _req_str(raw, "prompt", where)
    if kind == "numeric":
        _no_unknown_keys(raw, ("id", "prompt", "kind", "unit"), where)
        unit = raw.get("unit")
        if unit is not None:
            _expect(isinstance(unit, str) and unit != "", KbStructureError, f"{where}.unit must be a non-empty string")
        return ProfileQuestion(id=qid, prompt=prompt, kind=kind, unit=unit)
    _no_unknown_keys(raw, ("id", "prompt", "kind", "allowed"), where)
    allowed_raw = _req_list(raw, "allowed", where)
    _expect(
        len(allowed_raw) >= 2,
        KbInvariantError,
        f"{where}: categorical question {qid!r} needs at least 2 allowed answers",
    )
    for v in allowed_raw:
        _expect(isinstance(v, str) and v != "", KbStructureError, f"{where}.allowed entries must be non-empty strings")
    _expect(
        len(set(allowed_raw)) == len(allowed_raw),
        KbInvariantError,
        f"{where}: allowed answers of {qid!r} must be unique",
    )
    return ProfileQuestion(id=qid, prompt=prompt, kind=kind, allowed=tuple(allowed_raw))


def _parse_derived_fact(raw: Any, where: str) -> DerivedFact:
    _expect(isinstance(raw, Mapping), KbStructureError, f"{where} must be an object")
    fid = _req_id(raw, "id", where)
    kind = _req_str(raw, "kind", where)
    _expect(
        kind in ("mapping", "inferred"),
        KbStructureError,
        f"{where}.kind must be 'mapping' or 'inferred', got {kind!r}",
    )
    description = raw.get("description")
    if description is not None:
        _expect(isinstance(description, str), KbStructureError, f"{where}.description must be a string")
    if kind == "inferred":
        _no_unknown_keys(raw, ("id", "kind", "description"), where)
        return DerivedFact(id=fid, kind=kind, description=description)
    _no_unknown_keys(raw, ("id", "kind", "description", "inputs", "mapping"), where)
    inputs_raw = _req_list(raw, "inputs", where)
    _expect(len(inputs_raw) >= 1, KbInvariantError, f"{where}: mapping fact {fid!r} needs at least one input")
    inputs = []
    for i, entry in enumerate(inputs_raw):
        iw = f"{where}.inputs[{i}]"
        _expect(isinstance(entry, Mapping), KbStructureError, f"{iw} must be an object")
        _no_unknown_keys(entry, ("question", "bands"), iw)
        qid = _req_id(entry, "question", iw)
        bands = None
        if "bands" in entry:
            bands_raw = _req_list(entry, "bands", iw)
            _expect(len(bands_raw) >= 2, KbInvariantError, f"{iw}: banding needs at least 2 bands")
            parsed = []
            for j, band in enumerate(bands_raw):
                bw = f"{iw}.bands[{j}]"
                _expect(isinstance(band, Mapping), KbStructureError, f"{bw} must be an object")
                _no_unknown_keys(band, ("label", "max"), bw)
                label = _req_str(band, "label", bw)
                is_last = j == len(bands_raw) - 1
                if is_last:
                    _expect(
                        band.get("max") is None,
                        KbInvariantError,
                        f"{bw}: the final band must be open-ended (no max)",
                    )
                    parsed.append(Band(label=label, max=None))
                else:
                    parsed.append(Band(label=label, max=_req_number(band, "max", bw, -1e12, 1e12)))
            labels = [b.label for b in parsed]
            _expect(
                len(set(labels)) == len(labels),
                KbInvariantError,
                f"{iw}: band labels must be unique",
            )
            maxes = [b.max for b in parsed if b.max is not None]
            _expect(
                all(a < b for a, b in zip(maxes, maxes[1:])),
                KbInvariantError,
                f"{iw}: band maxima must be strictly increasing",
            )
            bands = tuple(parsed)
        inputs.append(MappingInput(question_id=qid, bands=bands))
    mapping_raw = _req_list(raw, "mapping", where)
    mapping = []
    for i, entry in enumerate(mapping_raw):
        mw = f"{where}.mapping[{i}]"
        _expect(isinstance(entry, Mapping), KbStructureError, f"{mw} must be an object")
        _no_unknown_keys(entry, ("when", "value"), mw)
        when_raw = _req_list(entry, "when", mw)
        _expect(
            len(when_raw) == len(inputs),
            KbInvariantError,
            f"{mw}: 'when' must list one label per input ({len(inputs)})",
        )
        for v in when_raw:
            _expect(isinstance(v, str) and v != "", KbStructureError, f"{mw}.when entries must be non-empty strings")
        value = _req_str(entry, "value", mw)
        mapping.append((tuple(when_raw), value))
    return DerivedFact(
        id=fid, kind=kind, inputs=tuple(inputs), mapping=tuple(mapping), description=description
    )


def _parse_rule(raw: Any, where: str) -> Rule:
    _expect(isinstance(raw, Mapping), KbStructureError, f"{where} must be an object")
    _no_unknown_keys(raw, ("id", "premises", "guards", "antecedent_cf", "conclusion"), where)
    rid = _req_id(raw, "id", where)
    antecedent = _req_number(raw, "antecedent_cf", where, 0.0, 100.0)
    premises_raw = raw.get("premises", [])
    _expect(isinstance(premises_raw, list), KbStructureError, f"{where}.premises must be an array")
    premises = []
    for i, entry in enumerate(premises_raw):
        pw = f"{where}.premises[{i}]"
        _expect(isinstance(entry, Mapping), KbStructureError, f"{pw} must be an object")
        has_symptom = "symptom" in entry
        has_fact = "fact" in entry
        _expect(
            has_symptom != has_fact,
            KbStructureError,
            f"{pw} must reference exactly one of 'symptom' or 'fact'",
        )
        if has_symptom:
            _no_unknown_keys(entry, ("symptom",), pw)
            premises.append(Premise(symptom=_req_id(entry, "symptom", pw)))
        else:
            _no_unknown_keys(entry, ("fact", "min_cf"), pw)
            min_cf = None
            if "min_cf" in entry:
                min_cf = _req_number(entry, "min_cf", pw, 0.0, 100.0)
            premises.append(Premise(fact=_req_id(entry, "fact", pw), min_cf=min_cf))
    guards_raw = raw.get("guards", [])
    _expect(isinstance(guards_raw, list), KbStructureError, f"{where}.guards must be an array")
    guards = []
    for i, entry in enumerate(guards_raw):
        gw = f"{where}.guards[{i}]"
        _expect(isinstance(entry, Mapping), KbStructureError, f"{gw} must be an object")
        qid = _req_id(entry, "question", gw)
        op = _req_str(entry, "op", gw)
        _expect(op in GUARD_OPS, KbStructureError, f"{gw}.op must be one of {GUARD_OPS}, got {op!r}")
        if op == "between":
            _no_unknown_keys(entry, ("question", "op", "min", "max"), gw)
            lo = _req_number(entry, "min", gw, -1e12, 1e12)
            hi = _req_number(entry, "max", gw, -1e12, 1e12)
            _expect(lo <= hi, KbInvariantError, f"{gw}: min must not exceed max")
            guards.append(Guard(question_id=qid, op=op, min=lo, max=hi))
        else:
            _no_unknown_keys(entry, ("question", "op", "value"), gw)
            value = _req(entry, "value", gw)
            if op in ("lt", "le", "gt", "ge"):
                _expect(
                    isinstance(value, (int, float)) and not isinstance(value, bool),
                    KbStructureError,
                    f"{gw}.value must be a number for op {op!r}",
                )
                value = quantize6(float(value))
            else:
                _expect(
                    isinstance(value, str)
                    or (isinstance(value, (int, float)) and not isinstance(value, bool)),
                    KbStructureError,
                    f"{gw}.value must be a string or number",
                )
                if isinstance(value, (int, float)):
                    value = quantize6(float(value))
            guards.append(Guard(question_id=qid, op=op, value=value))
    _expect(
        len(premises) >= 1 or len(guards) >= 1,
        KbInvariantError,
        f"{where}: rule {rid!r} needs at least one premise or one guard",
    )
    conclusion = _req(raw, "conclusion", where)
    _expect(isinstance(conclusion, Mapping), KbStructureError, f"{where}.conclusion must be an object")
    has_anomaly = "anomaly" in conclusion
    has_fact = "fact" in conclusion
    _expect(
        has_anomaly != has_fact,
        KbStructureError,
        f"{where}.conclusion must reference exactly one of 'anomaly' or 'fact'",
    )
    if has_anomaly:
        _no_unknown_keys(conclusion, ("anomaly",), f"{where}.conclusion")
        kind, cid = "anomaly", _req_id(conclusion, "anomaly", f"{where}.conclusion")
    else:
        _no_unknown_keys(conclusion, ("fact",), f"{where}.conclusion")
        kind, cid = "fact", _req_id(conclusion, "fact", f"{where}.conclusion")
    return Rule(
        id=rid,
        premises=tuple(premises),
        guards=tuple(guards),
        antecedent_cf=antecedent,
        conclusion_kind=kind,
        conclusion_id=cid,
    )


def parse_kb_document(doc: Any) -> KnowledgeBase:
    """Build and fully validate a KnowledgeBase from a decoded JSON document."""
    _expect(isinstance(doc, Mapping), KbStructureError, "knowledge base must be a JSON object")
    _no_unknown_keys(
        doc,
        ("anomalies", "symptoms", "profile_questions", "derived_facts", "rules", "cutoffs", "metadata"),
        "knowledge base",
    )

    anomalies = []
    for i, raw in enumerate(_req_list(doc, "anomalies", "knowledge base")):
        where = f"anomalies[{i}]"
        _expect(isinstance(raw, Mapping), KbStructureError, f"{where} must be an object")
        _no_unknown_keys(raw, ("id", "name"), where)
        anomalies.append(Anomaly(id=_req_id(raw, "id", where), name=_req_str(raw, "name", where)))
    _expect(len(anomalies) >= 1, KbInvariantError, "knowledge base declares no anomalies")

    symptoms = []
    for i, raw in enumerate(_req_list(doc, "symptoms", "knowledge base")):
        where = f"symptoms[{i}]"
        _expect(isinstance(raw, Mapping), KbStructureError, f"{where} must be an object")
        _no_unknown_keys(
            raw, ("id", "prompt", "anomaly", "class", "certainty_factor", "certainty_effect"), where
        )
        class_label = _req_str(raw, "class", where)
        _expect(
            CLASS_PATTERN.match(class_label) is not None,
            KbStructureError,
            f"{where}.class must be a single capital letter, got {class_label!r}",
        )
        symptoms.append(
            Symptom(
                id=_req_id(raw, "id", where),
                prompt=_req_str(raw, "prompt", where),
                anomaly_id=_req_id(raw, "anomaly", where),
                class_label=class_label,
                certainty_factor=_req_number(raw, "certainty_factor", where, 0.0, 100.0),
                certainty_effect=_req_number(raw, "certainty_effect", where, 0.0, 1.0),
            )
        )

    profile_questions = [
        _parse_profile_question(raw, f"profile_questions[{i}]")
        for i, raw in enumerate(_req_list(doc, "profile_questions", "knowledge base"))
    ]

    derived_facts = [
        _parse_derived_fact(raw, f"derived_facts[{i}]")
        for i, raw in enumerate(_req_list(doc, "derived_facts", "knowledge base"))
    ]

    rules = [
        _parse_rule(raw, f"rules[{i}]")
        for i, raw in enumerate(_req_list(doc, "rules", "knowledge base"))
    ]

    cutoffs = []
    for i, raw in enumerate(_req_list(doc, "cutoffs", "knowledge base")):
        where = f"cutoffs[{i}]"
        _expect(isinstance(raw, Mapping), KbStructureError, f"{where} must be an object")
        _no_unknown_keys(raw, ("anomaly", "tnd", "tpd"), where)
        entry = CutoffEntry(
            anomaly_id=_req_id(raw, "anomaly", where),
            tnd=_req_number(raw, "tnd", where, 0.0, 1.0),
            tpd=_req_number(raw, "tpd", where, 0.0, 1.0),
        )
        _expect(
            entry.tnd < entry.tpd,
            KbInvariantError,
            f"{where}: cut-off for {entry.anomaly_id!r} must have tnd < tpd",
        )
        cutoffs.append(entry)

    meta_raw = _req(doc, "metadata", "knowledge base")
    _expect(isinstance(meta_raw, Mapping), KbStructureError, "metadata must be an object")
    _no_unknown_keys(meta_raw, ("version", "notes"), "metadata")
    notes_raw = meta_raw.get("notes", [])
    _expect(isinstance(notes_raw, list), KbStructureError, "metadata.notes must be an array")
    for note in notes_raw:
        _expect(isinstance(note, str), KbStructureError, "metadata.notes entries must be strings")
    metadata = Metadata(version=_req_str(meta_raw, "version", "metadata"), notes=tuple(notes_raw))

    kb = KnowledgeBase(
        anomalies=tuple(anomalies),
        symptoms=tuple(symptoms),
        profile_questions=tuple(profile_questions),
        derived_facts=tuple(derived_facts),
        rules=tuple(rules),
        cutoffs=tuple(cutoffs),
        metadata=metadata,
    )
    _validate_semantics(kb)
    return kb


def _validate_semantics(kb: KnowledgeBase) -> None:
    # Unique identifiers, with symptoms / facts / profile questions / anomalies
    # sharing one namespace so references are unambiguous.
    seen: dict[str, str] = {}
    for section, ids in (
        ("anomalies", [a.id for a in kb.anomalies]),
        ("symptoms", [s.id for s in kb.symptoms]),
        ("profile_questions", [q.id for q in kb.profile_questions]),
        ("derived_facts", [f.id for f in kb.derived_facts]),
    ):
        for some_id in ids:
            _expect(
                some_id not in seen,
                KbInvariantError,
                f"duplicate identifier {some_id!r} ({seen.get(some_id)} vs {section})",
            )
            seen[some_id] = section
    rule_ids = [r.id for r in kb.rules]
    _expect(
        len(set(rule_ids)) == len(rule_ids),
        KbInvariantError,
        "rule identifiers must be unique",
    )

    mapping_facts = {f.id for f in kb.derived_facts if f.kind == "mapping"}
    inferred_facts = {f.id for f in kb.derived_facts if f.kind == "inferred"}
    anomaly_ids = {a.id for a in kb.anomalies}

    for s in kb.symptoms:
        _expect(
            s.anomaly_id in anomaly_ids,
            KbReferenceError,
            f"symptom {s.id!r} references unknown anomaly {s.anomaly_id!r}",
        )

    for f in kb.derived_facts:
        if f.kind != "mapping":
            continue
        domains = []
        for inp in f.inputs:
            _expect(
                kb.has_profile_question(inp.question_id),
                KbReferenceError,
                f"mapping fact {f.id!r} references unknown profile question {inp.question_id!r}",
            )
            question = kb.profile_question(inp.question_id)
            if question.kind == "numeric":
                _expect(
                    inp.bands is not None,
                    KbInvariantError,
                    f"mapping fact {f.id!r}: numeric input {inp.question_id!r} needs bands",
                )
                domains.append(tuple(b.label for b in inp.bands))
            else:
                _expect(
                    inp.bands is None,
                    KbInvariantError,
                    f"mapping fact {f.id!r}: categorical input {inp.question_id!r} must not have bands",
                )
                domains.append(question.allowed)
        # Totality: every combination of the input domains appears exactly once.
        expected = 1
        for d in domains:
            expected *= len(d)
        keys = [when for when, _ in f.mapping]
        _expect(
            len(set(keys)) == len(keys),
            KbInvariantError,
            f"mapping fact {f.id!r} has duplicate 'when' entries",
        )
        valid = set()
        _product_fill(domains, (), valid)
        for when in keys:
            _expect(
                when in valid,
                KbInvariantError,
                f"mapping fact {f.id!r}: 'when' {list(when)!r} is outside the input domain",
            )
        missing = valid - set(keys)
        if missing:
            raise KbInvariantError(
                f"mapping fact {f.id!r} is not total: missing {sorted(missing)[0]!r}"
                f" ({len(missing)} of {expected} combinations absent)"
            )

    for r in kb.rules:
        for p in r.premises:
            if p.symptom is not None:
                _expect(
                    kb.has_symptom(p.symptom),
                    KbReferenceError,
                    f"rule {r.id!r} references unknown symptom {p.symptom!r}",
                )
            else:
                _expect(
                    p.fact in inferred_facts,
                    KbReferenceError,
                    f"rule {r.id!r} premise references {p.fact!r}, which is not an inferred fact",
                )
        for g in r.guards:
            known = kb.has_profile_question(g.question_id) or g.question_id in mapping_facts
            _expect(
                known,
                KbReferenceError,
                f"rule {r.id!r} guard references unknown question {g.question_id!r}",
            )
            if g.op in ("lt", "le", "gt", "ge", "between"):
                _expect(
                    kb.has_profile_question(g.question_id)
                    and kb.profile_question(g.question_id).kind == "numeric",
                    KbInvariantError,
                    f"rule {r.id!r} guard uses numeric op {g.op!r} on a non-numeric question",
                )
        if r.conclusion_kind == "anomaly":
            _expect(
                r.conclusion_id in anomaly_ids,
                KbReferenceError,
                f"rule {r.id!r} concludes unknown anomaly {r.conclusion_id!r}",
            )
        else:
            _expect(
                r.conclusion_id in inferred_facts,
                KbReferenceError,
                f"rule {r.id!r} concludes {r.conclusion_id!r}, which is not an inferred fact",
            )

    # Per anomaly: one certainty effect per class, and the class effects
    # must account for all of the anomaly's evidence.
    for a in kb.anomalies:
        class_effects: dict[str, float] = {}
        for s in kb.symptoms:
            if s.anomaly_id != a.id:
                continue
            if s.class_label in class_effects:
                _expect(
                    abs(class_effects[s.class_label] - s.certainty_effect) <= 1e-9,
                    KbInvariantError,
                    f"symptom {s.id!r} disagrees with class {s.class_label!r}"
                    f" on its certainty effect",
                )
            else:
                class_effects[s.class_label] = s.certainty_effect
        if class_effects:
            total = sum(class_effects.values())
            _expect(
                abs(total - 1.0) <= CLASS_EFFECT_SUM_TOLERANCE,
                KbInvariantError,
                f"anomaly {a.id!r}: class certainty effects must sum to 1"
                f" (within {CLASS_EFFECT_SUM_TOLERANCE}), got {total:.6f}",
            )

    # Exactly one cut-off entry per anomaly.
    cutoff_ids = [c.anomaly_id for c in kb.cutoffs]
    _expect(
        len(set(cutoff_ids)) == len(cutoff_ids),
        KbInvariantError,
        "duplicate cut-off entries",
    )
    for c in kb.cutoffs:
        _expect(
            c.anomaly_id in anomaly_ids,
            KbReferenceError,
            f"cut-off references unknown anomaly {c.anomaly_id!r}",
        )
    for a in kb.anomalies:
        _expect(
            a.id in set(cutoff_ids),
            KbInvariantError,
            f"anomaly {a.id!r} has no cut-off entry",
        )

    _check_fact_graph_acyclic(kb)


def _product_fill(domains: Sequence[Sequence[str]], prefix: tuple[str, ...], out: set) -> None:
    if not domains:
        out.add(prefix)
        return
    for label in domains[0]:
        _product_fill(domains[1:], prefix + (label,), out)


def _check_fact_graph_acyclic(kb: KnowledgeBase) -> None:
    """Inferred facts must form a DAG through the rules that conclude them."""
    edges: dict[str, set[str]] = {}
    for r in kb.rules:
        if r.conclusion_kind != "fact":
            continue
        for p in r.premises:
            if p.fact is not None:
                edges.setdefault(p.fact, set()).add(r.conclusion_id)

    WHITE, GREY, BLACK = 0, 1, 2
    colour = {f.id: WHITE for f in kb.derived_facts}
    stack_path: list[str] = []

    def visit(node: str) -> None:
        colour[node] = GREY
        stack_path.append(node)
        for nxt in sorted(edges.get(node, ())):
            if colour[nxt] == GREY:
                cycle = stack_path[stack_path.index(nxt):] + [nxt]
                raise KbInvariantError(
                    "rule dependency cycle through facts: " + " -> ".join(cycle)
                )
            if colour[nxt] == WHITE:
                visit(nxt)
        stack_path.pop()
        colour[node] = BLACK

    for fact in colour:
        if colour[fact] == WHITE:
            visit(fact)


def parse_kb(text: str) -> KnowledgeBase:
    """Parse and validate a knowledge-base JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise KbSyntaxError(e.msg, e.lineno, e.colno) from None
    return parse_kb_document(doc)


def load_kb(path) -> KnowledgeBase:
    with open(path, encoding="utf-8") as fh:
        return parse_kb(fh.read())


# ---------------------------------------------------------------------------
# Canonical serialisation


def kb_to_document(kb: KnowledgeBase) -> dict:
    """The plain-data form of a knowledge base (canonical field layout)."""
    doc: dict[str, Any] = {
        "anomalies": [{"id": a.id, "name": a.name} for a in kb.anomalies],
        "symptoms": [
            {
                "id": s.id,
                "prompt": s.prompt,
                "anomaly": s.anomaly_id,
                "class": s.class_label,
                "certainty_factor": s.certainty_factor,
                "certainty_effect": s.certainty_effect,
            }
            for s in kb.symptoms
        ],
        "profile_questions": [],
        "derived_facts": [],
        "rules": [],
        "cutoffs": [
            {"anomaly": c.anomaly_id, "tnd": c.tnd, "tpd": c.tpd} for c in kb.cutoffs
        ],
        "metadata": {"version": kb.metadata.version, "notes": list(kb.metadata.notes)},
    }
    for q in kb.profile_questions:
        entry: dict[str, Any] = {"id": q.id, "prompt": q.prompt, "kind": q.kind}
        if q.kind == "numeric":
            if q.unit is not None:
                entry["unit"] = q.unit
        else:
            entry["allowed"] = list(q.allowed)
        doc["profile_questions"].append(entry)
    for f in kb.derived_facts:
        entry = {"id": f.id, "kind": f.kind}
        if f.description is not None:
            entry["description"] = f.description
        if f.kind == "mapping":
            entry["inputs"] = [
                {"question": i.question_id}
                if i.bands is None
                else {
                    "question": i.question_id,
                    "bands": [
                        {"label": b.label} if b.max is None else {"label": b.label, "max": b.max}
                        for b in i.bands
                    ],
                }
                for i in f.inputs
            ]
            entry["mapping"] = [
                {"when": list(when), "value": value} for when, value in f.mapping
            ]
        doc["derived_facts"].append(entry)
    for r in kb.rules:
        premises = []
        for p in r.premises:
            if p.symptom is not None:
                premises.append({"symptom": p.symptom})
            elif p.min_cf is not None:
                premises.append({"fact": p.fact, "min_cf": p.min_cf})
            else:
                premises.append({"fact": p.fact})
        guards = []
        for g in r.guards:
            if g.op == "between":
                guards.append({"question": g.question_id, "op": g.op, "min": g.min, "max": g.max})
            else:
                guards.append({"question": g.question_id, "op": g.op, "value": g.value})
        conclusion = (
            {"anomaly": r.conclusion_id}
            if r.conclusion_kind == "anomaly"
            else {"fact": r.conclusion_id}
        )
        doc["rules"].append(
            {
                "id": r.id,
                "premises": premises,
                "guards": guards,
                "antecedent_cf": r.antecedent_cf,
                "conclusion": conclusion,
            }
        )
    return doc


def _emit(value: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(value, Mapping):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(value)
        for i, key in enumerate(keys):
            out.append(f'{pad}  {json.dumps(key, ensure_ascii=False)}: ')
            _emit(value[key], indent + 1, out)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, list):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(pad + "  ")
            _emit(item, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(value, bool) or value is None:
        out.append(json.dumps(value))
    elif isinstance(value, float):
        out.append(f"{value:.6f}")
    elif isinstance(value, int):
        out.append(str(value))
    else:
        out.append(json.dumps(value, ensure_ascii=False))


def serialize_kb(kb: KnowledgeBase) -> str:
    """Canonical text form: sorted keys, six-decimal numbers, LF endings."""
    out: list[str] = []
    _emit(kb_to_document(kb), 0, out)
    out.append("\n")
    return "".join(out)


def save_kb(kb: KnowledgeBase, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_kb(kb))
