"""Event-sourced diagnosis sessions.

A session interviews the user about one goal anomaly.  Profile questions are
asked first, in declaration order; they feed guards and mapping facts but
never count as evidence.  Certainty questions are ordered by a *certainty
memory*: each goal-reachable symptom starts at its class threshold (the
certainty effect on the percent scale) and the highest-valued unanswered
symptom is asked next.  An answer at or above the current value satisfies
the premise and replaces the value; a lower answer leaves the value alone
and the premise unsatisfied.  Either way the symptom never re-enters the
queue.

Every change is an event (``session_started``, ``profile_answered``,
``symptom_answered``, ``undone``, ``stopped``).  Session state is a pure
function of the knowledge base, the goal and the event list: replaying the
log reconstructs the state, and undo is itself an event that masks the most
recent answer on replay.
"""

from __future__ import annotations

import enum
import uuid
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .algebra import (
    combine_many,
    conjoin_premises,
    display_percent,
    effect_to_percent,
    mean_percent,
    rule_cf,
)
from .kb import (
    DerivedFact,
    KnowledgeBase,
    ProfileQuestion,
    Rule,
    Symptom,
    goal_symptoms,
    reachable_rules,
)

EVENT_SCHEMA_VERSION = 1

ANSWER_EVENT_TYPES = ("profile_answered", "symptom_answered")


class SessionError(Exception):
    """Base class for everything wrong with a session interaction."""


class UnknownQuestionError(SessionError):
    """The question id is not part of this session's interview."""


class AlreadyAnsweredError(SessionError):
    """The question was already answered in this session."""


class AnswerValueError(SessionError):
    """The answer has the wrong type or falls outside its allowed range."""


class NothingToUndoError(SessionError):
    """Undo was requested but no answer remains to take back."""


class SessionStoppedError(SessionError):
    """The session was finalised; it accepts no further changes."""


class ScriptUnderrunError(SessionError):
    """An answer script had no entry for a question the engine asked."""


class EventError(SessionError):
    """An event is malformed or arrives in an impossible position."""


class Verdict(str, enum.Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"
    NEEDS_EXAMINATION = "NEEDS_EXAMINATION"


def classify_verdict(degree: float, tnd: float, tpd: float) -> Verdict:
    """Cut-off bands, boundaries inclusive: at or above tpd is positive, at
    or below tnd is negative, anything between needs a physical examination."""
    if not 0.0 <= degree <= 1.0:
        raise AnswerValueError(f"certainty degree must lie in [0, 1], got {degree!r}")
    if degree >= tpd:
        return Verdict.POSITIVE
    if degree <= tnd:
        return Verdict.NEGATIVE
    return Verdict.NEEDS_EXAMINATION


@dataclass(frozen=True)
class Question:
    """What the interview asks next."""

    id: str
    prompt: str
    kind: str  # "numeric" | "categorical" | "certainty"
    unit: str | None = None
    allowed: tuple[str, ...] | None = None


@dataclass(frozen=True)
class MemoryEntry:
    symptom_id: str
    value: float
    answered: bool


@dataclass(frozen=True)
class Diagnosis:
    anomaly_id: str
    certainty_degree: float | None
    display_percent: int | None
    verdict: Verdict
    no_evidence: bool
    fired_rules: tuple[tuple[str, float], ...]
    stopped_early: bool = False


@dataclass(frozen=True)
class SubmitResult:
    question_id: str
    value: Any
    satisfied: bool | None  # None for profile answers
    newly_fired: tuple[tuple[str, float], ...]


def new_event(event_type: str, **payload: Any) -> dict:
    event = {"v": EVENT_SCHEMA_VERSION, "id": uuid.uuid4().hex, "type": event_type}
    event.update(payload)
    return event


def check_event_shape(event: Any) -> dict:
    """Structural validation shared by the engine and the session store."""
    if not isinstance(event, Mapping):
        raise EventError("event must be an object")
    if event.get("v") != EVENT_SCHEMA_VERSION:
        raise EventError(f"unsupported event schema version {event.get('v')!r}")
    event_id = event.get("id")
    if not isinstance(event_id, str) or not event_id:
        raise EventError("event is missing its id")
    event_type = event.get("type")
    expected_keys = {
        "session_started": {"v", "id", "type", "anomaly"},
        "profile_answered": {"v", "id", "type", "question_id", "value"},
        "symptom_answered": {"v", "id", "type", "question_id", "value"},
        "undone": {"v", "id", "type"},
        "stopped": {"v", "id", "type", "early"},
    }.get(event_type)
    if expected_keys is None:
        raise EventError(f"unknown event type {event_type!r}")
    if set(event) != expected_keys:
        raise EventError(f"event {event_type!r} has wrong fields: {sorted(event)}")
    return dict(event)


def effective_answer_events(events: Sequence[Mapping]) -> list[dict]:
    """Answer events that survive the undo events in the log."""
    live: list[dict] = []
    for event in events:
        if event["type"] in ANSWER_EVENT_TYPES:
            live.append(dict(event))
        elif event["type"] == "undone":
            if not live:
                raise NothingToUndoError("no answer left to undo")
            live.pop()
    return live


class Session:
    """One diagnosis interview against a single goal anomaly."""

    def __init__(self, kb: KnowledgeBase, anomaly_id: str):
        kb.anomaly(anomaly_id)  # raises UnknownAnomalyError
        self.kb = kb
        self.anomaly_id = anomaly_id
        self.events: list[dict] = []
        self._rules: tuple[Rule, ...] = reachable_rules(kb, anomaly_id)
        self._symptoms: tuple[Symptom, ...] = goal_symptoms(kb, anomaly_id)
        self._symptom_ids = {s.id for s in self._symptoms}
        self._reset_state()

    # -- construction ------------------------------------------------------

    @classmethod
    def start(
        cls,
        kb: KnowledgeBase,
        anomaly_id: str,
        profile_answers: Mapping[str, Any] | None = None,
    ) -> "Session":
        session = cls(kb, anomaly_id)
        session._append(new_event("session_started", anomaly=anomaly_id))
        if profile_answers:
            for question_id, value in profile_answers.items():
                session.submit_answer(question_id, value)
        return session

    @classmethod
    def replay(cls, kb: KnowledgeBase, events: Iterable[Mapping]) -> "Session":
        """Reconstruct a session from its event log (the pure-state view)."""
        events = [check_event_shape(e) for e in events]
        if not events or events[0]["type"] != "session_started":
            raise EventError("event log must begin with session_started")
        session = cls(kb, events[0]["anomaly"])
        for event in events:
            session.apply_event(event)
        return session

    def _reset_state(self) -> None:
        self.profile_answers: dict[str, Any] = {}
        self.derived_values: dict[str, str] = {}
        self.answered: dict[str, int] = {}
        self.satisfied: set[str] = set()
        self._memory: dict[str, float] = {
            s.id: effect_to_percent(s.certainty_effect) for s in self._symptoms
        }
        self.fired_ids: list[str] = []
        self.stopped = False
        self.stopped_early = False
        self._started = False

    # -- event plumbing ----------------------------------------------------

    def _append(self, event: dict) -> None:
        self.events.append(event)
        self._apply(event)

    def apply_event(self, event: Mapping) -> None:
        """Validate and apply one event arriving from a log."""
        event = check_event_shape(event)
        self.events.append(event)
        self._apply(event)

    def _apply(self, event: Mapping) -> None:
        event_type = event["type"]
        if event_type == "session_started":
            if self._started:
                raise EventError("session_started must be the first event")
            if event["anomaly"] != self.anomaly_id:
                raise EventError("session_started names a different anomaly")
            self._started = True
            return
        if not self._started:
            raise EventError("event log must begin with session_started")
        if event_type == "profile_answered":
            self._require_active()
            self._apply_profile_answer(event["question_id"], event["value"])
        elif event_type == "symptom_answered":
            self._require_active()
            self._apply_symptom_answer(event["question_id"], event["value"])
        elif event_type == "undone":
            self._require_active()
            self._rebuild_after_undo()
        elif event_type == "stopped":
            self._require_active()
            self.stopped = True
            self.stopped_early = bool(event["early"])
        else:  # pragma: no cover - check_event_shape rejects these
            raise EventError(f"unknown event type {event_type!r}")

    def _require_active(self) -> None:
        if self.stopped:
            raise SessionStoppedError("session is finalised")

    def _rebuild_after_undo(self) -> None:
        # State after an undo is the replay of the log with the most recent
        # surviving answer masked.  The undo event is already in self.events.
        survivors = effective_answer_events(self.events)
        self._reset_state()
        self._started = True
        for event in survivors:
            self._apply(event)

    # -- answers -----------------------------------------------------------

    def submit_answer(self, question_id: str, value: Any) -> SubmitResult:
        """Record one answer (any unanswered question; order is advisory)."""
        self._require_active()
        if self.kb.has_profile_question(question_id):
            self._check_profile_answer(question_id, value)
            fired_before = len(self.fired_ids)
            self._append(new_event("profile_answered", question_id=question_id, value=value))
            return SubmitResult(
                question_id=question_id,
                value=value,
                satisfied=None,
                newly_fired=self._fired_since(fired_before),
            )
        if question_id in self._symptom_ids:
            value = self._check_symptom_answer(question_id, value)
            fired_before = len(self.fired_ids)
            will_satisfy = value >= self._memory[question_id]
            self._append(new_event("symptom_answered", question_id=question_id, value=value))
            return SubmitResult(
                question_id=question_id,
                value=value,
                satisfied=will_satisfy,
                newly_fired=self._fired_since(fired_before),
            )
        raise UnknownQuestionError(
            f"{question_id!r} is not a question of this interview"
        )

    def _fired_since(self, count: int) -> tuple[tuple[str, float], ...]:
        return tuple((rid, self.rule_strength(rid)) for rid in self.fired_ids[count:])

    def _check_profile_answer(self, question_id: str, value: Any) -> None:
        if question_id in self.profile_answers:
            raise AlreadyAnsweredError(f"{question_id!r} was already answered")
        question = self.kb.profile_question(question_id)
        if question.kind == "numeric":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise AnswerValueError(f"{question_id!r} expects a number, got {value!r}")
        else:
            if value not in question.allowed:
                raise AnswerValueError(
                    f"{question_id!r} expects one of {list(question.allowed)}, got {value!r}"
                )

    def _apply_profile_answer(self, question_id: str, value: Any) -> None:
        self._check_profile_answer(question_id, value)
        self.profile_answers[question_id] = value
        self._derive_mapping_facts()
        self._propagate()

    def _check_symptom_answer(self, question_id: str, value: Any) -> int:
        if question_id in self.answered:
            raise AlreadyAnsweredError(f"{question_id!r} was already answered")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise AnswerValueError(f"certainty answers are whole numbers 0-100, got {value!r}")
        if isinstance(value, float):
            if not value.is_integer():
                raise AnswerValueError(
                    f"certainty answers are whole numbers 0-100, got {value!r}"
                )
            value = int(value)
        if not 0 <= value <= 100:
            raise AnswerValueError(f"certainty answers must lie in [0, 100], got {value!r}")
        return value

    def _apply_symptom_answer(self, question_id: str, value: Any) -> None:
        value = self._check_symptom_answer(question_id, value)
        current = self._memory[question_id]
        if value >= current:
            self.satisfied.add(question_id)
            self._memory[question_id] = float(value)
        self.answered[question_id] = value
        self._propagate()

    # -- derivation and rule firing -----------------------------------------

    def _derive_mapping_facts(self) -> None:
        for fact in self.kb.derived_facts:
            if fact.kind != "mapping" or fact.id in self.derived_values:
                continue
            if all(i.question_id in self.profile_answers for i in fact.inputs):
                self.derived_values[fact.id] = self.resolve_subgoal(fact.id)

    def resolve_subgoal(self, fact_id: str) -> str:
        """Value of a mapping fact, derived from profile answers and memoised."""
        if fact_id in self.derived_values:
            return self.derived_values[fact_id]
        fact = self.kb.derived_fact(fact_id)
        if fact.kind != "mapping":
            raise UnknownQuestionError(f"{fact_id!r} is not a mapping fact")
        key = []
        missing = [i.question_id for i in fact.inputs if i.question_id not in self.profile_answers]
        if missing:
            raise ScriptUnderrunError(
                f"mapping fact {fact_id!r} needs unanswered question(s): {', '.join(missing)}"
            )
        for inp in fact.inputs:
            answer = self.profile_answers[inp.question_id]
            key.append(self._band_label(inp, answer))
        value = fact.lookup(tuple(key))
        if value is None:  # validated KBs are total; guard stays for direct use
            raise EventError(f"mapping fact {fact_id!r} has no entry for {key!r}")
        self.derived_values[fact_id] = value
        return value

    @staticmethod
    def _band_label(inp, answer: Any) -> str:
        if inp.bands is None:
            return str(answer)
        for band in inp.bands:
            if band.max is None or float(answer) <= band.max:
                return band.label
        raise EventError("bands must end with an open-ended band")  # pragma: no cover

    def _guard_passes(self, guard) -> bool:
        if guard.question_id in self.profile_answers:
            answer = self.profile_answers[guard.question_id]
        elif guard.question_id in self.derived_values:
            answer = self.derived_values[guard.question_id]
        else:
            return False
        op = guard.op
        if op == "between":
            return guard.min <= float(answer) <= guard.max
        if op == "eq":
            return answer == guard.value
        if op == "ne":
            return answer != guard.value
        numeric = float(answer)
        if op == "lt":
            return numeric < guard.value
        if op == "le":
            return numeric <= guard.value
        if op == "gt":
            return numeric > guard.value
        return numeric >= guard.value  # "ge"

    def _premise_satisfied(self, premise) -> bool:
        if premise.symptom is not None:
            return premise.symptom in self.satisfied
        cf = self.fact_strength(premise.fact)
        if cf is None:
            return False
        if premise.min_cf is not None:
            return cf >= premise.min_cf
        return cf > 0.0

    def _rule_ready(self, rule: Rule) -> bool:
        return all(self._premise_satisfied(p) for p in rule.premises) and all(
            self._guard_passes(g) for g in rule.guards
        )

    def _propagate(self) -> None:
        fired = set(self.fired_ids)
        changed = True
        while changed:
            changed = False
            for rule in self._rules:
                if rule.id in fired:
                    continue
                if self._rule_ready(rule):
                    fired.add(rule.id)
                    self.fired_ids.append(rule.id)
                    changed = True

    # -- evidence strengths (always evaluated against current answers) ------

    def rule_strength(self, rule_id: str) -> float:
        """Certainty contributed by a fired rule, from its current premises."""
        rule = self.kb.rule(rule_id)
        if not rule.premises:
            return rule_cf(rule.antecedent_cf, 100.0)
        values = []
        for premise in rule.premises:
            if premise.symptom is not None:
                values.append(float(self.answered[premise.symptom]))
            else:
                values.append(self.fact_strength(premise.fact))
        return rule_cf(rule.antecedent_cf, conjoin_premises(values))

    def fact_strength(self, fact_id: str) -> float | None:
        """Accumulated certainty of an inferred fact, or None before any
        supporting rule has fired."""
        contributions = [
            self.rule_strength(rid)
            for rid in self.fired_ids
            if self.kb.rule(rid).conclusion_kind == "fact"
            and self.kb.rule(rid).conclusion_id == fact_id
        ]
        if not contributions:
            return None
        return combine_many(contributions)

    def fired_goal_rules(self) -> tuple[tuple[str, float], ...]:
        return tuple(
            (rid, self.rule_strength(rid))
            for rid in self.fired_ids
            if self.kb.rule(rid).conclusion_kind == "anomaly"
            and self.kb.rule(rid).conclusion_id == self.anomaly_id
        )

    # -- views ---------------------------------------------------------------

    def memory_entries(self) -> list[MemoryEntry]:
        """Certainty memory, strongest first; ties keep declaration order."""
        order = {s.id: i for i, s in enumerate(self._symptoms)}
        entries = [
            MemoryEntry(symptom_id=sid, value=value, answered=sid in self.answered)
            for sid, value in self._memory.items()
        ]
        entries.sort(key=lambda e: (-e.value, order[e.symptom_id]))
        return entries

    def next_question(self) -> Question | None:
        """The recommended next question, or None when the interview is over."""
        if self.stopped:
            return None
        for q in self.kb.profile_questions:
            if q.id not in self.profile_answers:
                return Question(id=q.id, prompt=q.prompt, kind=q.kind, unit=q.unit, allowed=q.allowed)
        for entry in self.memory_entries():
            if not entry.answered:
                symptom = self.kb.symptom(entry.symptom_id)
                return Question(id=symptom.id, prompt=symptom.prompt, kind="certainty")
        return None

    def progress(self) -> tuple[int, int]:
        total = len(self.kb.profile_questions) + len(self._symptoms)
        done = len(self.profile_answers) + len(self.answered)
        return done, total

    def undo(self) -> str:
        """Take back the most recent answer; returns its question id."""
        self._require_active()
        survivors = effective_answer_events(self.events)
        if not survivors:
            raise NothingToUndoError("no answer left to undo")
        undone_question = survivors[-1]["question_id"]
        self._append(new_event("undone"))
        return undone_question

    def diagnosis(self, stopped_early: bool | None = None) -> Diagnosis:
        """Current verdict from the fired goal rules (no state change)."""
        fired = self.fired_goal_rules()
        early = self.stopped_early if stopped_early is None else stopped_early
        cutoff = self.kb.cutoff(self.anomaly_id)
        if not fired:
            # No supporting evidence at all: report the negative band outright.
            return Diagnosis(
                anomaly_id=self.anomaly_id,
                certainty_degree=None,
                display_percent=None,
                verdict=Verdict.NEGATIVE,
                no_evidence=True,
                fired_rules=(),
                stopped_early=early,
            )
        cfs = [cf for _, cf in fired]
        percent = mean_percent(cfs)
        return Diagnosis(
            anomaly_id=self.anomaly_id,
            certainty_degree=percent / 100.0,
            display_percent=display_percent(percent),
            verdict=classify_verdict(percent / 100.0, cutoff.tnd, cutoff.tpd),
            no_evidence=False,
            fired_rules=fired,
            stopped_early=early,
        )

    def finalize(self, early: bool = False) -> Diagnosis:
        """Stop the interview (idempotent) and return the diagnosis."""
        if not self.stopped:
            self._append(new_event("stopped", early=early))
        return self.diagnosis()

    def state_snapshot(self) -> dict:
        """Canonical comparable view of the full session state."""
        return {
            "anomaly": self.anomaly_id,
            "profile_answers": dict(self.profile_answers),
            "derived_values": dict(self.derived_values),
            "answered": dict(self.answered),
            "satisfied": sorted(self.satisfied),
            "memory": [(e.symptom_id, e.value, e.answered) for e in self.memory_entries()],
            "fired": list(self.fired_goal_rules()),
            "stopped": self.stopped,
            "stopped_early": self.stopped_early,
        }


def start_session(
    kb: KnowledgeBase, anomaly_id: str, profile_answers: Mapping[str, Any] | None = None
) -> Session:
    return Session.start(kb, anomaly_id, profile_answers)


def replay_session(kb: KnowledgeBase, events: Iterable[Mapping]) -> Session:
    return Session.replay(kb, events)


def run_script(kb: KnowledgeBase, anomaly_id: str, script: Mapping[str, Any]) -> Diagnosis:
    """Drive a full interview from an answer script and return the diagnosis.

    The script holds a ``profile`` map (question id -> answer) and a
    ``certainty`` map (symptom id -> whole number 0-100); every question the
    engine asks must have an entry, extra entries are ignored.
    """
    profile = script.get("profile", {})
    certainty = script.get("certainty", {})
    if not isinstance(profile, Mapping) or not isinstance(certainty, Mapping):
        raise ScriptUnderrunError("script must hold 'profile' and 'certainty' maps")
    session = Session.start(kb, anomaly_id)
    while True:
        question = session.next_question()
        if question is None:
            break
        source = certainty if question.kind == "certainty" else profile
        if question.id not in source:
            raise ScriptUnderrunError(f"script has no answer for {question.id!r}")
        session.submit_answer(question.id, source[question.id])
    return session.finalize()
