"""Diagnosis sessions: memory ordering, rule firing, undo/replay, verdicts."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cchain.engine import (
    AlreadyAnsweredError,
    AnswerValueError,
    EventError,
    NothingToUndoError,
    ScriptUnderrunError,
    Session,
    SessionStoppedError,
    UnknownQuestionError,
    Verdict,
    classify_verdict,
    effective_answer_events,
    new_event,
    run_script,
    start_session,
)
from cchain.kb import parse_kb_document

from conftest import make_tiny_document

FLATBACK_THRESHOLDS = {
    "fb_flat_thoracic": 48.4848,
    "fb_reduced_flexibility": 18.1818,
    "fb_disk_space_loss": 12.1212,
    "fb_degenerative_disk": 12.1212,
    "fb_compression_fractures": 6.0606,
    "fb_digestive_problems": 3.0303,
}

SCOLIOSIS_ASK_ORDER = [
    "patient_sex",
    "patient_age",
    "patient_height",
    "patient_weight",
    "avg_heart_rate",
    "daily_activity",
    "weekly_activity",
    "sc_sideways_curve",
    "sc_s_or_c_shape",
    "sc_shoulder_higher",
    "sc_shoulder_blade",
    "sc_one_hand_carry",
    "sc_uneven_hips",
    "sc_plumb_line",
    "sc_leg_length",
    "sc_weak_abdominals",
]


def drive(session, script):
    """Answer every question the session asks, from a script."""
    answers = dict(script.get("profile", {}))
    answers.update(script.get("certainty", {}))
    asked = []
    while True:
        question = session.next_question()
        if question is None:
            break
        asked.append(question.id)
        session.submit_answer(question.id, answers[question.id])
    return asked


class TestMemorySeeding:
    def test_thresholds_are_class_effects_on_the_percent_scale(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        seeded = {e.symptom_id: e.value for e in session.memory_entries()}
        assert seeded == FLATBACK_THRESHOLDS

    def test_order_is_descending_with_declaration_tiebreak(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        ordered = [e.symptom_id for e in session.memory_entries()]
        assert ordered == [
            "fb_flat_thoracic",
            "fb_reduced_flexibility",
            "fb_disk_space_loss",  # ties with the next at 12.1212; declared first
            "fb_degenerative_disk",
            "fb_compression_fractures",
            "fb_digestive_problems",
        ]

    def test_only_goal_reachable_symptoms_are_questions(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        ids = {e.symptom_id for e in session.memory_entries()}
        assert "fb_flat_lumbar" not in ids  # class A is represented by the 80-point row
        assert len(ids) == 6


class TestThresholdSemantics:
    def test_answer_at_threshold_satisfies_and_replaces(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        result = session.submit_answer("fb_digestive_problems", 4)
        assert result.satisfied is True
        memory = {e.symptom_id: e.value for e in session.memory_entries()}
        assert memory["fb_digestive_problems"] == 4.0

    def test_lower_answer_leaves_memory_bit_identical(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        before = {e.symptom_id: e.value for e in session.memory_entries()}
        result = session.submit_answer("fb_flat_thoracic", 48)  # threshold 48.4848
        assert result.satisfied is False
        after = {e.symptom_id: e.value for e in session.memory_entries()}
        assert after == before

    def test_answered_symptom_never_reenters_the_queue(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 10)  # unsatisfied, still answered
        assert session.next_question().id == "fb_reduced_flexibility"

    def test_replaced_value_can_reorder_later_questions(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        # a huge answer on a low-threshold symptom keeps it answered (not
        # re-asked) while its memory value now tops the table
        session.submit_answer("fb_digestive_problems", 99)
        top = session.memory_entries()[0]
        assert top.symptom_id == "fb_digestive_problems"
        assert top.value == 99.0
        assert top.answered is True
        assert session.next_question().id == "fb_flat_thoracic"


class TestWorkedCase:
    def test_ask_order_matches_the_published_session(self, kb, scoliosis_script):
        session = Session.start(kb, "scoliosis")
        asked = drive(session, scoliosis_script)
        assert asked == SCOLIOSIS_ASK_ORDER

    def test_degree_and_verdict(self, kb, scoliosis_script):
        diagnosis = run_script(kb, "scoliosis", scoliosis_script)
        assert diagnosis.certainty_degree == pytest.approx(0.8875, abs=1e-12)
        assert diagnosis.display_percent == 89
        assert diagnosis.verdict is Verdict.POSITIVE
        assert diagnosis.no_evidence is False

    def test_zero_answer_fires_no_rule(self, kb, scoliosis_script):
        diagnosis = run_script(kb, "scoliosis", scoliosis_script)
        fired_ids = [rid for rid, _ in diagnosis.fired_rules]
        assert len(fired_ids) == 8
        assert "scoliosis_class_e" not in fired_ids  # the 0% answer's class

    def test_fired_rule_strengths_are_the_answers(self, kb, scoliosis_script):
        # antecedents are all 100, so each fired rule carries its answer value
        diagnosis = run_script(kb, "scoliosis", scoliosis_script)
        strengths = sorted(cf for _, cf in diagnosis.fired_rules)
        assert strengths == sorted([89.0, 97.0, 89.0, 90.0, 66.0, 88.0, 97.0, 94.0])

    def test_profile_answers_do_not_count_as_evidence(self, kb, scoliosis_script):
        session = Session.start(kb, "scoliosis", profile_answers=scoliosis_script["profile"])
        assert session.fired_goal_rules() == ()
        assert session.diagnosis().no_evidence is True


class TestAnswerValidation:
    def test_certainty_answers_are_whole_numbers(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        with pytest.raises(AnswerValueError, match="whole numbers"):
            session.submit_answer("fb_flat_thoracic", 17.5)
        session.submit_answer("fb_flat_thoracic", 17.0)  # integral float is fine
        assert session.answered["fb_flat_thoracic"] == 17

    def test_range_is_checked(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        with pytest.raises(AnswerValueError, match="lie in \\[0, 100\\]"):
            session.submit_answer("fb_flat_thoracic", 150)

    def test_booleans_and_strings_rejected(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        with pytest.raises(AnswerValueError):
            session.submit_answer("fb_flat_thoracic", True)
        with pytest.raises(AnswerValueError):
            session.submit_answer("fb_flat_thoracic", "89")

    def test_unknown_question(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        with pytest.raises(UnknownQuestionError, match="not a question"):
            session.submit_answer("sc_sideways_curve", 50)

    def test_double_answer(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 50)
        with pytest.raises(AlreadyAnsweredError):
            session.submit_answer("fb_flat_thoracic", 60)

    def test_categorical_profile_answers_validated(self, kb):
        session = Session.start(kb, "scoliosis")
        with pytest.raises(AnswerValueError, match="expects one of"):
            session.submit_answer("patient_sex", "unknown")

    def test_numeric_profile_answers_validated(self, kb):
        session = Session.start(kb, "scoliosis")
        with pytest.raises(AnswerValueError, match="expects a number"):
            session.submit_answer("patient_age", "young")


class TestOrderIndependence:
    def test_any_answer_order_gives_the_same_degree(self, flatback_kb):
        answers = {
            "fb_flat_thoracic": 60,
            "fb_reduced_flexibility": 10,
            "fb_disk_space_loss": 80,
            "fb_degenerative_disk": 12,
            "fb_compression_fractures": 0,
            "fb_digestive_problems": 97,
        }
        degrees = set()
        rng = random.Random(99)
        for _ in range(50):
            order = list(answers)
            rng.shuffle(order)
            session = Session.start(flatback_kb, "flatback")
            for qid in order:
                session.submit_answer(qid, answers[qid])
            degrees.add(session.diagnosis().certainty_degree)
        assert len(degrees) == 1

    @given(
        values=st.tuples(*[st.integers(min_value=0, max_value=100)] * 6),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_shuffled_submission_is_equivalent(self, flatback_kb, values, seed):
        question_ids = list(FLATBACK_THRESHOLDS)
        answers = dict(zip(question_ids, values))
        ordered = Session.start(flatback_kb, "flatback")
        for qid in question_ids:
            ordered.submit_answer(qid, answers[qid])
        shuffled_ids = list(question_ids)
        random.Random(seed).shuffle(shuffled_ids)
        shuffled = Session.start(flatback_kb, "flatback")
        for qid in shuffled_ids:
            shuffled.submit_answer(qid, answers[qid])
        assert ordered.diagnosis().certainty_degree == shuffled.diagnosis().certainty_degree
        assert sorted(ordered.fired_ids) == sorted(shuffled.fired_ids)


class TestGreedyOrdering:
    @given(values=st.lists(st.integers(min_value=0, max_value=100), min_size=6, max_size=6))
    @settings(max_examples=60, deadline=None)
    def test_asked_sequence_is_greedy_descending(self, flatback_kb, values):
        session = Session.start(flatback_kb, "flatback")
        answer_iter = iter(values)
        while True:
            question = session.next_question()
            if question is None:
                break
            # the recommended question is the strongest unanswered memory entry
            best = next(e for e in session.memory_entries() if not e.answered)
            assert question.id == best.symptom_id
            session.submit_answer(question.id, next(answer_iter))


class TestGuardsAndFacts:
    @staticmethod
    def guarded_document() -> dict:
        doc = make_tiny_document()
        doc["profile_questions"] = [
            {"id": "age", "prompt": "Age?", "kind": "numeric", "unit": "years"},
            {"id": "sex", "prompt": "Sex?", "kind": "categorical", "allowed": ["female", "male"]},
        ]
        doc["rules"].append(
            {
                "id": "age_risk",
                "premises": [],
                "guards": [
                    {"question": "age", "op": "between", "min": 10, "max": 18},
                    {"question": "sex", "op": "eq", "value": "female"},
                ],
                "antecedent_cf": 40.0,
                "conclusion": {"anomaly": "a1"},
            }
        )
        return doc

    def test_guard_only_rule_fires_at_full_premise_strength(self):
        kb = parse_kb_document(self.guarded_document())
        session = Session.start(kb, "a1")
        session.submit_answer("age", 17)
        assert session.fired_goal_rules() == ()
        session.submit_answer("sex", "female")
        assert dict(session.fired_goal_rules()) == {"age_risk": 40.0}

    def test_failed_guard_never_fires(self):
        kb = parse_kb_document(self.guarded_document())
        session = Session.start(kb, "a1")
        session.submit_answer("age", 40)
        session.submit_answer("sex", "female")
        assert session.fired_goal_rules() == ()

    @staticmethod
    def chained_document() -> dict:
        doc = make_tiny_document()
        doc["symptoms"].append(
            {
                "id": "s2",
                "prompt": "Supporting sign?",
                "anomaly": "a1",
                "class": "A",
                "certainty_factor": 60.0,
                "certainty_effect": 1.0,
            }
        )
        doc["derived_facts"] = [{"id": "posture_risk", "kind": "inferred"}]
        doc["rules"] = [
            {
                "id": "goal_rule",
                "premises": [{"fact": "posture_risk", "min_cf": 50.0}],
                "guards": [],
                "antecedent_cf": 100.0,
                "conclusion": {"anomaly": "a1"},
            },
            {
                "id": "fact_rule_one",
                "premises": [{"symptom": "s1"}],
                "guards": [],
                "antecedent_cf": 80.0,
                "conclusion": {"fact": "posture_risk"},
            },
            {
                "id": "fact_rule_two",
                "premises": [{"symptom": "s2"}],
                "guards": [],
                "antecedent_cf": 50.0,
                "conclusion": {"fact": "posture_risk"},
            },
        ]
        return doc

    def test_fact_strength_accumulates_across_rules(self):
        kb = parse_kb_document(self.chained_document())
        session = Session.start(kb, "a1")
        session.submit_answer("s1", 100)
        # one supporting rule: 80 * 100/100 = 80
        assert session.fact_strength("posture_risk") == pytest.approx(80.0)
        session.submit_answer("s2", 100)
        # second rule contributes 50: combine(80, 50) = 80 + 50*0.2 = 90
        assert session.fact_strength("posture_risk") == pytest.approx(90.0)

    def test_goal_fires_through_the_chain(self):
        kb = parse_kb_document(self.chained_document())
        session = Session.start(kb, "a1")
        session.submit_answer("s1", 100)
        fired = dict(session.fired_goal_rules())
        # goal premise CF is the fact strength (80), above its 50 threshold
        assert fired == {"goal_rule": pytest.approx(80.0)}

    def test_min_cf_blocks_weak_facts(self):
        doc = self.chained_document()
        doc["rules"][1]["antecedent_cf"] = 30.0  # fact tops out at 30 < min_cf 50
        kb = parse_kb_document(doc)
        session = Session.start(kb, "a1")
        session.submit_answer("s1", 100)
        assert session.fired_goal_rules() == ()

    def test_chain_is_order_independent(self):
        kb = parse_kb_document(self.chained_document())
        answers = {"s1": 100, "s2": 100}
        snapshots = []
        for order in itertools.permutations(answers):
            session = Session.start(kb, "a1")
            for qid in order:
                session.submit_answer(qid, answers[qid])
            snapshots.append(session.diagnosis().certainty_degree)
        assert len(set(snapshots)) == 1


class TestSubgoals:
    def test_mapping_fact_derives_from_profile_answers(self, kb):
        session = Session.start(
            kb,
            "scoliosis",
            profile_answers={"avg_heart_rate": 115, "daily_activity": "low", "weekly_activity": "low"},
        )
        assert session.resolve_subgoal("weekly_physical_activity") == "low"

    def test_second_resolution_is_memoised(self, kb):
        session = Session.start(
            kb,
            "scoliosis",
            profile_answers={"avg_heart_rate": 115, "daily_activity": "low", "weekly_activity": "low"},
        )
        first = session.resolve_subgoal("weekly_physical_activity")
        questions_before = session.progress()
        second = session.resolve_subgoal("weekly_physical_activity")
        assert first == second
        assert session.progress() == questions_before

    def test_unanswered_inputs_are_an_error(self, kb):
        session = Session.start(kb, "scoliosis")
        with pytest.raises(ScriptUnderrunError, match="needs unanswered question"):
            session.resolve_subgoal("weekly_physical_activity")


class TestUndo:
    def test_answer_then_undo_is_identity(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 60)
        before = session.state_snapshot()
        session.submit_answer("fb_reduced_flexibility", 90)
        undone = session.undo()
        assert undone == "fb_reduced_flexibility"
        assert session.state_snapshot() == before

    def test_undo_then_reanswer_matches_never_undone(self, flatback_kb):
        direct = Session.start(flatback_kb, "flatback")
        direct.submit_answer("fb_flat_thoracic", 60)
        direct.submit_answer("fb_reduced_flexibility", 90)

        detour = Session.start(flatback_kb, "flatback")
        detour.submit_answer("fb_flat_thoracic", 60)
        detour.submit_answer("fb_reduced_flexibility", 15)
        detour.undo()
        detour.submit_answer("fb_reduced_flexibility", 90)
        assert detour.state_snapshot() == direct.state_snapshot()

    def test_two_answers_one_undo_keeps_the_first(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 60)
        session.submit_answer("fb_reduced_flexibility", 90)
        session.undo()
        assert list(session.answered) == ["fb_flat_thoracic"]
        assert session.next_question().id == "fb_reduced_flexibility"

    def test_undo_crosses_back_into_profile_answers(self, kb):
        session = Session.start(kb, "scoliosis")
        session.submit_answer("patient_sex", "female")
        session.undo()
        assert session.profile_answers == {}
        assert session.next_question().id == "patient_sex"

    def test_nothing_to_undo(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        with pytest.raises(NothingToUndoError):
            session.undo()

    def test_undo_count_cannot_exceed_answers(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 60)
        session.undo()
        with pytest.raises(NothingToUndoError):
            session.undo()


class TestReplay:
    def test_replay_reproduces_live_state(self, kb, scoliosis_script):
        live = Session.start(kb, "scoliosis")
        drive(live, scoliosis_script)
        live.finalize()
        replayed = Session.replay(kb, live.events)
        assert replayed.state_snapshot() == live.state_snapshot()
        assert replayed.diagnosis() == live.diagnosis()

    def test_replay_requires_session_started_first(self, kb):
        with pytest.raises(EventError, match="must begin with session_started"):
            Session.replay(kb, [new_event("symptom_answered", question_id="x", value=1)])

    def test_event_shapes_are_validated(self, kb):
        with pytest.raises(EventError, match="unknown event type"):
            Session.replay(kb, [{"v": 1, "id": "abc", "type": "mystery"}])
        with pytest.raises(EventError, match="unsupported event schema version"):
            Session.replay(kb, [{"v": 2, "id": "abc", "type": "session_started", "anomaly": "scoliosis"}])
        with pytest.raises(EventError, match="wrong fields"):
            Session.replay(kb, [{"v": 1, "id": "abc", "type": "session_started"}])

    def test_random_sessions_replay_identically(self, flatback_kb):
        rng = random.Random(20260816)
        question_ids = list(FLATBACK_THRESHOLDS)
        for _ in range(200):
            session = Session.start(flatback_kb, "flatback")
            for _ in range(rng.randrange(12)):
                move = rng.random()
                unanswered = [q for q in question_ids if q not in session.answered]
                if move < 0.25 and effective_answer_events(session.events):
                    session.undo()
                elif unanswered:
                    session.submit_answer(rng.choice(unanswered), rng.randrange(101))
            replayed = Session.replay(flatback_kb, session.events)
            assert replayed.state_snapshot() == session.state_snapshot()

    def test_effective_answers_mask_undone_tail(self):
        events = [
            new_event("profile_answered", question_id="a", value=1),
            new_event("symptom_answered", question_id="b", value=2),
            new_event("undone"),
            new_event("symptom_answered", question_id="c", value=3),
        ]
        live = effective_answer_events(events)
        assert [e["question_id"] for e in live] == ["a", "c"]


class TestStopping:
    def test_finalize_stops_and_is_idempotent(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 89)
        first = session.finalize(early=True)
        second = session.finalize()
        assert session.stopped is True
        assert session.stopped_early is True
        assert first == second

    def test_single_fired_rule_degree_is_its_cf(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.submit_answer("fb_flat_thoracic", 89)
        diagnosis = session.finalize(early=True)
        assert diagnosis.certainty_degree == pytest.approx(0.89, abs=1e-12)
        assert diagnosis.stopped_early is True

    def test_stopped_session_rejects_changes(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.finalize()
        with pytest.raises(SessionStoppedError):
            session.submit_answer("fb_flat_thoracic", 10)
        with pytest.raises(SessionStoppedError):
            session.undo()

    def test_no_evidence_diagnosis(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        diagnosis = session.finalize(early=True)
        assert diagnosis.no_evidence is True
        assert diagnosis.certainty_degree is None
        assert diagnosis.display_percent is None
        assert diagnosis.verdict is Verdict.NEGATIVE

    def test_next_question_is_none_after_stop(self, flatback_kb):
        session = Session.start(flatback_kb, "flatback")
        session.finalize()
        assert session.next_question() is None

    def test_progress_counts_profile_and_certainty(self, kb, scoliosis_script):
        session = Session.start(kb, "scoliosis")
        assert session.progress() == (0, 16)
        drive(session, scoliosis_script)
        assert session.progress() == (16, 16)


class TestVerdicts:
    def test_boundaries_are_inclusive(self):
        assert classify_verdict(0.500, 0.500, 0.760) is Verdict.NEGATIVE
        assert classify_verdict(0.760, 0.500, 0.760) is Verdict.POSITIVE
        assert classify_verdict(0.600, 0.500, 0.760) is Verdict.NEEDS_EXAMINATION

    def test_range_is_checked(self):
        with pytest.raises(AnswerValueError):
            classify_verdict(1.2, 0.5, 0.76)

    @given(degree=st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
    @settings(max_examples=300)
    def test_partition_covers_the_unit_interval(self, degree):
        verdict = classify_verdict(degree, 0.500, 0.760)
        if degree <= 0.500:
            assert verdict is Verdict.NEGATIVE
        elif degree >= 0.760:
            assert verdict is Verdict.POSITIVE
        else:
            assert verdict is Verdict.NEEDS_EXAMINATION


class TestMonotonicity:
    @given(
        base=st.lists(st.integers(min_value=50, max_value=99), min_size=6, max_size=6),
        bump_index=st.integers(min_value=0, max_value=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_raising_a_satisfied_answer_never_lowers_the_degree(
        self, flatback_kb, base, bump_index
    ):
        question_ids = list(FLATBACK_THRESHOLDS)
        answers = dict(zip(question_ids, base))

        low = Session.start(flatback_kb, "flatback")
        for qid, value in answers.items():
            low.submit_answer(qid, value)

        bumped = dict(answers)
        bumped[question_ids[bump_index]] = 100
        high = Session.start(flatback_kb, "flatback")
        for qid, value in bumped.items():
            high.submit_answer(qid, value)

        # answers >= 50 satisfy every flat-back threshold, so the fired set
        # is fixed and the degree must not decrease
        assert high.diagnosis().certainty_degree >= low.diagnosis().certainty_degree


class TestRunScript:
    def test_all_zero_script_is_no_evidence(self, kb, scoliosis_script):
        script = {
            "profile": scoliosis_script["profile"],
            "certainty": {k: 0 for k in scoliosis_script["certainty"]},
        }
        diagnosis = run_script(kb, "scoliosis", script)
        assert diagnosis.no_evidence is True
        assert diagnosis.verdict is Verdict.NEGATIVE

    def test_underrun_is_reported(self, kb):
        with pytest.raises(ScriptUnderrunError, match="no answer for 'patient_sex'"):
            run_script(kb, "scoliosis", {"profile": {}, "certainty": {}})

    def test_extra_entries_are_ignored(self, flatback_kb):
        script = {
            "profile": {"never_asked": 1},
            "certainty": {**{k: 80 for k in FLATBACK_THRESHOLDS}, "sc_bogus": 5},
        }
        diagnosis = run_script(flatback_kb, "flatback", script)
        assert diagnosis.certainty_degree == pytest.approx(0.80)

    def test_start_session_helper(self, flatback_kb):
        session = start_session(flatback_kb, "flatback")
        assert session.anomaly_id == "flatback"
