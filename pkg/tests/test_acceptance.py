"""Acceptance gate: the published reference behaviour, checked end to end.

Each test verifies one release criterion and emits one PASS/FAIL line on
the real stdout, past pytest's capture, so every run shows the criterion
outcomes regardless of capture flags.
"""

import itertools
import random
import statistics
import sys
from contextlib import contextmanager
from pathlib import Path

import pytest

import cchain
from cchain.algebra import (
    UndefinedCombinationError,
    combine_cf,
    conjoin_premises,
    rule_cf,
)
from cchain.authoring import (
    aggregate_cutoffs,
    certainty_effect_table,
    parse_cutoff_csv,
    probability_table,
    truncate3,
)
from cchain.cli import verdict_line
from cchain.engine import Session, Verdict, run_script
from cchain.harness import Record, SummaryStats, errorbar_rows, run_batch, summarize
from cchain.store import SessionStore

from conftest import sheet_rows_to_sheet

DATA_DIR = Path(cchain.__file__).parent / "data"

REFERENCE_ROWS = [(80, "A"), (60, "A"), (30, "B"), (20, "C"), (20, "D"), (10, "E"), (5, "F")]

FLATBACK_ANSWERS = {
    "fb_flat_thoracic": 60,
    "fb_reduced_flexibility": 10,
    "fb_disk_space_loss": 80,
    "fb_degenerative_disk": 12,
    "fb_compression_fractures": 0,
    "fb_digestive_problems": 97,
}

EXPERT_PANELS = {
    # anomaly: (four per-assessor degrees, printed mean / s / cv)
    "scoliosis": ([0.853, 0.948, 0.957, 0.961], (0.925, 0.050, 0.054)),
    "flatback": ([0.860, 0.975, 0.933, 0.944], (0.925, 0.046, 0.050)),
    "kyphosis": ([0.923, 0.911, 0.963, 0.975], (0.940, 0.029, 0.031)),
    "cervical_lordosis": ([0.880, 0.939, 0.942, 0.910], (0.915, 0.026, 0.028)),
    "swayback": ([0.891, 0.916, 0.911, 0.954], (0.915, 0.025, 0.027)),
}

PUBLISHED_CUTOFFS = {
    # anomaly: (printed tnd, printed tpd)
    "scoliosis": (0.500, 0.760),
    "flatback": (0.485, 0.755),
    "kyphosis": (0.520, 0.785),
    "cervical_lordosis": (0.465, 0.740),
    "swayback": (0.470, 0.745),
}


def _report(line):
    # sys.__stdout__ bypasses pytest's capture: the criterion outcome must
    # stay visible in the run log even when test output is swallowed
    print(line)
    if sys.stdout is not sys.__stdout__ and sys.__stdout__ is not None:
        print(line, file=sys.__stdout__)


@contextmanager
def criterion(label):
    try:
        yield
    except BaseException:
        _report(f"ACCEPTANCE FAIL: {label}")
        raise
    _report(f"ACCEPTANCE PASS: {label}")


def test_certainty_effect_shares_match_reference():
    with criterion("certainty-effect shares and cumulative column reproduce the reference"):
        table = certainty_effect_table(sheet_rows_to_sheet(REFERENCE_ROWS))
        effects = [float(truncate3(row.certainty_effect)) for row in table]
        cumulative = [float(truncate3(row.cumulative)) for row in table]
        expected_effects = [0.484, 0.181, 0.121, 0.121, 0.060, 0.030]
        expected_cumulative = [0.484, 0.666, 0.787, 0.909, 0.969, 1.000]
        for got, want in zip(effects, expected_effects, strict=True):
            assert got == pytest.approx(want, abs=0.001)
        for got, want in zip(cumulative, expected_cumulative, strict=True):
            assert got == pytest.approx(want, abs=0.001)


def test_probability_shares_match_reference():
    with criterion("probability shares, exact amendments and cumulative total reproduce the reference"):
        table = probability_table(sheet_rows_to_sheet(REFERENCE_ROWS))
        probabilities = [float(truncate3(row.probability)) for row in table]
        expected = [0.355, 0.266, 0.133, 0.088, 0.088, 0.044, 0.022]
        for got, want in zip(probabilities, expected, strict=True):
            assert got == pytest.approx(want, abs=0.001)
        for row in table:
            assert row.amendment == 1.0 - row.probability  # exact complement
        assert table[-1].cumulative == pytest.approx(1.000, abs=0.005)
        # the reference prints 0.848 for the fourth cumulative entry; the
        # column recomputes to 0.844 — inside the documented tolerance
        assert table[3].cumulative == pytest.approx(0.848, abs=0.005)


def test_worked_interview_end_to_end(kb, scoliosis_script):
    with criterion("worked interview yields degree 0.8875, display 89%, POSITIVE at cut-off 0.760"):
        diagnosis = run_script(kb, "scoliosis", scoliosis_script)
        assert diagnosis.certainty_degree == pytest.approx(0.8875, abs=1e-12)
        assert diagnosis.display_percent == 89
        assert diagnosis.verdict is Verdict.POSITIVE
        assert kb.cutoff("scoliosis").tpd == pytest.approx(0.760, abs=1e-9)
        assert verdict_line("scoliosis", diagnosis) == "scoliosis: 89% POSITIVE"


def test_cutoff_aggregation_matches_reference():
    with criterion("cut-off aggregation matches 9 of 10 published values and flags the tenth"):
        agg = aggregate_cutoffs(parse_cutoff_csv((DATA_DIR / "cutoffs.csv").read_text()))
        by_id = {e.anomaly_id: e for e in agg.entries}
        matches = 0
        for anomaly_id, (tnd, tpd) in PUBLISHED_CUTOFFS.items():
            entry = by_id[anomaly_id]
            if abs(entry.tnd - tnd) <= 0.001:
                matches += 1
            if abs(entry.tpd - tpd) <= 0.001:
                matches += 1
        assert matches == 9  # every value but the kyphosis upper cut-off
        assert by_id["kyphosis"].tpd == pytest.approx(0.805, abs=1e-9)
        assert any("0.805" in note and "0.785" in note for note in agg.notes)


def test_expert_panel_statistics():
    with criterion("expert-panel statistics reproduce within 0.006 with the n-1 estimator"):
        for anomaly_id, (values, printed) in EXPERT_PANELS.items():
            stats = summarize(values)
            printed_mean, printed_s, printed_cv = printed
            assert stats.x_bar == pytest.approx(printed_mean, abs=0.006), anomaly_id
            assert stats.s == pytest.approx(printed_s, abs=0.006), anomaly_id
            assert stats.cv == pytest.approx(printed_cv, abs=0.006), anomaly_id
        # estimator discrimination: on the first panel the n-1 deviation lands
        # within half a display unit of the printed 0.050 while the population
        # deviation rounds to 0.045 and misses by more
        values, (_, printed_s, _) = EXPERT_PANELS["scoliosis"]
        sample_s = statistics.stdev(values)
        population_s = statistics.pstdev(values)
        assert round(population_s, 3) == 0.045
        assert abs(sample_s - printed_s) <= 0.005
        assert abs(population_s - printed_s) > 0.005
        assert abs(sample_s - printed_s) < abs(population_s - printed_s)


def test_combination_algebra_laws():
    with criterion("combination algebra laws hold over 1000+ random cases each"):
        rng = random.Random(20260816)

        def any_cf():
            return rng.uniform(-100.0, 100.0)

        def pos_cf():
            return rng.uniform(0.0, 100.0)

        for _ in range(1200):  # commutativity
            x, y = any_cf(), any_cf()
            assert combine_cf(x, y) == combine_cf(y, x)

        for _ in range(1200):  # associativity (away from the undefined poles)
            x, y, z = (rng.uniform(-99.0, 99.0) for _ in range(3))
            left = combine_cf(combine_cf(x, y), z)
            right = combine_cf(x, combine_cf(y, z))
            assert left == pytest.approx(right, abs=1e-9)

        for _ in range(1200):  # identity and absorption
            x = any_cf()
            assert combine_cf(x, 0.0) == x
            assert combine_cf(100.0, pos_cf()) == 100.0

        for _ in range(1200):  # closure on non-negative evidence
            value = combine_cf(pos_cf(), pos_cf())
            assert 0.0 <= value <= 100.0

        for _ in range(1200):  # monotonicity in each argument
            x1, x2, y = pos_cf(), pos_cf(), pos_cf()
            low, high = min(x1, x2), max(x1, x2)
            assert combine_cf(low, y) <= combine_cf(high, y)

        for _ in range(1200):  # sign symmetry
            x, y = any_cf(), any_cf()
            assert combine_cf(x, y) == -combine_cf(-x, -y)

        with pytest.raises(UndefinedCombinationError):
            combine_cf(100.0, -100.0)

        for _ in range(1200):  # rule strength scales the premise; conjunction takes the weakest
            antecedent, premise = pos_cf(), pos_cf()
            assert rule_cf(antecedent, premise) == antecedent * premise / 100.0
            trio = [pos_cf(), pos_cf(), pos_cf()]
            assert conjoin_premises(trio) == min(trio)


def test_order_independence_exhaustive(flatback_kb):
    with criterion("all 720 ask-order permutations produce one identical certainty degree"):
        degrees = set()
        fired = set()
        for order in itertools.permutations(FLATBACK_ANSWERS):
            session = Session.start(flatback_kb, "flatback")
            for question_id in order:
                session.submit_answer(question_id, FLATBACK_ANSWERS[question_id])
            diagnosis = session.diagnosis()
            degrees.add(diagnosis.certainty_degree)
            fired.add(tuple(sorted(diagnosis.fired_rules)))
        assert len(degrees) == 1
        assert len(fired) == 1


def test_replay_and_undo_laws(flatback_kb, tmp_path):
    with criterion("200 random sessions replay exactly; undo inverts; torn logs recover"):
        rng = random.Random(4711)
        question_ids = list(FLATBACK_ANSWERS)
        for round_no in range(200):
            session = Session.start(flatback_kb, "flatback")
            for _ in range(rng.randrange(10)):
                unanswered = [q for q in question_ids if q not in session.answered]
                if not unanswered:
                    break
                before = session.state_snapshot()
                session.submit_answer(rng.choice(unanswered), rng.randrange(101))
                if rng.random() < 0.3:  # answer-then-undo is the identity
                    session.undo()
                    assert session.state_snapshot() == before
            replayed = Session.replay(flatback_kb, session.events)
            assert replayed.state_snapshot() == session.state_snapshot()

            if round_no % 10 == 0:  # recovery from a torn final line
                store = SessionStore(tmp_path / f"store_{round_no}")
                session_id, stored = store.create(flatback_kb, "flatback")
                for question_id in question_ids[:3]:
                    stored.submit_answer(question_id, rng.randrange(101))
                store.sync(session_id, stored)
                log = store.path(session_id)
                intact = log.read_bytes()
                log.write_bytes(intact[: len(intact) - rng.randrange(2, 20)])
                recovered, warnings = SessionStore(store.root).recover(flatback_kb, session_id)
                assert any("torn" in w for w in warnings)
                truncated = Session.replay(flatback_kb, stored.events[:-1])
                assert recovered.state_snapshot() == truncated.state_snapshot()


def test_planted_ground_truth_batches(flatback_kb):
    with criterion("planted-truth batches classify 100% correctly; error bars match printed pairs"):
        rng = random.Random(1234)
        thresholds = {qid: value for qid, value in zip(
            FLATBACK_ANSWERS, [48, 18, 12, 12, 6, 3]
        )}
        records = []
        for i in range(40):  # all answers at or above the positive cut-off
            script = {qid: rng.randint(76, 100) for qid in thresholds}
            records.append(Record(f"pos_{i}", "flatback", {"profile": {}, "certainty": script}))
        for i in range(40):  # all answers below every memory threshold
            script = {qid: rng.randint(0, limit) for qid, limit in thresholds.items()}
            records.append(Record(f"neg_{i}", "flatback", {"profile": {}, "certainty": script}))

        batch = run_batch(flatback_kb, records)
        assert batch.errors == ()
        verdicts = {o.record_id: o.diagnosis.verdict for o in batch.outcomes}
        assert all(verdicts[f"pos_{i}"] is Verdict.POSITIVE for i in range(40))
        assert all(verdicts[f"neg_{i}"] is Verdict.NEGATIVE for i in range(40))

        rows = errorbar_rows(
            [("scoliosis", SummaryStats(n=4, x_bar=0.935, s=0.060, cv=0.064))]
        ).splitlines()
        assert rows[1] == "scoliosis,0.935,0.875,0.995"
