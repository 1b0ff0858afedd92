"""Shared fixtures: the bundled knowledge base and small purpose-built ones."""

import copy
import json

import pytest

from cchain import demo
from cchain.authoring import CutoffAggregation, QuestionnaireSheet, SheetRow, build_kb
from cchain.kb import CutoffEntry, kb_to_document, parse_kb_document


def sheet_rows_to_sheet(cfs_and_classes, anomaly_id="sample") -> QuestionnaireSheet:
    """A questionnaire sheet from bare (certainty factor, class) pairs."""
    rows = tuple(
        SheetRow(
            symptom_id=f"sym_{i}",
            prompt=f"Sign {i}?",
            class_label=label,
            expert_cfs=(float(cf),),
        )
        for i, (cf, label) in enumerate(cfs_and_classes, start=1)
    )
    return QuestionnaireSheet(anomaly_id=anomaly_id, rows=rows)


@pytest.fixture(scope="session")
def kb():
    """The bundled five-anomaly knowledge base."""
    return demo.demo_kb()


@pytest.fixture(scope="session")
def scoliosis_script():
    """The worked scoliosis interview (profile + certainty answers)."""
    return demo.scoliosis_case_script()


@pytest.fixture(scope="session")
def flatback_sheet():
    return next(s for s in demo.load_demo_sheets() if s.anomaly_id == "flatback")


@pytest.fixture(scope="session")
def flatback_kb(flatback_sheet):
    """A single-anomaly KB with six certainty questions and no profile rows.

    Small enough to brute-force every ask-order permutation.
    """
    cutoffs = CutoffAggregation(
        entries=(CutoffEntry(anomaly_id="flatback", tnd=0.485, tpd=0.755),)
    )
    return build_kb([flatback_sheet], cutoffs)


@pytest.fixture()
def kb_document(kb):
    """A fresh mutable copy of the bundled KB's document form."""
    return copy.deepcopy(kb_to_document(kb))


def make_tiny_document() -> dict:
    """The smallest valid knowledge base, as a plain JSON document."""
    return {
        "anomalies": [{"id": "a1", "name": "Anomaly one"}],
        "symptoms": [
            {
                "id": "s1",
                "prompt": "Is the sole sign present?",
                "anomaly": "a1",
                "class": "A",
                "certainty_factor": 80.0,
                "certainty_effect": 1.0,
            }
        ],
        "profile_questions": [],
        "derived_facts": [],
        "rules": [
            {
                "id": "r1",
                "premises": [{"symptom": "s1"}],
                "guards": [],
                "antecedent_cf": 100.0,
                "conclusion": {"anomaly": "a1"},
            }
        ],
        "cutoffs": [{"anomaly": "a1", "tnd": 0.4, "tpd": 0.8}],
        "metadata": {"version": "1", "notes": []},
    }


@pytest.fixture()
def tiny_document():
    return make_tiny_document()


@pytest.fixture()
def tiny_kb(tiny_document):
    return parse_kb_document(tiny_document)


def roundtrip(doc: dict):
    """Parse a document through its JSON text form, as files would."""
    return parse_kb_document(json.loads(json.dumps(doc)))
