"""The bundled spinal-disorder knowledge base and its source sheets.

The package ships the questionnaire CSVs, cut-off sheet and scaffold used to
author ``data/demo_kb.json``; ``build_demo_kb`` re-runs the authoring
pipeline from those inputs, and a test pins the shipped file to its output.
Running ``python -m cchain.demo`` regenerates the file in place.
"""

from __future__ import annotations

import json
from importlib import resources

from .authoring import (
    CutoffAggregation,
    QuestionnaireSheet,
    Scaffold,
    aggregate_cutoffs,
    build_kb,
    parse_cutoff_csv,
    parse_questionnaire_csv,
    parse_scaffold,
)
from .kb import KnowledgeBase, parse_kb, serialize_kb

DEMO_ANOMALIES = ("scoliosis", "flatback", "kyphosis", "cervical_lordosis", "swayback")


def _data_text(name: str) -> str:
    return resources.files("cchain").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load_demo_sheets() -> list[QuestionnaireSheet]:
    return [
        parse_questionnaire_csv(_data_text(f"questionnaires/{anomaly}.csv"), anomaly)
        for anomaly in DEMO_ANOMALIES
    ]


def load_demo_cutoffs() -> CutoffAggregation:
    return aggregate_cutoffs(parse_cutoff_csv(_data_text("cutoffs.csv")))


def load_demo_scaffold() -> Scaffold:
    return parse_scaffold(_data_text("scaffold.json"))


def build_demo_kb() -> KnowledgeBase:
    """Author the bundled knowledge base from its shipped source sheets."""
    return build_kb(
        sheets=load_demo_sheets(),
        cutoffs=load_demo_cutoffs(),
        scaffold=load_demo_scaffold(),
        version="1",
    )


def demo_kb() -> KnowledgeBase:
    """Parse the pre-built bundled knowledge base."""
    return parse_kb(_data_text("demo_kb.json"))


def scoliosis_case_script() -> dict:
    """The worked scoliosis interview used in documentation and tests."""
    return json.loads(_data_text("scoliosis_case.json"))


def main() -> None:
    kb = build_demo_kb()
    target = resources.files("cchain").joinpath("data").joinpath("demo_kb.json")
    with resources.as_file(target) as path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(serialize_kb(kb))
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
