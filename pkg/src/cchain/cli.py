"""Command-line front end.

Subcommands:

* ``kbtool build``     -- questionnaire sheets + cut-off sheet -> knowledge base
* ``kbtool validate``  -- load a knowledge base and confirm its canonical form
* ``kbtool report``    -- emit the probability / certainty-effect tables as CSV
* ``diagnose``         -- run one interview (scripted or interactive)
* ``evaluate``         -- replay a record set and write the summary CSVs
* ``serve``            -- start the HTTP service

Exit codes: 0 success, 1 domain failure (bad input files, invalid knowledge
base, failed validation), 2 usage errors (argparse's own convention).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .algebra import CertaintyRangeError, UndefinedCombinationError
from .authoring import (
    AuthoringError,
    aggregate_cutoffs,
    build_kb,
    certainty_effect_table,
    parse_cutoff_csv,
    parse_questionnaire_csv,
    parse_scaffold,
    probability_table,
    render_effect_csv,
    render_probability_csv,
)
from .demo import demo_kb
from .engine import Diagnosis, SessionError, Session, run_script
from .harness import (
    HarnessError,
    emit_errorbar_data,
    emit_report,
    load_record_set,
    run_batch,
)
from .kb import KbError, KnowledgeBase, load_kb, serialize_kb
from .store import SessionStore, StoreError


class CliError(Exception):
    """Domain-level failure; its message goes to stderr and exit code is 1."""


def _load_kb_arg(path: str | None) -> KnowledgeBase:
    if path is None:
        return demo_kb()
    try:
        return load_kb(path)
    except FileNotFoundError:
        raise CliError(f"knowledge base file not found: {path}") from None
    except KbError as e:
        raise CliError(f"invalid knowledge base {path}: {e}") from None


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(f"{what} not found: {path}") from None


def _sheets_from_paths(paths: list[str]):
    """Questionnaire sheets from directories (sorted *.csv) and/or files.

    File order is preserved: declaration order is meaningful (it breaks
    certainty-memory ties and groups the interview), so callers who care
    list the CSV files explicitly instead of passing a directory.
    """
    csv_paths: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found = sorted(p.glob("*.csv"))
            if not found:
                raise CliError(f"no questionnaire sheets (*.csv) in {raw}")
            csv_paths.extend(found)
        elif p.is_file():
            csv_paths.append(p)
        else:
            raise CliError(f"questionnaire sheet not found: {raw}")
    return [
        parse_questionnaire_csv(p.read_text(encoding="utf-8"), p.stem) for p in csv_paths
    ]


def verdict_line(anomaly_id: str, diagnosis: Diagnosis) -> str:
    """One-line result, the contract shared with every front end."""
    if diagnosis.no_evidence:
        return f"{anomaly_id}: insufficient evidence {diagnosis.verdict.value}"
    return f"{anomaly_id}: {diagnosis.display_percent}% {diagnosis.verdict.value}"


# ---------------------------------------------------------------------------
# kbtool


def cmd_kbtool_build(args: argparse.Namespace) -> int:
    sheets = _sheets_from_paths(args.sheets)
    cutoffs = aggregate_cutoffs(parse_cutoff_csv(_read_text(args.cutoffs, "cut-off sheet")))
    scaffold = None
    if args.scaffold:
        scaffold = parse_scaffold(_read_text(args.scaffold, "scaffold"))
    kb = build_kb(sheets, cutoffs, scaffold)
    Path(args.out).write_text(serialize_kb(kb), encoding="utf-8")
    for note in kb.metadata.notes:
        print(f"note: {note}", file=sys.stderr)
    print(
        f"wrote {args.out}: {len(kb.anomalies)} anomalies, "
        f"{len(kb.symptoms)} symptoms, {len(kb.rules)} rules"
    )
    return 0


def cmd_kbtool_validate(args: argparse.Namespace) -> int:
    kb = _load_kb_arg(args.kb)
    raw = Path(args.kb).read_text(encoding="utf-8")
    if raw != serialize_kb(kb):
        print(f"{args.kb}: valid but not in canonical form", file=sys.stderr)
        return 1
    print(f"{args.kb}: valid canonical knowledge base")
    return 0


def cmd_kbtool_report(args: argparse.Namespace) -> int:
    sheets = _sheets_from_paths(args.sheets)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sheet in sheets:
        prob = render_probability_csv(probability_table(sheet))
        eff = render_effect_csv(certainty_effect_table(sheet))
        (out_dir / f"{sheet.anomaly_id}_probability.csv").write_text(prob, encoding="utf-8")
        (out_dir / f"{sheet.anomaly_id}_effect.csv").write_text(eff, encoding="utf-8")
        print(f"wrote {sheet.anomaly_id}_probability.csv and {sheet.anomaly_id}_effect.csv")
    return 0


# ---------------------------------------------------------------------------
# diagnose


def _interactive_answer(prompt: str) -> str:
    print(prompt, end="", flush=True)
    line = sys.stdin.readline()
    if line == "":
        raise CliError("input ended before the interview was over")
    return line.strip()


def run_interactive(kb: KnowledgeBase, anomaly_id: str) -> Diagnosis:
    session = Session.start(kb, anomaly_id)
    while True:
        question = session.next_question()
        if question is None:
            break
        if question.kind == "certainty":
            hint = "0-100"
        elif question.kind == "categorical":
            hint = "/".join(question.allowed or ())
        else:
            hint = question.unit or "number"
        raw = _interactive_answer(f"{question.prompt} [{hint}]: ")
        if question.kind == "numeric":
            try:
                value = float(raw)
            except ValueError:
                print(f"not a number: {raw!r}", file=sys.stderr)
                continue
        elif question.kind == "certainty":
            try:
                value = int(raw)
            except ValueError:
                print(f"certainty answers are whole numbers 0-100, got {raw!r}", file=sys.stderr)
                continue
        else:
            value = raw
        try:
            session.submit_answer(question.id, value)
        except SessionError as e:
            print(str(e), file=sys.stderr)
    return session.finalize()


def cmd_diagnose(args: argparse.Namespace) -> int:
    kb = _load_kb_arg(args.kb)
    if not kb.has_anomaly(args.anomaly):
        known = ", ".join(a.id for a in kb.anomalies)
        raise CliError(f"unknown anomaly {args.anomaly!r} (knowledge base has: {known})")
    if args.script:
        try:
            script = json.loads(_read_text(args.script, "answer script"))
        except json.JSONDecodeError as e:
            raise CliError(f"answer script {args.script} is not valid JSON: {e}") from None
        try:
            diagnosis = run_script(kb, args.anomaly, script)
        except SessionError as e:
            raise CliError(str(e)) from None
    else:
        diagnosis = run_interactive(kb, args.anomaly)
    if args.trace:
        for rule_id, cf in diagnosis.fired_rules:
            print(f"fired {rule_id}: {cf:.4f}", file=sys.stderr)
    print(verdict_line(args.anomaly, diagnosis))
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args: argparse.Namespace) -> int:
    kb = _load_kb_arg(args.kb)
    records = load_record_set(args.records)
    batch = run_batch(kb, records)
    for record_id, message in batch.errors:
        print(f"record {record_id}: {message}", file=sys.stderr)
    report = emit_report(kb, batch)
    Path(args.report_out).write_text(report, encoding="utf-8")
    print(f"wrote {args.report_out}")
    if args.errorbar_out:
        Path(args.errorbar_out).write_text(emit_errorbar_data(kb, batch), encoding="utf-8")
        print(f"wrote {args.errorbar_out}")
    ok = len(batch.outcomes)
    print(f"replayed {ok} records ({len(batch.errors)} failed)")
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    kb = _load_kb_arg(args.kb)
    store_dir = args.store_dir or os.environ.get("CCHAIN_STORE_DIR")
    if store_dir is None:
        raise CliError("serve needs --store-dir (or the CCHAIN_STORE_DIR variable)")
    static_dir = None
    if args.static_dir:
        if not Path(args.static_dir).is_dir():
            raise CliError(f"static directory not found: {args.static_dir}")
        static_dir = args.static_dir
    app = create_app(kb, SessionStore(store_dir), static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    kbtool = sub.add_parser("kbtool", help="build, validate and report on knowledge bases")
    kbsub = kbtool.add_subparsers(dest="kbtool_command", required=True)

    p = kbsub.add_parser("build", help="assemble a knowledge base from CSV sheets")
    p.add_argument("--sheets", required=True, nargs="+",
                   help="questionnaire CSVs in order, or a directory of them")
    p.add_argument("--cutoffs", required=True, help="expert cut-off CSV")
    p.add_argument("--scaffold", help="optional scaffold JSON (profile questions, facts, extra rules)")
    p.add_argument("--out", required=True, help="output knowledge base JSON path")
    p.set_defaults(func=cmd_kbtool_build)

    p = kbsub.add_parser("validate", help="check a knowledge base file")
    p.add_argument("kb", help="knowledge base JSON path")
    p.set_defaults(func=cmd_kbtool_validate)

    p = kbsub.add_parser("report", help="write probability and certainty-effect tables")
    p.add_argument("--sheets", required=True, nargs="+",
                   help="questionnaire CSVs in order, or a directory of them")
    p.add_argument("--out-dir", required=True, help="directory for the CSV tables")
    p.set_defaults(func=cmd_kbtool_report)

    p = sub.add_parser("diagnose", help="run one interview and print the verdict")
    p.add_argument("--kb", help="knowledge base JSON (default: the packaged demo)")
    p.add_argument("--anomaly", required=True, help="goal anomaly id")
    p.add_argument("--script", help="answer script JSON; omit for an interactive session")
    p.add_argument("--trace", action="store_true", help="print fired rules to stderr")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("evaluate", help="replay a record set and summarise the outcomes")
    p.add_argument("--kb", help="knowledge base JSON (default: the packaged demo)")
    p.add_argument("--records", required=True, help="record-set directory (with manifest.csv)")
    p.add_argument("--report-out", required=True, help="summary CSV output path")
    p.add_argument("--errorbar-out", help="error-bar CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--kb", help="knowledge base JSON (default: the packaged demo)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--store-dir", help="session log directory (default: $CCHAIN_STORE_DIR)")
    p.add_argument("--static-dir", help="serve this directory at / (a browser front end)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        AuthoringError,
        KbError,
        HarnessError,
        StoreError,
        SessionError,
        CertaintyRangeError,
        UndefinedCombinationError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
