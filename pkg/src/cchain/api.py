"""HTTP service around the diagnosis engine.

All payloads are JSON with lower_snake_case keys; certainty degrees travel
as fractions in [0, 1].  Mutations are appended to the session log before
they are acknowledged, so a restarted server picks sessions up where they
stopped.  In strict mode (the default) only the pending question may be
answered; ``?strict=false`` allows answering any unanswered question.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .engine import (
    AlreadyAnsweredError,
    AnswerValueError,
    Diagnosis,
    NothingToUndoError,
    ScriptUnderrunError,
    Session,
    SessionStoppedError,
    UnknownQuestionError,
)
from .kb import KnowledgeBase, UnknownAnomalyError
from .store import CorruptLogError, SessionNotFoundError, SessionStore


class CreateSessionBody(BaseModel):
    anomaly: str


class AnswerBody(BaseModel):
    question_id: str
    value: Any


class FinalizeBody(BaseModel):
    early: bool = False


def diagnosis_json(diagnosis: Diagnosis) -> dict:
    return {
        "anomaly": diagnosis.anomaly_id,
        "certainty_degree": diagnosis.certainty_degree,
        "display_percent": diagnosis.display_percent,
        "verdict": diagnosis.verdict.value,
        "no_evidence": diagnosis.no_evidence,
        "stopped_early": diagnosis.stopped_early,
        "fired_rules": [{"rule_id": rid, "cf": cf} for rid, cf in diagnosis.fired_rules],
    }


def session_view(kb: KnowledgeBase, session_id: str, session: Session) -> dict:
    question = session.next_question()
    answered, total = session.progress()
    cutoff = kb.cutoff(session.anomaly_id)
    current = session.diagnosis()
    anomaly = kb.anomaly(session.anomaly_id)
    pending = None
    if question is not None:
        pending = {
            "id": question.id,
            "prompt": question.prompt,
            "kind": question.kind,
            "unit": question.unit,
            "allowed": list(question.allowed) if question.allowed else None,
        }
        if question.kind == "certainty":
            pending["range"] = {"min": 0, "max": 100}
    return {
        "session_id": session_id,
        "anomaly": {"id": anomaly.id, "name": anomaly.name},
        "stopped": session.stopped,
        "stopped_early": session.stopped_early,
        "progress": {"answered": answered, "total": total},
        "pending_question": pending,
        "certainty_degree": current.certainty_degree,
        "display_percent": current.display_percent,
        "no_evidence": current.no_evidence,
        "verdict_preview": current.verdict.value,
        "cutoff": {"tnd": cutoff.tnd, "tpd": cutoff.tpd},
        "answered_questions": [
            {"question_id": e["question_id"], "value": e["value"]}
            for e in _effective_answers(session)
        ],
        "diagnosis": diagnosis_json(current) if session.stopped else None,
    }


def _effective_answers(session: Session) -> list[dict]:
    from .engine import effective_answer_events

    return effective_answer_events(session.events)


def create_app(
    kb: KnowledgeBase, store: SessionStore, static_dir=None
) -> FastAPI:
    app = FastAPI(title="cchain diagnosis service")
    sessions: dict[str, Session] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with registry_lock:
            return locks.setdefault(session_id, threading.Lock())

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is not None:
            return session
        try:
            session, _warnings = store.recover(kb, session_id)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        except CorruptLogError as e:
            raise HTTPException(status_code=500, detail=str(e))
        with registry_lock:
            sessions.setdefault(session_id, session)
            return sessions[session_id]

    @app.get("/anomalies")
    def list_anomalies() -> dict:
        return {"anomalies": [{"id": a.id, "name": a.name} for a in kb.anomalies]}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        try:
            kb.anomaly(body.anomaly)
        except UnknownAnomalyError as e:
            raise HTTPException(status_code=404, detail=str(e))
        session_id, session = store.create(kb, body.anomaly)
        with registry_lock:
            sessions[session_id] = session
        return session_view(kb, session_id, session)

    @app.get("/sessions/{session_id}")
    def show_session(session_id: str) -> dict:
        session = get_session(session_id)
        with session_lock(session_id):
            return session_view(kb, session_id, session)

    @app.post("/sessions/{session_id}/answers")
    def answer(
        session_id: str,
        body: AnswerBody,
        strict: bool = Query(default=True),
    ) -> dict:
        session = get_session(session_id)
        with session_lock(session_id):
            if strict:
                pending = session.next_question()
                if pending is None or pending.id != body.question_id:
                    raise HTTPException(
                        status_code=409,
                        detail=f"{body.question_id!r} is not the pending question"
                        + (f" ({pending.id!r} is)" if pending else " (interview is over)"),
                    )
            try:
                session.submit_answer(body.question_id, body.value)
            except (AnswerValueError, UnknownQuestionError, ScriptUnderrunError) as e:
                raise HTTPException(status_code=422, detail=str(e))
            except (AlreadyAnsweredError, SessionStoppedError) as e:
                raise HTTPException(status_code=409, detail=str(e))
            store.sync(session_id, session)
            return session_view(kb, session_id, session)

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str) -> dict:
        session = get_session(session_id)
        with session_lock(session_id):
            try:
                session.undo()
            except (NothingToUndoError, SessionStoppedError) as e:
                raise HTTPException(status_code=409, detail=str(e))
            store.sync(session_id, session)
            return session_view(kb, session_id, session)

    @app.post("/sessions/{session_id}/finalize")
    def finalize(session_id: str, body: FinalizeBody | None = None) -> dict:
        session = get_session(session_id)
        with session_lock(session_id):
            early = bool(body.early) if body is not None else False
            session.finalize(early=early)
            store.sync(session_id, session)
            return session_view(kb, session_id, session)

    @app.get("/healthz")
    def health() -> Response:
        return Response(content="ok", media_type="text/plain")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
