"""Append-only session persistence.

Each session lives in one ``<session_id>.jsonl`` file: one JSON event per
line, appended and flushed before the change is acknowledged.  Recovery
replays the file through the engine.  A truncated final line (interrupted
write) is dropped with a warning and the file repaired; a bad line anywhere
else marks the session corrupt at that line.  Event ids are idempotency
keys: duplicated lines are skipped on replay.
"""

from __future__ import annotations

import json
import os
import re
import uuid
from pathlib import Path
from typing import Sequence

from .engine import EventError, Session, SessionError, check_event_shape
from .kb import KnowledgeBase

SESSION_ID_PATTERN = re.compile(r"^[0-9a-f]{32}$")


class StoreError(Exception):
    """Base class for persistence problems."""


class SessionNotFoundError(StoreError):
    """No stored session has this id."""


class CorruptLogError(StoreError):
    """A session log has a bad line before its end."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}: corrupt at line {line_no}: {reason}")
        self.path = path
        self.line_no = line_no


def new_session_id() -> str:
    return uuid.uuid4().hex


class SessionStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._persisted: dict[str, int] = {}

    def path(self, session_id: str) -> Path:
        if not SESSION_ID_PATTERN.match(session_id):
            raise SessionNotFoundError(f"invalid session id {session_id!r}")
        return self.root / f"{session_id}.jsonl"

    def exists(self, session_id: str) -> bool:
        try:
            return self.path(session_id).is_file()
        except SessionNotFoundError:
            return False

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def sync(self, session_id: str, session: Session) -> None:
        """Append the session's not-yet-persisted events and flush them."""
        done = self._persisted.get(session_id, 0)
        pending = session.events[done:]
        if not pending:
            return
        with open(self.path(session_id), "a", encoding="utf-8", newline="") as fh:
            for event in pending:
                fh.write(json.dumps(event, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
                fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._persisted[session_id] = len(session.events)

    def create(self, kb: KnowledgeBase, anomaly_id: str) -> tuple[str, Session]:
        session_id = new_session_id()
        session = Session.start(kb, anomaly_id)
        self.sync(session_id, session)
        return session_id, session

    def recover(self, kb: KnowledgeBase, session_id: str) -> tuple[Session, list[str]]:
        """Rebuild a session from its log; returns (session, warnings).

        The final line may be a torn write: it is dropped, reported in the
        warnings, and the file repaired.  Anything else that fails to parse,
        fails schema validation, or replays inconsistently raises
        CorruptLogError naming the first bad line.
        """
        path = self.path(session_id)
        if not path.is_file():
            raise SessionNotFoundError(f"no stored session {session_id!r}")
        raw = path.read_bytes().decode("utf-8")
        lines = raw.split("\n")
        trailing_complete = raw.endswith("\n")
        if trailing_complete:
            lines = lines[:-1]
        warnings: list[str] = []
        events = []
        keep_bytes = 0
        seen_ids: set[str] = set()
        for line_no, line in enumerate(lines, start=1):
            is_last = line_no == len(lines)
            try:
                event = check_event_shape(json.loads(line))
            except (json.JSONDecodeError, EventError) as e:
                if is_last and not trailing_complete:
                    warnings.append(
                        f"dropped torn final line {line_no} of {path.name}; recovered up to the last complete event"
                    )
                    break
                raise CorruptLogError(path, line_no, str(e)) from None
            if event["id"] in seen_ids:
                warnings.append(f"skipped duplicate event id on line {line_no} of {path.name}")
            else:
                seen_ids.add(event["id"])
                events.append((line_no, event))
            keep_bytes += len(line.encode("utf-8")) + 1
        if not events:
            raise SessionNotFoundError(f"stored session {session_id!r} has no events")

        if events[0][1]["type"] != "session_started":
            raise CorruptLogError(path, events[0][0], "log must begin with session_started")
        session = Session(kb, events[0][1]["anomaly"])
        for line_no, event in events:
            try:
                session.apply_event(event)
            except SessionError as e:
                raise CorruptLogError(path, line_no, str(e)) from None

        if warnings and keep_bytes < len(raw.encode("utf-8")):
            with open(path, "r+b") as fh:
                fh.truncate(keep_bytes)
        self._persisted[session_id] = len(session.events)
        return session, warnings

    def forget(self, session_ids: Sequence[str]) -> None:
        for session_id in session_ids:
            self._persisted.pop(session_id, None)
