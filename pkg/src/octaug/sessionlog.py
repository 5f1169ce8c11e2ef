"""Append-only session event logs.

One grading session is one JSONL file: one event per line with stable field
names (seq, time, kind, item_index, verdict).  The session state is defined
as the fold of its events, so a log replays to exactly the state the
service held in memory, at every prefix.  Writes are flushed and fsynced
before the service acknowledges them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

STARTED = "started"
VIEWED = "viewed"
VERDICT = "verdict"
FINISHED = "finished"
KINDS = (STARTED, VIEWED, VERDICT, FINISHED)

VERDICT_VALUES = ("original", "modified")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    time: str
    kind: str
    item_index: int | None = None
    verdict: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind: {self.kind}")
        if (self.verdict is not None) != (self.kind == VERDICT):
            raise ValueError("verdict field present iff kind is 'verdict'")
        if self.verdict is not None and self.verdict not in VERDICT_VALUES:
            raise ValueError(f"invalid verdict: {self.verdict}")

    def to_line(self) -> str:
        d = {
            "seq": self.seq,
            "time": self.time,
            "kind": self.kind,
            "item_index": self.item_index,
            "verdict": self.verdict,
        }
        d.update(self.extra)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_line(cls, line: str) -> "SessionEvent":
        d = json.loads(line)
        core = {k: d.pop(k) for k in ("seq", "time", "kind", "item_index", "verdict")}
        return cls(
            seq=core["seq"],
            time=core["time"],
            kind=core["kind"],
            item_index=core["item_index"],
            verdict=core["verdict"],
            extra=d,
        )


@dataclass
class SessionState:
    """Fold of a session's events."""

    verdicts: dict[int, str] = field(default_factory=dict)
    cursor: int = 0
    finished: bool = False

    def apply(self, event: SessionEvent) -> None:
        if event.kind == VIEWED:
            self.cursor = event.item_index
        elif event.kind == VERDICT:
            self.verdicts[event.item_index] = event.verdict  # last write wins
        elif event.kind == FINISHED:
            self.finished = True


def replay(events: list[SessionEvent]) -> SessionState:
    state = SessionState()
    for ev in events:
        state.apply(ev)
    return state


@dataclass
class SessionLog:
    """A parsed session log plus its identifying header fields."""

    session_id: str
    grader_id: str
    study_id: str
    item_count: int
    events: list[SessionEvent]

    @property
    def state(self) -> SessionState:
        return replay(self.events)

    @property
    def finished(self) -> bool:
        return any(ev.kind == FINISHED for ev in self.events)

    def final_verdicts(self) -> dict[int, str]:
        return self.state.verdicts


def parse_log_lines(lines: list[str]) -> SessionLog:
    events = [SessionEvent.from_line(ln) for ln in lines if ln.strip()]
    if not events or events[0].kind != STARTED:
        raise ValueError("session log must begin with a 'started' event")
    head = events[0].extra
    prev = -1
    for ev in events:
        if ev.seq <= prev:
            raise ValueError(f"event seq not strictly increasing at seq={ev.seq}")
        prev = ev.seq
    return SessionLog(
        session_id=head["session_id"],
        grader_id=head["grader_id"],
        study_id=head["study_id"],
        item_count=head["item_count"],
        events=events,
    )


def load_session_log(path: str | os.PathLike) -> SessionLog:
    return parse_log_lines(Path(path).read_text(encoding="utf-8").splitlines())


class EventLogWriter:
    """Append-only writer; every append is flushed and fsynced before return."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._fh = open(self.path, "a", encoding="utf-8")
        self._next_seq = 0

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def set_next_seq(self, seq: int) -> None:
        self._next_seq = seq

    def append(
        self,
        kind: str,
        item_index: int | None = None,
        verdict: str | None = None,
        **extra,
    ) -> SessionEvent:
        ev = SessionEvent(
            seq=self._next_seq,
            time=utc_now_iso(),
            kind=kind,
            item_index=item_index,
            verdict=verdict,
            extra=extra,
        )
        self._fh.write(ev.to_line() + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._next_seq += 1
        return ev

    def close(self) -> None:
        self._fh.close()
