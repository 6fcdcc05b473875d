"""Append-only event log with newline-delimited JSON persistence and
periodic snapshots.

Sequence numbers start at 1 and increase without gaps; a gap detected on
load is treated as corruption. Subscribers (the API gateway's streams)
are notified synchronously after each append, inside the single-writer
section, so delivery order always equals log order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from motorlance.errors import PersistenceError

SNAPSHOT_INTERVAL_DEFAULT = 1000


@dataclass(frozen=True)
class Event:
    seq: int
    ts: float
    kind: str
    payload: dict

    def to_doc(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_doc(cls, doc: dict) -> "Event":
        return cls(
            seq=int(doc["seq"]),
            ts=float(doc["ts"]),
            kind=str(doc["kind"]),
            payload=dict(doc["payload"]),
        )


class EventLog:
    """In-memory ordered log, optionally mirrored to an NDJSON file."""

    def __init__(self, events: list | None = None, seq0: int = 0):
        self.events: list = list(events or [])
        self._seq0 = seq0  # last seq already persisted elsewhere (snapshots)
        self._subscribers: list = []
        if self.events:
            validate_sequence(self.events, start=self.events[0].seq)

    @property
    def last_seq(self) -> int:
        return self.events[-1].seq if self.events else self._seq0

    def next_seq(self) -> int:
        return self.last_seq + 1

    def commit(self, event: Event) -> Event:
        """Append a pre-built event (its seq must be the next one) and
        notify subscribers. Callers that mutate state keyed to the event
        build it first, apply it, then commit, so every observer of the
        committed event also sees its effect."""
        if event.seq != self.next_seq():
            raise PersistenceError(
                f"commit out of order: seq {event.seq} after {self.last_seq}"
            )
        self.events.append(event)
        for callback in list(self._subscribers):
            callback(event)
        return event

    def append(self, kind: str, payload: dict, ts: float) -> Event:
        return self.commit(
            Event(seq=self.next_seq(), ts=ts, kind=kind, payload=payload)
        )

    def since(self, seq: int) -> list:
        """Events with sequence numbers strictly greater than ``seq``."""
        if not self.events:
            return []
        first = self.events[0].seq
        idx = max(0, seq - first + 1)
        return self.events[idx:]

    def subscribe(self, callback) -> None:
        self._subscribers.append(callback)

    def unsubscribe(self, callback) -> None:
        if callback in self._subscribers:
            self._subscribers.remove(callback)


def validate_sequence(events: list, start: int = 1) -> None:
    expected = start
    for event in events:
        if event.seq != expected:
            raise PersistenceError(
                f"event log corrupt: expected seq {expected}, found {event.seq}"
            )
        expected += 1


def dump_events(events: list, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_doc(), separators=(",", ":")) + "\n")


def load_events(path: str | Path) -> list:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(Event.from_doc(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise PersistenceError(f"{path}:{lineno}: bad event record: {exc}") from exc
    if events:
        validate_sequence(events, start=events[0].seq)
    return events


class FileStore:
    """Directory-backed persistence: ``events.ndjson`` plus ``snapshot.json``.

    A snapshot (full state document and the last applied sequence number)
    is written every ``snapshot_interval`` events to bound replay time.
    """

    def __init__(self, directory: str | Path, snapshot_interval: int = SNAPSHOT_INTERVAL_DEFAULT):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.events_path = self.directory / "events.ndjson"
        self.snapshot_path = self.directory / "snapshot.json"
        self.snapshot_interval = snapshot_interval
        self._fh = None

    def attach(self, log: EventLog, snapshot_fn) -> None:
        """Mirror appends from ``log`` to disk; ``snapshot_fn()`` must return
        the full-state document to store alongside the sequence number.

        Events already in the log but not yet on disk (setup emitted
        before attaching) are backfilled first."""
        on_disk = load_events(self.events_path) if self.events_path.exists() else []
        last_on_disk = on_disk[-1].seq if on_disk else 0
        self._fh = open(self.events_path, "a", encoding="utf-8")
        for event in log.events:
            if event.seq > last_on_disk:
                self._fh.write(json.dumps(event.to_doc(), separators=(",", ":")) + "\n")
        self._fh.flush()

        def on_event(event: Event):
            try:
                self._fh.write(json.dumps(event.to_doc(), separators=(",", ":")) + "\n")
                self._fh.flush()
            except OSError as exc:  # pragma: no cover - disk failure
                raise PersistenceError(f"cannot append event: {exc}") from exc
            if event.seq % self.snapshot_interval == 0:
                self.write_snapshot(snapshot_fn(), event.seq)

        log.subscribe(on_event)

    def write_snapshot(self, state_doc: dict, last_seq: int) -> None:
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"last_seq": last_seq, "state": state_doc}, fh)
        os.replace(tmp, self.snapshot_path)

    def load(self) -> tuple:
        """Returns (snapshot_doc_or_None, snapshot_seq, tail_events)."""
        snapshot_doc, snapshot_seq = None, 0
        if self.snapshot_path.exists():
            try:
                with open(self.snapshot_path, "r", encoding="utf-8") as fh:
                    raw = json.load(fh)
                snapshot_doc = raw["state"]
                snapshot_seq = int(raw["last_seq"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise PersistenceError(f"snapshot corrupt: {exc}") from exc
        tail = []
        if self.events_path.exists():
            all_events = load_events(self.events_path)
            if all_events and all_events[0].seq != 1:
                raise PersistenceError(
                    f"event log corrupt: first seq {all_events[0].seq}, expected 1"
                )
            tail = [e for e in all_events if e.seq > snapshot_seq]
        return snapshot_doc, snapshot_seq, tail

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
