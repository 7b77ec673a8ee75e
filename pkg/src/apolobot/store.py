"""Durable append-only event log, one NDJSON file per case.

Record schema (one JSON object per line)::

    {"v": 1, "case_id": "...", "seq": 3, "at": "2025-01-02T03:04:05Z",
     "actor": "U1", "kind": "victim_requested", "payload": {"text": "..."}}

``data/cases/<case_id>.ndjson`` holds the stream; ``data/index.ndjson``
accumulates ``{"case_id", "path"}`` entries. The directory scan is the
source of truth on recovery; the index is a convenience copy.

Appends are atomic per call (single write + optional fsync) and
linearizable per case via a per-case mutex. A torn trailing line from a
crash is ignored on read; fold therefore always sees a clean prefix.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterable

from . import engine
from .errors import CorruptSequence, CorruptStream, UnknownCase, VersionConflict
from .model import (
    CaseEvent,
    CaseState,
    EventKind,
    MediationCase,
    MediationConfig,
    from_rfc3339,
    to_rfc3339,
    valid_case_id,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EventRecord:
    case_id: str
    event: CaseEvent
    persisted_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "v": SCHEMA_VERSION,
            "case_id": self.case_id,
            "seq": self.event.event_seq,
            "at": to_rfc3339(self.event.occurred_at),
            "actor": self.event.actor,
            "kind": self.event.kind.value,
            "payload": dict(self.event.payload),
        }


@dataclass(frozen=True)
class CaseSummary:
    case_id: str
    case_no: int
    community_id: str
    offender_id: str
    victim_id: str
    moderator_id: str
    state: CaseState
    created_at: datetime
    closure_reason: str | None
    furthest_stage: CaseState
    version: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "case_no": self.case_no,
            "community_id": self.community_id,
            "offender_id": self.offender_id,
            "victim_id": self.victim_id,
            "moderator_id": self.moderator_id,
            "state": self.state.value,
            "created_at": to_rfc3339(self.created_at),
            "closure_reason": self.closure_reason,
            "furthest_stage": self.furthest_stage.value,
            "version": self.version,
        }


@dataclass(frozen=True)
class Page:
    items: list
    page: int
    page_size: int
    total: int


def fold(config: MediationConfig, case_id: str, events: list[CaseEvent]) -> MediationCase:
    """Rebuild a case by replaying its events; effects are discarded."""
    if not events or events[0].kind is not EventKind.CASE_OPENED:
        raise CorruptStream(f"stream {case_id} does not start with case_opened")
    try:
        case, _ = engine.apply_open(case_id, events[0], config)
        for event in events[1:]:
            if event.event_seq != case.version + 1:
                raise CorruptStream(
                    f"stream {case_id} has seq {event.event_seq} after version {case.version}"
                )
            case, _ = engine.transition(case, config, event)
    except CorruptStream:
        raise
    except Exception as exc:  # IllegalEvent and friends signal tampering
        raise CorruptStream(f"stream {case_id} does not replay: {exc}") from exc
    return case


class EventStore:
    """File-backed store with optimistic concurrency per case."""

    def __init__(
        self,
        data_dir: str | Path,
        config_resolver: Callable[[str], MediationConfig],
        fsync: bool = True,
    ):
        self.data_dir = Path(data_dir)
        self.cases_dir = self.data_dir / "cases"
        self.index_path = self.data_dir / "index.ndjson"
        self.cases_dir.mkdir(parents=True, exist_ok=True)
        self._resolve_config = config_resolver
        self._fsync = fsync
        self._locks: dict[str, threading.Lock] = {}
        self._versions: dict[str, int] = {}
        self._registry_lock = threading.Lock()

    # -- plumbing ------------------------------------------------------------

    def _case_path(self, case_id: str) -> Path:
        return self.cases_dir / f"{case_id}.ndjson"

    def _lock_for(self, case_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(case_id, threading.Lock())

    def _read_lines(self, case_id: str) -> list[dict[str, Any]]:
        path = self._case_path(case_id)
        if not path.exists():
            return []
        raw = path.read_bytes()
        records = []
        lines = raw.split(b"\n")
        for i, line in enumerate(lines):
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    break  # torn trailing write from a crash; drop it
                raise CorruptStream(f"stream {case_id} has a corrupt mid-file record")
            if obj.get("v") != SCHEMA_VERSION:
                raise CorruptStream(
                    f"stream {case_id} carries unknown schema version {obj.get('v')!r}"
                )
            records.append(obj)
        return records

    def _decode(self, obj: dict[str, Any]) -> CaseEvent:
        return CaseEvent(
            event_seq=obj["seq"],
            occurred_at=from_rfc3339(obj["at"]),
            actor=obj["actor"],
            kind=EventKind(obj["kind"]),
            payload=obj.get("payload") or {},
        )

    def _current_version(self, case_id: str) -> int:
        if case_id in self._versions:
            return self._versions[case_id]
        records = self._read_lines(case_id)
        version = records[-1]["seq"] if records else 0
        self._versions[case_id] = version
        return version

    # -- operations ----------------------------------------------------------

    def append(self, case_id: str, expected_version: int, events: list[CaseEvent]) -> int:
        """Append ``events`` atomically; returns the new stream version.

        ``events`` must carry contiguous seq numbers starting at
        ``expected_version + 1`` or the call fails without writing.
        """
        if not valid_case_id(case_id):
            raise ValueError(f"invalid case_id {case_id!r}")
        if not events:
            return expected_version
        for offset, event in enumerate(events):
            if event.event_seq != expected_version + 1 + offset:
                raise CorruptSequence(
                    f"event seq {event.event_seq} does not continue version "
                    f"{expected_version} contiguously"
                )
        with self._lock_for(case_id):
            actual = self._current_version(case_id)
            if actual != expected_version:
                raise VersionConflict(case_id, expected_version, actual)
            if expected_version == 0:
                self._index_add(case_id)
            now = events[-1].occurred_at
            blob = b"".join(
                json.dumps(
                    EventRecord(case_id, event, now).to_dict(),
                    separators=(",", ":"),
                    sort_keys=True,
                ).encode()
                + b"\n"
                for event in events
            )
            path = self._case_path(case_id)
            with open(path, "ab") as fh:
                fh.write(blob)
                fh.flush()
                if self._fsync:
                    os.fsync(fh.fileno())
            new_version = events[-1].event_seq
            self._versions[case_id] = new_version
            return new_version

    def _index_add(self, case_id: str) -> None:
        entry = json.dumps(
            {"case_id": case_id, "path": f"cases/{case_id}.ndjson"}, sort_keys=True
        )
        with open(self.index_path, "a") as fh:
            fh.write(entry + "\n")
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())

    def events(self, case_id: str) -> list[CaseEvent]:
        return [self._decode(obj) for obj in self._read_lines(case_id)]

    def version(self, case_id: str) -> int:
        """Highest persisted event_seq for the case (0 = unknown case)."""
        with self._lock_for(case_id):
            return self._current_version(case_id)

    def load(self, case_id: str) -> tuple[MediationCase, int] | None:
        """Refold the case from disk; None if the stream does not exist."""
        events = self.events(case_id)
        if not events:
            return None
        community = events[0].payload.get("community_id", "")
        case = fold(self._resolve_config(community), case_id, events)
        return case, case.version

    def load_or_raise(self, case_id: str) -> tuple[MediationCase, int]:
        loaded = self.load(case_id)
        if loaded is None:
            raise UnknownCase(case_id)
        return loaded

    def case_ids(self) -> list[str]:
        """All known case ids (directory scan; survives a lost index)."""
        return sorted(p.stem for p in self.cases_dir.glob("*.ndjson"))

    def all_cases(self) -> list[MediationCase]:
        cases = []
        for case_id in self.case_ids():
            loaded = self.load(case_id)
            if loaded:
                cases.append(loaded[0])
        return cases

    def list_cases(
        self,
        community: str | None = None,
        state: str | None = None,
        offender: str | None = None,
        created_after: datetime | None = None,
        created_before: datetime | None = None,
        page: int = 1,
        page_size: int = 50,
    ) -> Page:
        """Filtered, stably-ordered case summaries (created_at, then id)."""
        if page < 1:
            raise ValueError("page is 1-based")
        matches = []
        for case in self.all_cases():
            if community and case.community_id != community:
                continue
            if offender and case.offender_id != offender:
                continue
            if created_after and case.created_at < created_after:
                continue
            if created_before and case.created_at >= created_before:
                continue
            if state and not _state_matches(case, state):
                continue
            matches.append(case)
        matches.sort(key=lambda c: (c.created_at, c.case_id))
        start = (page - 1) * page_size
        items = [_summary(c) for c in matches[start : start + page_size]]
        return Page(items=items, page=page, page_size=page_size, total=len(matches))

    def count_cases(self, community: str) -> int:
        """Cases ever opened in a community (drives update-case-<n> naming)."""
        n = 0
        for case_id in self.case_ids():
            events = self.events(case_id)
            if events and events[0].payload.get("community_id") == community:
                n += 1
        return n


def _state_matches(case: MediationCase, state: str) -> bool:
    if state == "open":
        return not case.terminal
    if state == "terminal":
        return case.terminal
    return case.state.value == state


def _summary(case: MediationCase) -> CaseSummary:
    return CaseSummary(
        case_id=case.case_id,
        case_no=case.case_no,
        community_id=case.community_id,
        offender_id=case.offender_id,
        victim_id=case.victim_id,
        moderator_id=case.moderator_id,
        state=case.state,
        created_at=case.created_at,
        closure_reason=case.closure.reason.value if case.closure else None,
        furthest_stage=case.furthest_stage,
        version=case.version,
    )
