"""Deadline bookkeeping: stage timers and mute expiry as durable events.

The scheduler holds at most one armed deadline per (case, kind). Firing
hands a timer event to a dispatcher callback; stale fires (the case moved
on since arming) are dropped silently. Durability comes from
:meth:`DeadlineScheduler.recover`, which re-derives every deadline from
the event store, so nothing here needs its own persistence.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable

from .model import DeadlineKind, MediationCase, MediationConfig

log = logging.getLogger(__name__)

VIRTUAL_TICK_SECONDS = 1
WALL_TICK_SECONDS = 15


class Clock:
    """Time source abstraction so engine logic never reads the wall clock."""

    def now(self) -> datetime:
        raise NotImplementedError


class WallClock(Clock):
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class VirtualClock(Clock):
    """Controllable clock for simulations and tests."""

    def __init__(self, start: datetime | None = None):
        self._now = start or datetime(2025, 1, 1, tzinfo=timezone.utc)

    def now(self) -> datetime:
        return self._now

    def advance(self, seconds: float) -> datetime:
        self._now = self._now + timedelta(seconds=seconds)
        return self._now

    def advance_to(self, instant: datetime) -> datetime:
        if instant > self._now:
            self._now = instant
        return self._now


@dataclass(frozen=True)
class Deadline:
    case_id: str
    kind: DeadlineKind
    at: datetime
    armed_for_version: int


class DeadlineScheduler:
    """Arms, cancels, and fires deadlines; safe to call from any thread."""

    def __init__(self, dispatch: Callable[[Deadline], bool]):
        """``dispatch`` applies a due deadline; it returns False for a stale
        drop and raises for delivery faults (which requeue the deadline)."""
        self._dispatch = dispatch
        self._armed: dict[tuple[str, DeadlineKind], Deadline] = {}
        self._lock = threading.Lock()

    def arm(self, deadline: Deadline) -> None:
        """Arm or replace the deadline of this kind for the case."""
        with self._lock:
            self._armed[(deadline.case_id, deadline.kind)] = deadline

    def cancel(self, case_id: str, kind: DeadlineKind) -> None:
        """No-op if nothing of that kind is armed."""
        with self._lock:
            self._armed.pop((case_id, kind), None)

    def armed(self) -> list[Deadline]:
        with self._lock:
            return sorted(
                self._armed.values(), key=lambda d: (d.at, d.case_id, d.kind.value)
            )

    def fire_due(self, now: datetime) -> int:
        """Apply every due deadline in (at, case, kind) order.

        Each due deadline is removed before dispatch; on a delivery fault it
        is re-armed so the next tick retries (appends are idempotent via
        expected_version, so at-least-once delivery is safe). Returns the
        number of deadlines that were applied (stale drops excluded).
        """
        due = [d for d in self.armed() if d.at <= now]
        applied = 0
        for deadline in due:
            with self._lock:
                current = self._armed.get((deadline.case_id, deadline.kind))
                if current is not deadline:
                    continue  # re-armed concurrently; the newer one wins
                del self._armed[(deadline.case_id, deadline.kind)]
            try:
                if self._dispatch(deadline):
                    applied += 1
            except Exception:
                log.exception(
                    "deadline delivery failed for %s/%s; will retry",
                    deadline.case_id,
                    deadline.kind.value,
                )
                self.arm(deadline)
        return applied

    def recover(self, open_cases: Iterable[tuple[MediationCase, MediationConfig]]) -> int:
        """Re-arm the next deadline for every open case; idempotent."""
        from . import engine

        count = 0
        for case, config in open_cases:
            pending = engine.next_deadline(case, config)
            if pending is None:
                continue
            self.arm(
                Deadline(
                    case_id=case.case_id,
                    kind=pending.kind,
                    at=pending.at,
                    armed_for_version=case.version,
                )
            )
            count += 1
        return count


class Ticker:
    """Background thread driving fire_due against a wall clock."""

    def __init__(self, scheduler: DeadlineScheduler, clock: Clock, interval: float = WALL_TICK_SECONDS):
        self._scheduler = scheduler
        self._clock = clock
        self._interval = interval
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="deadline-ticker", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while not self._stop.is_set():
            self._scheduler.fire_due(self._clock.now())
            self._stop.wait(self._interval)

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)
