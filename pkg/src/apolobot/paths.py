"""Exhaustive enumeration of every workflow path to a terminal state.

Used as the oracle for the workflow graph: text payloads are abstracted
away and time is symbolic, so each path is just the sequence of event
kinds that drives a fresh case from the first waiting stage to a
terminal state.
"""

from __future__ import annotations

from datetime import datetime, timezone
from typing import NamedTuple

from . import engine
from .model import (
    CaseState,
    CaseEvent,
    ClosureReason,
    EventKind,
    MediationCase,
    MediationConfig,
    OpenCommand,
)

_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)

#: Deterministic probe order per stage: stakeholder choices first, then the
#: universal closers (stage timeout, mute expiry, moderator cancel).
_PLACEHOLDER_TEXT = "*"


class TerminalPath(NamedTuple):
    events: tuple[EventKind, ...]
    terminal_state: CaseState
    closure_reason: ClosureReason


def _fresh_case(config: MediationConfig, review_request: bool) -> MediationCase:
    command = OpenCommand(
        case_id="probe",
        community_id="probe",
        offender_id="offender",
        victim_id="victim",
        moderator_id="moderator",
        invoker_roles=frozenset(config.moderator_role_ids) or frozenset({"mod"}),
        duration="365d",  # symbolic: mute expiry is probed as an explicit event
        reason="probe",
        review_request=review_request,
    )
    case, _ = engine.open_case(command, config, _EPOCH)
    return case


def _candidate_events(state: CaseState) -> tuple[EventKind, ...]:
    return engine.STAGE_EVENTS[state] + engine.UNIVERSAL_EVENTS


def _probe_event(case: MediationCase, kind: EventKind) -> CaseEvent:
    payload: dict = {}
    if kind in (EventKind.VICTIM_REQUESTED, EventKind.OFFENDER_APOLOGIZED):
        payload = {"text": _PLACEHOLDER_TEXT}
    elif kind is EventKind.STAGE_TIMED_OUT:
        payload = {"stage": case.state.value}
    elif kind is EventKind.MODERATOR_CANCELLED:
        payload = {"note": _PLACEHOLDER_TEXT}
    return CaseEvent(
        event_seq=case.version + 1,
        occurred_at=_EPOCH,
        actor=_PLACEHOLDER_TEXT,
        kind=kind,
        payload=payload,
    )


def enumerate_terminal_paths(
    config: MediationConfig,
    review_request: bool = False,
    max_depth: int = 16,
) -> list[TerminalPath]:
    """All legal event sequences from the first stage to a terminal state.

    The result is sorted (event tuple, then reason) so two enumerations of
    the same graph compare equal. Raises if ``max_depth`` cannot cover the
    longest path (which grows with ``config.max_attempts``).
    """
    if max_depth < 8:
        raise ValueError("max_depth must be >= 8 to cover the shortest full path")
    results: list[TerminalPath] = []
    root = _fresh_case(config, review_request)

    def walk(case: MediationCase, prefix: tuple[EventKind, ...]) -> None:
        if case.terminal:
            results.append(
                TerminalPath(prefix, case.state, case.closure.reason)
            )
            return
        if len(prefix) >= max_depth:
            raise ValueError(
                f"path {prefix} exceeds max_depth={max_depth}; "
                "raise max_depth to cover config.max_attempts"
            )
        for kind in _candidate_events(case.state):
            nxt, _ = engine.transition(case, config, _probe_event(case, kind))
            walk(nxt, prefix + (kind,))

    walk(root, ())
    results.sort(key=lambda p: (tuple(k.value for k in p.events), p.closure_reason.value))
    return results


def restored_paths(paths: list[TerminalPath]) -> list[TerminalPath]:
    return [p for p in paths if p.terminal_state is CaseState.RESOLVED_RESTORED]
