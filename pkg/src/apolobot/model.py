"""Domain types for apology-mediation cases.

A case is a fold over an append-only event stream. Everything here is an
immutable value; the transition logic lives in :mod:`apolobot.engine`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Mapping

from .errors import BadDuration

SYSTEM_ACTOR = "SYSTEM"

MAX_REASON_LEN = 512
MAX_TEXT_LEN = 1000
MAX_CASE_ID_LEN = 64

_CASE_ID_RE = re.compile(r"^[A-Za-z0-9._~-]{1,64}$")
_DURATION_RE = re.compile(r"^([0-9]+)(s|m|h|d)$", re.IGNORECASE)

_UNIT_SECONDS = {"s": 1, "m": 60, "h": 3600, "d": 86400}
MAX_DURATION_SECONDS = 365 * 86400


def parse_duration(text: str) -> int:
    """Parse a mute duration like ``45m`` or ``7D`` into seconds.

    Grammar: ``^[0-9]+(s|m|h|d)$``, case-insensitive, 1s..365d inclusive.
    """
    m = _DURATION_RE.match(text.strip()) if isinstance(text, str) else None
    if not m:
        raise BadDuration(f"duration {text!r} does not match <number><s|m|h|d>")
    seconds = int(m.group(1)) * _UNIT_SECONDS[m.group(2).lower()]
    if seconds < 1 or seconds > MAX_DURATION_SECONDS:
        raise BadDuration(f"duration {text!r} outside 1s..365d")
    return seconds


def valid_case_id(case_id: str) -> bool:
    return bool(_CASE_ID_RE.match(case_id))


def to_rfc3339(dt: datetime) -> str:
    """Render a UTC instant as RFC 3339 with a ``Z`` suffix."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def from_rfc3339(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(timezone.utc)


class CaseState(str, Enum):
    AWAIT_VICTIM_REQUEST = "await_victim_request"
    AWAIT_REQUEST_REVIEW = "await_request_review"
    AWAIT_OFFENDER_APOLOGY = "await_offender_apology"
    AWAIT_RESPONSE_REVIEW = "await_response_review"
    AWAIT_VICTIM_VERDICT = "await_victim_verdict"
    AWAIT_UNMUTE = "await_unmute"
    RESOLVED_RESTORED = "resolved_restored"
    CLOSED_PUNITIVE = "closed_punitive"

    @property
    def terminal(self) -> bool:
        return self in (CaseState.RESOLVED_RESTORED, CaseState.CLOSED_PUNITIVE)


#: Waiting stages in workflow order; furthest_stage is monotone over this.
STAGE_ORDER: tuple[CaseState, ...] = (
    CaseState.AWAIT_VICTIM_REQUEST,
    CaseState.AWAIT_REQUEST_REVIEW,
    CaseState.AWAIT_OFFENDER_APOLOGY,
    CaseState.AWAIT_RESPONSE_REVIEW,
    CaseState.AWAIT_VICTIM_VERDICT,
    CaseState.AWAIT_UNMUTE,
)

_STAGE_INDEX = {state: i for i, state in enumerate(STAGE_ORDER)}


def stage_index(state: CaseState) -> int:
    """Position of a waiting stage in the workflow order (0-based)."""
    return _STAGE_INDEX[state]


class EventKind(str, Enum):
    CASE_OPENED = "case_opened"
    VICTIM_DECLINED = "victim_declined"
    VICTIM_REQUESTED = "victim_requested"
    REQUEST_APPROVED = "request_approved"
    REQUEST_REJECTED = "request_rejected"
    OFFENDER_DECLINED = "offender_declined"
    OFFENDER_APOLOGIZED = "offender_apologized"
    RESPONSE_APPROVED = "response_approved"
    RESPONSE_REJECTED = "response_rejected"
    VICTIM_ACCEPTED = "victim_accepted"
    VICTIM_REJECTED = "victim_rejected"
    UNMUTE_EXECUTED = "unmute_executed"
    STAGE_TIMED_OUT = "stage_timed_out"
    MUTE_ELAPSED = "mute_elapsed"
    MODERATOR_CANCELLED = "moderator_cancelled"
    SATISFACTION_RECORDED = "satisfaction_recorded"


class ClosureReason(str, Enum):
    VICTIM_DECLINED = "victim_declined"
    VICTIM_TIMEOUT = "victim_timeout"
    REQUEST_REJECTED = "request_rejected"
    REQUEST_REVIEW_TIMEOUT = "request_review_timeout"
    OFFENDER_DECLINED = "offender_declined"
    OFFENDER_TIMEOUT = "offender_timeout"
    RESPONSE_REJECTED_FINAL = "response_rejected_final"
    RESPONSE_REVIEW_TIMEOUT = "response_review_timeout"
    VICTIM_REJECTED = "victim_rejected"
    VERDICT_TIMEOUT = "verdict_timeout"
    UNMUTE_WINDOW_ELAPSED = "unmute_window_elapsed"
    MUTE_ELAPSED = "mute_elapsed"
    MODERATOR_CANCELLED = "moderator_cancelled"
    RESTORED = "restored"


#: Stage-specific closure reason when that stage's timer expires.
STAGE_TIMEOUT_REASON: dict[CaseState, ClosureReason] = {
    CaseState.AWAIT_VICTIM_REQUEST: ClosureReason.VICTIM_TIMEOUT,
    CaseState.AWAIT_REQUEST_REVIEW: ClosureReason.REQUEST_REVIEW_TIMEOUT,
    CaseState.AWAIT_OFFENDER_APOLOGY: ClosureReason.OFFENDER_TIMEOUT,
    CaseState.AWAIT_RESPONSE_REVIEW: ClosureReason.RESPONSE_REVIEW_TIMEOUT,
    CaseState.AWAIT_VICTIM_VERDICT: ClosureReason.VERDICT_TIMEOUT,
    CaseState.AWAIT_UNMUTE: ClosureReason.UNMUTE_WINDOW_ELAPSED,
}


class EffectKind(str, Enum):
    MUTE_OFFENDER = "mute_offender"
    CREATE_VICTIM_THREAD = "create_victim_thread"
    PROMPT_VICTIM_REQUEST = "prompt_victim_request"
    CREATE_OFFENDER_THREAD = "create_offender_thread"
    PROMPT_OFFENDER_APOLOGY = "prompt_offender_apology"
    FORWARD_APOLOGY_TO_VICTIM = "forward_apology_to_victim"
    POST_LOG_UPDATE = "post_log_update"
    OFFER_UNMUTE_BUTTON = "offer_unmute_button"
    UNMUTE_OFFENDER = "unmute_offender"
    ARCHIVE_THREADS = "archive_threads"
    ARM_DEADLINE = "arm_deadline"
    CANCEL_DEADLINE = "cancel_deadline"


#: Effects that land in the moderator-facing log thread.
LOG_EFFECTS = frozenset({EffectKind.POST_LOG_UPDATE, EffectKind.OFFER_UNMUTE_BUTTON})

#: Effects routed to the deadline scheduler instead of the chat platform.
SCHEDULER_EFFECTS = frozenset({EffectKind.ARM_DEADLINE, EffectKind.CANCEL_DEADLINE})


@dataclass(frozen=True)
class Effect:
    """Adapter-agnostic side-effect instruction emitted by a transition."""

    kind: EffectKind
    params: Mapping[str, Any] = field(default_factory=dict)

    def __repr__(self) -> str:  # compact, stable ordering for diffs
        inner = ", ".join(f"{k}={self.params[k]!r}" for k in sorted(self.params))
        return f"Effect({self.kind.value}{', ' + inner if inner else ''})"


class DeadlineKind(str, Enum):
    STAGE_TIMEOUT = "stage-timeout"
    MUTE_ELAPSED = "mute-elapsed"


@dataclass(frozen=True)
class CaseEvent:
    """One appended fact about a case.

    ``payload`` keys depend on ``kind``; see the per-kind validation in
    :func:`apolobot.engine.validate_event_payload`.
    """

    event_seq: int
    occurred_at: datetime
    actor: str
    kind: EventKind
    payload: Mapping[str, Any] = field(default_factory=dict)

    def with_seq(self, seq: int) -> "CaseEvent":
        return replace(self, event_seq=seq)


@dataclass(frozen=True)
class ClosureRecord:
    reason: ClosureReason
    furthest_stage: CaseState
    closed_at: datetime


@dataclass(frozen=True)
class MediationConfig:
    """Community policy knobs for the mediation workflow."""

    default_stage_timeout: int = 86400
    max_attempts: int = 1
    auto_unmute: bool = False
    moderator_role_ids: frozenset[str] = frozenset()
    log_channel_id: str = ""
    templates: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.default_stage_timeout <= 0:
            raise ValueError("default_stage_timeout must be > 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class OpenCommand:
    """Validated fields of one mute-with-apology-offer command invocation."""

    case_id: str
    community_id: str
    offender_id: str
    victim_id: str
    moderator_id: str
    invoker_roles: frozenset[str]
    duration: str
    reason: str
    proof_ref: str | None = None
    review_request: bool = False
    case_no: int = 1


@dataclass(frozen=True)
class MediationCase:
    """Current state of one mediation case (a fold of its events)."""

    case_id: str
    case_no: int
    community_id: str
    offender_id: str
    victim_id: str
    moderator_id: str
    mute_duration: int
    mute_until: datetime
    reason: str
    proof_ref: str | None
    review_request: bool
    created_at: datetime
    state: CaseState
    stage_entered_at: datetime
    apology_request: str | None = None
    apology_response: str | None = None
    attempt_count: int = 0
    furthest_stage: CaseState = CaseState.AWAIT_VICTIM_REQUEST
    closure: ClosureRecord | None = None
    satisfaction: tuple[tuple[str, int], ...] = ()
    version: int = 1

    @property
    def terminal(self) -> bool:
        return self.state.terminal

    def advance(self, **changes: Any) -> "MediationCase":
        """Copy with ``changes`` applied, bumping version and furthest_stage."""
        nxt = replace(self, version=self.version + 1, **changes)
        if not nxt.state.terminal and stage_index(nxt.state) > stage_index(nxt.furthest_stage):
            nxt = replace(nxt, furthest_stage=nxt.state)
        return nxt

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready snapshot (snake_case keys, RFC 3339 timestamps)."""
        return {
            "case_id": self.case_id,
            "case_no": self.case_no,
            "community_id": self.community_id,
            "offender_id": self.offender_id,
            "victim_id": self.victim_id,
            "moderator_id": self.moderator_id,
            "mute_duration": self.mute_duration,
            "mute_until": to_rfc3339(self.mute_until),
            "reason": self.reason,
            "proof_ref": self.proof_ref,
            "review_request": self.review_request,
            "created_at": to_rfc3339(self.created_at),
            "state": self.state.value,
            "stage_entered_at": to_rfc3339(self.stage_entered_at),
            "apology_request": self.apology_request,
            "apology_response": self.apology_response,
            "attempt_count": self.attempt_count,
            "furthest_stage": self.furthest_stage.value,
            "closure": None
            if self.closure is None
            else {
                "reason": self.closure.reason.value,
                "furthest_stage": self.closure.furthest_stage.value,
                "closed_at": to_rfc3339(self.closure.closed_at),
            },
            "satisfaction": [
                {"role": role, "rating": rating} for role, rating in self.satisfaction
            ],
            "version": self.version,
        }


def mute_end(created_at: datetime, mute_duration: int) -> datetime:
    return created_at + timedelta(seconds=mute_duration)
