"""Pure transition logic for mediation cases.

Every function here is deterministic and I/O-free: callers hand in the
current case, the community config, and one event; they get back the next
case value plus an ordered list of side-effect instructions. Persistence,
timers, and chat-platform calls happen elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta

from .errors import BadDuration, IllegalEvent, NotModerator, SelfTarget, StaleStage, TerminalCase
from .model import (
    MAX_REASON_LEN,
    MAX_TEXT_LEN,
    STAGE_TIMEOUT_REASON,
    CaseEvent,
    CaseState,
    ClosureReason,
    ClosureRecord,
    DeadlineKind,
    Effect,
    EffectKind,
    EventKind,
    MediationCase,
    MediationConfig,
    OpenCommand,
    mute_end,
    parse_duration,
    valid_case_id,
)

SATISFACTION_ROLES = ("victim", "offender", "moderator")


@dataclass(frozen=True)
class NextDeadline:
    kind: DeadlineKind
    at: datetime


def validate_event_payload(kind: EventKind, payload: dict) -> None:
    """Reject malformed payloads before an event is built or appended."""
    if kind in (EventKind.VICTIM_REQUESTED, EventKind.OFFENDER_APOLOGIZED):
        text = payload.get("text")
        if not isinstance(text, str) or not 1 <= len(text) <= MAX_TEXT_LEN:
            raise ValueError(f"{kind.value} text must be 1..{MAX_TEXT_LEN} chars")
    elif kind is EventKind.STAGE_TIMED_OUT:
        stage = payload.get("stage")
        CaseState(stage)  # raises ValueError on junk
    elif kind is EventKind.SATISFACTION_RECORDED:
        if payload.get("role") not in SATISFACTION_ROLES:
            raise ValueError("satisfaction role must be victim|offender|moderator")
        rating = payload.get("rating")
        if not isinstance(rating, int) or not 1 <= rating <= 5:
            raise ValueError("satisfaction rating must be an integer 1..5")


def open_event(command: OpenCommand, now: datetime) -> CaseEvent:
    """The genesis event (seq 1) recording the command's validated fields."""
    return CaseEvent(
        event_seq=1,
        occurred_at=now,
        actor=command.moderator_id,
        kind=EventKind.CASE_OPENED,
        payload={
            "case_no": command.case_no,
            "community_id": command.community_id,
            "offender_id": command.offender_id,
            "victim_id": command.victim_id,
            "moderator_id": command.moderator_id,
            "duration": command.duration,
            "duration_seconds": parse_duration(command.duration),
            "reason": command.reason,
            "proof_ref": command.proof_ref,
            "review_request": command.review_request,
        },
    )


def validate_command(command: OpenCommand, config: MediationConfig) -> None:
    """Reject a command invocation before anything is persisted."""
    if config.moderator_role_ids and not (command.invoker_roles & config.moderator_role_ids):
        raise NotModerator(f"{command.moderator_id} holds no moderator role")
    if command.offender_id == command.victim_id:
        raise SelfTarget("offender and victim must be different members")
    if not command.offender_id or not command.victim_id:
        raise ValueError("offender and victim are required")
    if not valid_case_id(command.case_id):
        raise ValueError(f"case_id {command.case_id!r} must be 1..64 URL-safe chars")
    if not 1 <= len(command.reason) <= MAX_REASON_LEN:
        raise ValueError(f"reason must be 1..{MAX_REASON_LEN} chars")
    parse_duration(command.duration)  # raises BadDuration


def open_case(
    command: OpenCommand, config: MediationConfig, now: datetime
) -> tuple[MediationCase, list[Effect]]:
    """Validate a command invocation and start a case in the first stage.

    The offender is muted immediately; only the victim's thread is created
    up front; the offender's prompt quotes the victim's request, which
    does not exist yet.
    """
    validate_command(command, config)
    return apply_open(command.case_id, open_event(command, now), config)


def apply_open(
    case_id: str, event: CaseEvent, config: MediationConfig
) -> tuple[MediationCase, list[Effect]]:
    """Fold the genesis event into the initial case (no command re-validation)."""
    if event.kind is not EventKind.CASE_OPENED or event.event_seq != 1:
        raise IllegalEvent("stream must begin with case_opened at seq 1")
    p = event.payload
    now = event.occurred_at
    until = mute_end(now, p["duration_seconds"])
    case = MediationCase(
        case_id=case_id,
        case_no=p["case_no"],
        community_id=p["community_id"],
        offender_id=p["offender_id"],
        victim_id=p["victim_id"],
        moderator_id=p["moderator_id"],
        mute_duration=p["duration_seconds"],
        mute_until=until,
        reason=p["reason"],
        proof_ref=p.get("proof_ref"),
        review_request=bool(p.get("review_request", False)),
        created_at=now,
        state=CaseState.AWAIT_VICTIM_REQUEST,
        stage_entered_at=now,
    )
    opening_log = _log(
        case, "case opened; offender muted, victim asked about an apology request"
    )
    if case.proof_ref:
        opening_log = Effect(
            EffectKind.POST_LOG_UPDATE, {**opening_log.params, "proof_ref": case.proof_ref}
        )
    effects = [
        Effect(EffectKind.MUTE_OFFENDER, {"until": until}),
        Effect(EffectKind.CREATE_VICTIM_THREAD, {}),
        Effect(EffectKind.PROMPT_VICTIM_REQUEST, {}),
        opening_log,
        _arm(case, config),
    ]
    return case, effects


def next_deadline(case: MediationCase, config: MediationConfig) -> NextDeadline | None:
    """Earliest pending deadline for the case, clamped to the mute end.

    Stage timers never outlive the punishment: if the mute elapses first,
    the deadline is the mute end tagged ``mute-elapsed``.
    """
    if case.terminal:
        return None
    stage_deadline = case.stage_entered_at + timedelta(seconds=config.default_stage_timeout)
    if stage_deadline < case.mute_until:
        return NextDeadline(DeadlineKind.STAGE_TIMEOUT, stage_deadline)
    return NextDeadline(DeadlineKind.MUTE_ELAPSED, case.mute_until)


def transition(
    case: MediationCase, config: MediationConfig, event: CaseEvent
) -> tuple[MediationCase, list[Effect]]:
    """Apply one event; returns the next case plus ordered effects.

    Raises IllegalEvent / TerminalCase / StaleStage; never mutates inputs.
    """
    kind = event.kind

    if kind is EventKind.CASE_OPENED:
        raise IllegalEvent("case_opened is only valid as the genesis event")

    if kind is EventKind.SATISFACTION_RECORDED:
        if not case.terminal:
            raise IllegalEvent("satisfaction is recorded only after the case closes")
        validate_event_payload(kind, dict(event.payload))
        rating = (event.payload["role"], event.payload["rating"])
        return case.advance(satisfaction=case.satisfaction + (rating,)), []

    if case.terminal:
        raise TerminalCase(f"case {case.case_id} is {case.state.value}")

    if kind is EventKind.STAGE_TIMED_OUT:
        stage = CaseState(event.payload["stage"])
        if stage is not case.state:
            raise StaleStage(
                f"timeout for {stage.value} but case is in {case.state.value}"
            )
        return _close(case, config, event, STAGE_TIMEOUT_REASON[case.state])

    if kind is EventKind.MUTE_ELAPSED:
        reason = (
            ClosureReason.UNMUTE_WINDOW_ELAPSED
            if case.state is CaseState.AWAIT_UNMUTE
            else ClosureReason.MUTE_ELAPSED
        )
        return _close(case, config, event, reason)

    if kind is EventKind.MODERATOR_CANCELLED:
        return _close(case, config, event, ClosureReason.MODERATOR_CANCELLED)

    handler = _STAGE_HANDLERS.get((case.state, kind))
    if handler is None:
        raise IllegalEvent(f"{kind.value} is not legal in {case.state.value}")
    return handler(case, config, event)


# --- per-stage handlers -----------------------------------------------------

def _on_victim_requested(case, config, event):
    validate_event_payload(event.kind, dict(event.payload))
    text = event.payload["text"]
    if case.review_request:
        nxt = case.advance(
            state=CaseState.AWAIT_REQUEST_REVIEW,
            stage_entered_at=event.occurred_at,
            apology_request=text,
        )
        effects = [
            _log(
                nxt,
                "victim requested an apology; request awaiting moderator review",
                detail=text,
                buttons=["mreq_ok", "mreq_no"],
            ),
            _arm(nxt, config),
        ]
        return nxt, effects
    nxt = case.advance(
        state=CaseState.AWAIT_OFFENDER_APOLOGY,
        stage_entered_at=event.occurred_at,
        apology_request=text,
    )
    return nxt, _prompt_offender_effects(nxt, config, "victim requested an apology; offender prompted")


def _on_victim_declined(case, config, event):
    return _close(case, config, event, ClosureReason.VICTIM_DECLINED)


def _on_request_approved(case, config, event):
    nxt = case.advance(
        state=CaseState.AWAIT_OFFENDER_APOLOGY, stage_entered_at=event.occurred_at
    )
    return nxt, _prompt_offender_effects(nxt, config, "request approved; offender prompted")


def _on_request_rejected(case, config, event):
    return _close(case, config, event, ClosureReason.REQUEST_REJECTED)


def _on_offender_apologized(case, config, event):
    validate_event_payload(event.kind, dict(event.payload))
    nxt = case.advance(
        state=CaseState.AWAIT_RESPONSE_REVIEW,
        stage_entered_at=event.occurred_at,
        apology_response=event.payload["text"],
        attempt_count=case.attempt_count + 1,
    )
    effects = [
        _log(
            nxt,
            "offender apologized; response awaiting moderator review",
            detail=event.payload["text"],
            buttons=["mres_ok", "mres_no"],
        ),
        _arm(nxt, config),
    ]
    return nxt, effects


def _on_offender_declined(case, config, event):
    return _close(case, config, event, ClosureReason.OFFENDER_DECLINED)


def _on_response_approved(case, config, event):
    nxt = case.advance(
        state=CaseState.AWAIT_VICTIM_VERDICT, stage_entered_at=event.occurred_at
    )
    effects = [
        Effect(EffectKind.FORWARD_APOLOGY_TO_VICTIM, {"response_text": nxt.apology_response}),
        _log(nxt, "response approved; apology forwarded to victim for the final say"),
        _arm(nxt, config),
    ]
    return nxt, effects


def _on_response_rejected(case, config, event):
    if case.attempt_count < config.max_attempts:
        nxt = case.advance(
            state=CaseState.AWAIT_OFFENDER_APOLOGY, stage_entered_at=event.occurred_at
        )
        return nxt, _prompt_offender_effects(
            nxt,
            config,
            f"response rejected; offender may retry "
            f"({nxt.attempt_count}/{config.max_attempts} attempts used)",
        )
    return _close(case, config, event, ClosureReason.RESPONSE_REJECTED_FINAL)


def _on_victim_accepted(case, config, event):
    if config.auto_unmute:
        nxt = _closed_case(case, event, ClosureReason.RESTORED, CaseState.RESOLVED_RESTORED)
        effects = [
            Effect(EffectKind.UNMUTE_OFFENDER, {}),
            _log(nxt, "victim accepted; offender unmuted and case restored"),
            Effect(EffectKind.ARCHIVE_THREADS, {}),
            *_cancel_deadlines(),
        ]
        return nxt, effects
    nxt = case.advance(state=CaseState.AWAIT_UNMUTE, stage_entered_at=event.occurred_at)
    effects = [
        Effect(EffectKind.OFFER_UNMUTE_BUTTON, {}),
        _arm(nxt, config),
    ]
    return nxt, effects


def _on_victim_rejected(case, config, event):
    return _close(case, config, event, ClosureReason.VICTIM_REJECTED)


def _on_unmute_executed(case, config, event):
    nxt = _closed_case(case, event, ClosureReason.RESTORED, CaseState.RESOLVED_RESTORED)
    effects = [
        Effect(EffectKind.UNMUTE_OFFENDER, {}),
        Effect(EffectKind.ARCHIVE_THREADS, {}),
        *_cancel_deadlines(),
    ]
    return nxt, effects


_STAGE_HANDLERS = {
    (CaseState.AWAIT_VICTIM_REQUEST, EventKind.VICTIM_REQUESTED): _on_victim_requested,
    (CaseState.AWAIT_VICTIM_REQUEST, EventKind.VICTIM_DECLINED): _on_victim_declined,
    (CaseState.AWAIT_REQUEST_REVIEW, EventKind.REQUEST_APPROVED): _on_request_approved,
    (CaseState.AWAIT_REQUEST_REVIEW, EventKind.REQUEST_REJECTED): _on_request_rejected,
    (CaseState.AWAIT_OFFENDER_APOLOGY, EventKind.OFFENDER_APOLOGIZED): _on_offender_apologized,
    (CaseState.AWAIT_OFFENDER_APOLOGY, EventKind.OFFENDER_DECLINED): _on_offender_declined,
    (CaseState.AWAIT_RESPONSE_REVIEW, EventKind.RESPONSE_APPROVED): _on_response_approved,
    (CaseState.AWAIT_RESPONSE_REVIEW, EventKind.RESPONSE_REJECTED): _on_response_rejected,
    (CaseState.AWAIT_VICTIM_VERDICT, EventKind.VICTIM_ACCEPTED): _on_victim_accepted,
    (CaseState.AWAIT_VICTIM_VERDICT, EventKind.VICTIM_REJECTED): _on_victim_rejected,
    (CaseState.AWAIT_UNMUTE, EventKind.UNMUTE_EXECUTED): _on_unmute_executed,
}

#: Event kinds a caller may legally submit per waiting stage (timeouts,
#: mute expiry, and moderator cancel are legal in every waiting stage).
UNIVERSAL_EVENTS = (
    EventKind.STAGE_TIMED_OUT,
    EventKind.MUTE_ELAPSED,
    EventKind.MODERATOR_CANCELLED,
)

STAGE_EVENTS: dict[CaseState, tuple[EventKind, ...]] = {}
for (_state, _kind) in _STAGE_HANDLERS:
    STAGE_EVENTS.setdefault(_state, ())
    STAGE_EVENTS[_state] = STAGE_EVENTS[_state] + (_kind,)


# --- helpers ----------------------------------------------------------------

def _prompt_offender_effects(nxt, config, summary):
    # The offender thread is created lazily: its prompt quotes the request.
    effects = []
    if nxt.attempt_count == 0:
        effects.append(Effect(EffectKind.CREATE_OFFENDER_THREAD, {}))
    effects.append(
        Effect(EffectKind.PROMPT_OFFENDER_APOLOGY, {"quoted_request": nxt.apology_request})
    )
    effects.append(_log(nxt, summary))
    effects.append(_arm(nxt, config))
    return effects


def _log(case, summary, detail=None, buttons=None):
    params = {"stage": case.state.value, "summary": summary}
    if detail is not None:
        params["detail"] = detail
    if buttons:
        params["buttons"] = tuple(buttons)
    return Effect(EffectKind.POST_LOG_UPDATE, params)


def _arm(case, config):
    deadline = next_deadline(case, config)
    return Effect(EffectKind.ARM_DEADLINE, {"kind": deadline.kind, "at": deadline.at})


def _cancel_deadlines():
    return (
        Effect(EffectKind.CANCEL_DEADLINE, {"kind": DeadlineKind.STAGE_TIMEOUT}),
        Effect(EffectKind.CANCEL_DEADLINE, {"kind": DeadlineKind.MUTE_ELAPSED}),
    )


def _closed_case(case, event, reason, terminal_state):
    furthest = case.furthest_stage
    return case.advance(
        state=terminal_state,
        stage_entered_at=event.occurred_at,
        closure=ClosureRecord(
            reason=reason, furthest_stage=furthest, closed_at=event.occurred_at
        ),
    )


def _close(case, config, event, reason):
    """Punitive closure: the offender simply stays muted for the full term."""
    nxt = _closed_case(case, event, reason, CaseState.CLOSED_PUNITIVE)
    effects = [
        _log(nxt, f"closed: {reason.value}"),
        Effect(EffectKind.ARCHIVE_THREADS, {}),
        *_cancel_deadlines(),
    ]
    return nxt, effects
