"""Shared adapter contract: outbound platform operations, the interaction
custom-id grammar, and inbound-interaction routing with authorization.

Custom ids follow ``apolo.v1.<case_id>.<action>``. Action tokens contain
no dots, so parsing from the right is bijective even though case ids may
contain dots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Mapping, Protocol, Sequence

from ..errors import StaleInteraction, Unauthorized
from ..model import CaseState, EventKind, MediationCase, MediationConfig

CUSTOM_ID_PREFIX = "apolo.v1"
MAX_CUSTOM_ID_LEN = 100


@dataclass(frozen=True)
class ActionSpec:
    """Who may use an action, where it is legal, and what it submits."""

    token: str
    role: str  # victim | offender | moderator
    stage: CaseState
    event_kind: EventKind | None  # None: the press only opens a modal
    opens_modal: bool = False
    label: str = ""


ACTION_TOKENS: dict[str, ActionSpec] = {
    spec.token: spec
    for spec in (
        ActionSpec("vreq_yes", "victim", CaseState.AWAIT_VICTIM_REQUEST,
                   EventKind.VICTIM_REQUESTED, opens_modal=True, label="Yes"),
        ActionSpec("vreq_no", "victim", CaseState.AWAIT_VICTIM_REQUEST,
                   EventKind.VICTIM_DECLINED, label="No"),
        ActionSpec("oapo_yes", "offender", CaseState.AWAIT_OFFENDER_APOLOGY,
                   EventKind.OFFENDER_APOLOGIZED, opens_modal=True, label="Yes"),
        ActionSpec("oapo_no", "offender", CaseState.AWAIT_OFFENDER_APOLOGY,
                   EventKind.OFFENDER_DECLINED, label="No"),
        ActionSpec("mreq_ok", "moderator", CaseState.AWAIT_REQUEST_REVIEW,
                   EventKind.REQUEST_APPROVED, label="Approve request"),
        ActionSpec("mreq_no", "moderator", CaseState.AWAIT_REQUEST_REVIEW,
                   EventKind.REQUEST_REJECTED, label="Reject request"),
        ActionSpec("mres_ok", "moderator", CaseState.AWAIT_RESPONSE_REVIEW,
                   EventKind.RESPONSE_APPROVED, label="Approve response"),
        ActionSpec("mres_no", "moderator", CaseState.AWAIT_RESPONSE_REVIEW,
                   EventKind.RESPONSE_REJECTED, label="Reject response"),
        ActionSpec("vfin_ok", "victim", CaseState.AWAIT_VICTIM_VERDICT,
                   EventKind.VICTIM_ACCEPTED, label="Accept"),
        ActionSpec("vfin_no", "victim", CaseState.AWAIT_VICTIM_VERDICT,
                   EventKind.VICTIM_REJECTED, label="Reject"),
        ActionSpec("unmute", "moderator", CaseState.AWAIT_UNMUTE,
                   EventKind.UNMUTE_EXECUTED, label="Unmute Offender"),
    )
}


def build_custom_id(case_id: str, action: str) -> str:
    if action not in ACTION_TOKENS:
        raise ValueError(f"unknown action token {action!r}")
    custom_id = f"{CUSTOM_ID_PREFIX}.{case_id}.{action}"
    if len(custom_id) > MAX_CUSTOM_ID_LEN:
        raise ValueError(f"custom id exceeds {MAX_CUSTOM_ID_LEN} chars: {custom_id!r}")
    return custom_id


def parse_custom_id(custom_id: str) -> tuple[str, str]:
    """Split a custom id back into (case_id, action); raises ValueError."""
    if len(custom_id) > MAX_CUSTOM_ID_LEN or not custom_id.startswith(CUSTOM_ID_PREFIX + "."):
        raise ValueError(f"not an interaction custom id: {custom_id!r}")
    rest = custom_id[len(CUSTOM_ID_PREFIX) + 1 :]
    case_id, sep, action = rest.rpartition(".")
    if not sep or not case_id or action not in ACTION_TOKENS:
        raise ValueError(f"not an interaction custom id: {custom_id!r}")
    return case_id, action


# --- inbound interactions (normalized) ---------------------------------------

@dataclass(frozen=True)
class CommandInvoked:
    community_id: str
    invoker: str
    invoker_roles: frozenset[str]
    fields: Mapping[str, Any]  # offender, victim, duration, reason, proof, review_request
    occurred_at: datetime | None = None


@dataclass(frozen=True)
class ButtonPressed:
    custom_id: str
    actor: str
    actor_roles: frozenset[str] = frozenset()
    occurred_at: datetime | None = None


@dataclass(frozen=True)
class ModalSubmitted:
    custom_id: str
    actor: str
    text_fields: Mapping[str, str] = field(default_factory=dict)
    actor_roles: frozenset[str] = frozenset()
    occurred_at: datetime | None = None


InboundInteraction = CommandInvoked | ButtonPressed | ModalSubmitted


@dataclass(frozen=True)
class RouteResult:
    """What an interaction resolved to.

    Exactly one of ``event_kind`` (submit this event) or ``open_modal``
    (reply with a text-entry modal; no state change yet) is set.
    """

    case_id: str
    action: str
    actor: str
    event_kind: EventKind | None = None
    payload: Mapping[str, Any] = field(default_factory=dict)
    open_modal: bool = False


def actor_role(case: MediationCase, config: MediationConfig, actor: str,
               actor_roles: frozenset[str]) -> str:
    """The actor's role in this case: victim, offender, moderator, or bystander.

    Role gates are per-case: being the community's moderator does not let an
    account stand in for the victim or the offender.
    """
    if actor == case.victim_id:
        return "victim"
    if actor == case.offender_id:
        return "offender"
    if actor_roles & config.moderator_role_ids:
        return "moderator"
    return "bystander"


def route_interaction(
    case: MediationCase,
    config: MediationConfig,
    interaction: ButtonPressed | ModalSubmitted,
) -> RouteResult:
    """Authorize and translate a button press or modal submission.

    Raises Unauthorized for any (action, actor-role) pair outside the
    allowed matrix and StaleInteraction when the case has already moved
    past the stage the control belongs to.
    """
    case_id, action = parse_custom_id(interaction.custom_id)
    spec = ACTION_TOKENS[action]
    role = actor_role(case, config, interaction.actor, interaction.actor_roles)
    if role != spec.role:
        raise Unauthorized(f"{action} is not {role}'s decision")
    if case.terminal or case.state is not spec.stage:
        raise StaleInteraction(
            f"case {case.case_id} is in {case.state.value}; {action} belongs to "
            f"{spec.stage.value}"
        )
    if isinstance(interaction, ButtonPressed) and spec.opens_modal:
        return RouteResult(case_id=case_id, action=action, actor=interaction.actor,
                           open_modal=True)
    payload: dict[str, Any] = {}
    if spec.opens_modal:  # modal submission carrying the text
        text = ""
        if isinstance(interaction, ModalSubmitted):
            text = interaction.text_fields.get("text", "")
        payload = {"text": text}
    return RouteResult(
        case_id=case_id,
        action=action,
        actor=interaction.actor,
        event_kind=spec.event_kind,
        payload=payload,
    )


# --- outbound contract --------------------------------------------------------

class Platform(Protocol):
    """Outbound operations a chat-platform binding must provide.

    Implementations raise PlatformUnavailable for retryable faults and
    PermissionDenied when the platform rejects the call outright.
    """

    def ensure_commands_registered(self, community_id: str) -> None: ...

    def mute(self, community_id: str, member_id: str, until: datetime) -> None: ...

    def unmute(self, community_id: str, member_id: str) -> None: ...

    def create_private_thread(
        self, parent_channel_id: str, member_id: str, name: str
    ) -> str: ...

    def post_prompt(
        self,
        thread_ref: str,
        template_id: str,
        params: Mapping[str, str],
        buttons: Sequence[tuple[str, str]] = (),
    ) -> str: ...

    def post_log(
        self,
        log_channel_id: str,
        case_id: str,
        case_no: int,
        summary: str,
        buttons: Sequence[tuple[str, str]] = (),
        attachment_url: str | None = None,
    ) -> str: ...

    def archive_thread(self, thread_ref: str) -> None: ...
