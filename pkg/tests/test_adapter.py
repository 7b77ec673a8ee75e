"""Adapter contract tests: custom ids, routing authorization, idempotent
effect execution."""

from __future__ import annotations

import itertools

import pytest

from apolobot import engine
from apolobot.adapters.base import (
    ACTION_TOKENS,
    ButtonPressed,
    ModalSubmitted,
    build_custom_id,
    parse_custom_id,
    route_interaction,
)
from apolobot.adapters.executor import (
    EffectExecutor,
    ExecutionJournal,
    ThreadRegistry,
    format_duration,
)
from apolobot.adapters.sim import InMemoryPlatform
from apolobot.errors import PermissionDenied, StaleInteraction, Unauthorized
from apolobot.model import CaseEvent, CaseState, EventKind, MediationConfig
from apolobot.scheduler import DeadlineScheduler
from conftest import T0, make_command, open_default

CONFIG = MediationConfig(moderator_role_ids=frozenset({"mods"}), log_channel_id="log")

VICTIM, OFFENDER, MODERATOR, BYSTANDER = "U1", "U2", "M1", "Z9"

ROLE_OF = {
    VICTIM: frozenset(),
    OFFENDER: frozenset(),
    MODERATOR: frozenset({"mods"}),
    BYSTANDER: frozenset(),
}


# --- custom-id grammar ------------------------------------------------------------

@pytest.mark.parametrize("action", sorted(ACTION_TOKENS))
def test_custom_id_round_trip(action):
    cid = build_custom_id("guild-c17", action)
    assert cid == f"apolo.v1.guild-c17.{action}"
    assert len(cid) <= 100
    assert parse_custom_id(cid) == ("guild-c17", action)


def test_custom_id_with_dotted_case_id():
    cid = build_custom_id("a.b.c", "unmute")
    assert parse_custom_id(cid) == ("a.b.c", "unmute")


def test_custom_id_length_cap():
    with pytest.raises(ValueError):
        build_custom_id("x" * 95, "unmute")


@pytest.mark.parametrize(
    "junk",
    ["", "apolo.v1.", "apolo.v1.case", "apolo.v2.case.unmute",
     "apolo.v1.case.nuke", "other.v1.case.unmute"],
)
def test_parse_rejects_junk(junk):
    with pytest.raises(ValueError):
        parse_custom_id(junk)


# --- authorization matrix -----------------------------------------------------------

def case_in_stage(stage: CaseState):
    case = open_default(CONFIG)
    script = {
        CaseState.AWAIT_VICTIM_REQUEST: [],
        CaseState.AWAIT_REQUEST_REVIEW: None,  # needs review_request
        CaseState.AWAIT_OFFENDER_APOLOGY: [
            (EventKind.VICTIM_REQUESTED, {"text": "t"})],
        CaseState.AWAIT_RESPONSE_REVIEW: [
            (EventKind.VICTIM_REQUESTED, {"text": "t"}),
            (EventKind.OFFENDER_APOLOGIZED, {"text": "s"})],
        CaseState.AWAIT_VICTIM_VERDICT: [
            (EventKind.VICTIM_REQUESTED, {"text": "t"}),
            (EventKind.OFFENDER_APOLOGIZED, {"text": "s"}),
            (EventKind.RESPONSE_APPROVED, {})],
        CaseState.AWAIT_UNMUTE: [
            (EventKind.VICTIM_REQUESTED, {"text": "t"}),
            (EventKind.OFFENDER_APOLOGIZED, {"text": "s"}),
            (EventKind.RESPONSE_APPROVED, {}),
            (EventKind.VICTIM_ACCEPTED, {})],
    }[stage]
    if script is None:
        case = open_default(CONFIG, review_request=True)
        script = [(EventKind.VICTIM_REQUESTED, {"text": "t"})]
    for kind, payload in script:
        event = CaseEvent(case.version + 1, T0, "x", kind, payload)
        case, _ = engine.transition(case, CONFIG, event)
    assert case.state is stage
    return case


ALLOWED = {
    "vreq_yes": VICTIM, "vreq_no": VICTIM,
    "oapo_yes": OFFENDER, "oapo_no": OFFENDER,
    "mreq_ok": MODERATOR, "mreq_no": MODERATOR,
    "mres_ok": MODERATOR, "mres_no": MODERATOR,
    "vfin_ok": VICTIM, "vfin_no": VICTIM,
    "unmute": MODERATOR,
}


@pytest.mark.parametrize(
    "action,actor",
    list(itertools.product(sorted(ACTION_TOKENS), [VICTIM, OFFENDER, MODERATOR, BYSTANDER])),
)
def test_authorization_matrix(action, actor):
    """11 actions x 4 roles: only the matrix-allowed cells route."""
    spec = ACTION_TOKENS[action]
    case = case_in_stage(spec.stage)
    press = ButtonPressed(
        custom_id=build_custom_id(case.case_id, action),
        actor=actor, actor_roles=ROLE_OF[actor],
    )
    if ALLOWED[action] == actor:
        result = route_interaction(case, CONFIG, press)
        assert result.action == action
        assert result.open_modal == spec.opens_modal
    else:
        with pytest.raises(Unauthorized):
            route_interaction(case, CONFIG, press)


def test_yes_button_opens_modal_then_modal_submits_event():
    case = case_in_stage(CaseState.AWAIT_VICTIM_REQUEST)
    press = ButtonPressed(
        custom_id=build_custom_id(case.case_id, "vreq_yes"),
        actor=VICTIM,
    )
    assert route_interaction(case, CONFIG, press).open_modal
    modal = ModalSubmitted(
        custom_id=build_custom_id(case.case_id, "vreq_yes"),
        actor=VICTIM, text_fields={"text": "please own this"},
    )
    result = route_interaction(case, CONFIG, modal)
    assert result.event_kind is EventKind.VICTIM_REQUESTED
    assert result.payload == {"text": "please own this"}


def test_stale_interaction_when_case_advanced():
    case = case_in_stage(CaseState.AWAIT_OFFENDER_APOLOGY)
    press = ButtonPressed(
        custom_id=build_custom_id(case.case_id, "vreq_no"), actor=VICTIM,
    )
    with pytest.raises(StaleInteraction):
        route_interaction(case, CONFIG, press)


def test_moderator_cannot_stand_in_for_victim():
    case = case_in_stage(CaseState.AWAIT_VICTIM_REQUEST)
    press = ButtonPressed(
        custom_id=build_custom_id(case.case_id, "vreq_yes"),
        actor=MODERATOR, actor_roles=ROLE_OF[MODERATOR],
    )
    with pytest.raises(Unauthorized):
        route_interaction(case, CONFIG, press)


# --- effect execution ------------------------------------------------------------------

def build_executor(platform, tmp_path=None):
    scheduler = DeadlineScheduler(lambda d: True)
    journal = ExecutionJournal(tmp_path / "effects.ndjson" if tmp_path else None)
    threads = ThreadRegistry(tmp_path / "threads.ndjson" if tmp_path else None)
    executor = EffectExecutor(
        platform, scheduler, journal, threads,
        lambda _c: CONFIG, lambda _c: "main-channel", sleep=lambda _s: None,
    )
    return executor, scheduler, journal


def test_open_effects_map_to_platform_calls():
    platform = InMemoryPlatform()
    executor, scheduler, _ = build_executor(platform)
    case, effects = engine.open_case(
        make_command(), CONFIG, T0
    )
    executor.execute(case, effects, case.version)
    assert [e["op"] for e in platform.transcript] == [
        "mute", "create_private_thread", "post_prompt", "post_log",
    ]
    assert platform.transcript[1]["name"] == "apolo-victim-guild-c1"
    assert platform.transcript[3]["log_thread"] == "update-case-1"
    assert len(scheduler.armed()) == 1


def test_redelivery_skips_executed_effects():
    platform = InMemoryPlatform()
    executor, _, journal = build_executor(platform)
    case, effects = engine.open_case(
        make_command(), CONFIG, T0
    )
    executor.execute(case, effects, case.version)
    calls = len(platform.transcript)
    executor.execute(case, effects, case.version)  # crash redelivery
    assert len(platform.transcript) == calls
    assert len(journal.keys()) == 4


def test_journal_survives_restart(tmp_path):
    platform = InMemoryPlatform()
    executor, _, _ = build_executor(platform, tmp_path)
    case, effects = engine.open_case(
        make_command(), CONFIG, T0
    )
    executor.execute(case, effects, case.version)
    calls = len(platform.transcript)
    # fresh executor over the same journal files: nothing re-executes
    executor2, _, _ = build_executor(platform, tmp_path)
    executor2.execute(case, effects, case.version)
    assert len(platform.transcript) == calls


def test_unmute_effect_single_call():
    platform = InMemoryPlatform()
    executor, _, _ = build_executor(platform)
    case, effects = engine.open_case(
        make_command(), CONFIG, T0
    )
    executor.execute(case, effects, case.version)
    event = CaseEvent(2, T0, VICTIM, EventKind.VICTIM_DECLINED)
    closed, close_effects = engine.transition(case, CONFIG, event)
    executor.execute(closed, close_effects, closed.version)
    unmutes = [e for e in platform.transcript if e["op"] == "unmute"]
    assert unmutes == []  # punitive closure never unmutes early


class DeniedMutePlatform(InMemoryPlatform):
    def mute(self, community_id, member_id, until):
        raise PermissionDenied("no MODERATE_MEMBERS grant")


def test_mute_permission_failure_is_reported_and_case_continues(caplog):
    platform = DeniedMutePlatform()
    executor, _, _ = build_executor(platform)
    case, effects = engine.open_case(
        make_command(), CONFIG, T0
    )
    with caplog.at_level("CRITICAL"):
        executor.execute(case, effects, case.version)
    assert any("mute failed" in r.message for r in caplog.records)
    ops = [e["op"] for e in platform.transcript]
    # the failure lands in the log thread, and the rest of the batch ran
    assert "create_private_thread" in ops and "post_prompt" in ops
    assert any(
        e["op"] == "post_log" and "failed" in e["summary"] for e in platform.transcript
    )


def test_format_duration():
    assert format_duration(3600) == "1h"
    assert format_duration(5400) == "1h30m"
    assert format_duration(90) == "1m30s"
    assert format_duration(604800) == "7d"
