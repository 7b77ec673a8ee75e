from __future__ import annotations

from datetime import datetime, timezone

import pytest

from apolobot.engine import open_case
from apolobot.model import MediationCase, MediationConfig, OpenCommand

T0 = datetime(2025, 6, 1, 12, 0, 0, tzinfo=timezone.utc)

MOD_ROLES = frozenset({"mods"})


@pytest.fixture
def config() -> MediationConfig:
    return MediationConfig(
        default_stage_timeout=86400,
        max_attempts=1,
        auto_unmute=False,
        moderator_role_ids=MOD_ROLES,
        log_channel_id="log-channel",
    )


def make_command(**overrides) -> OpenCommand:
    fields = dict(
        case_id="guild-c1",
        community_id="guild",
        offender_id="U2",
        victim_id="U1",
        moderator_id="M1",
        invoker_roles=MOD_ROLES,
        duration="1h",
        reason="insult",
        proof_ref=None,
        review_request=False,
        case_no=1,
    )
    fields.update(overrides)
    return OpenCommand(**fields)


def open_default(config: MediationConfig, **overrides) -> MediationCase:
    case, _ = open_case(make_command(**overrides), config, T0)
    return case
