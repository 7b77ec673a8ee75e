"""Coordination layer: communities, case submission, deadline dispatch,
and crash recovery.

All writes funnel through :meth:`MediationService.submit`, which applies
the engine, appends under optimistic concurrency, then executes effects.
That single path is what makes adapter-driven and API-driven traffic
byte-identical at the platform boundary.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

from . import engine
from .adapters.base import (
    ButtonPressed,
    CommandInvoked,
    ModalSubmitted,
    Platform,
    RouteResult,
    parse_custom_id,
    route_interaction,
)
from .adapters.executor import EffectExecutor, ExecutionJournal, ThreadRegistry
from .adapters.sim import ActorProfiles
from .errors import (
    IllegalEvent,
    StaleInteraction,
    StaleStage,
    TerminalCase,
    UnknownCase,
    VersionConflict,
)
from .model import (
    SYSTEM_ACTOR,
    CaseEvent,
    DeadlineKind,
    EventKind,
    MediationCase,
    MediationConfig,
    OpenCommand,
)
from .scheduler import Clock, Deadline, DeadlineScheduler, WallClock
from .store import EventStore
from .templates import validate_templates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommunityRecord:
    community_id: str
    name: str
    config: MediationConfig
    moderators: tuple[str, ...] = ()
    thread_parent_channel: str = "channel-main"
    profiles: ActorProfiles | None = None
    simulated: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "community_id": self.community_id,
            "name": self.name,
            "config": {
                "default_stage_timeout": self.config.default_stage_timeout,
                "max_attempts": self.config.max_attempts,
                "auto_unmute": self.config.auto_unmute,
                "moderator_role_ids": sorted(self.config.moderator_role_ids),
                "log_channel_id": self.config.log_channel_id,
                "templates": dict(self.config.templates),
            },
            "moderators": list(self.moderators),
            "thread_parent_channel": self.thread_parent_channel,
            "profiles": self.profiles.to_dict() if self.profiles else None,
            "simulated": self.simulated,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CommunityRecord":
        cfg = data.get("config") or {}
        return cls(
            community_id=data["community_id"],
            name=data.get("name", data["community_id"]),
            config=MediationConfig(
                default_stage_timeout=int(cfg.get("default_stage_timeout", 86400)),
                max_attempts=int(cfg.get("max_attempts", 1)),
                auto_unmute=bool(cfg.get("auto_unmute", False)),
                moderator_role_ids=frozenset(cfg.get("moderator_role_ids", ["moderator"])),
                log_channel_id=cfg.get("log_channel_id", "log"),
                templates=dict(cfg.get("templates", {})),
            ),
            moderators=tuple(data.get("moderators", ())),
            thread_parent_channel=data.get("thread_parent_channel", "channel-main"),
            profiles=ActorProfiles.from_dict(data["profiles"]) if data.get("profiles") else None,
            simulated=bool(data.get("simulated", True)),
        )


DEFAULT_SIM_MODERATORS = ("mod-1",)


class CommunityRegistry:
    """Known communities and their policies; persisted as NDJSON."""

    def __init__(self, data_dir: str | Path, fsync: bool = True):
        self.path = Path(data_dir) / "communities.ndjson"
        self._fsync = fsync
        self._records: dict[str, CommunityRecord] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line:
                    continue
                try:
                    record = CommunityRecord.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError):
                    continue  # torn trailing write
                self._records[record.community_id] = record

    def register(self, record: CommunityRecord) -> None:
        with self._lock:
            self._records[record.community_id] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                fh.flush()
                if self._fsync:
                    os.fsync(fh.fileno())

    def create_simulated(
        self,
        profiles: ActorProfiles | None = None,
        config_overrides: Mapping[str, Any] | None = None,
        name: str | None = None,
    ) -> CommunityRecord:
        with self._lock:
            n = sum(1 for c in self._records if c.startswith("sim-")) + 1
            community_id = f"sim-{n}"
        overrides = dict(config_overrides or {})
        templates = dict(overrides.get("templates", {}))
        problems = validate_templates(templates)
        if problems:
            raise ValueError("; ".join(problems))
        config = MediationConfig(
            default_stage_timeout=int(overrides.get("default_stage_timeout", 86400)),
            max_attempts=int(overrides.get("max_attempts", 1)),
            auto_unmute=bool(overrides.get("auto_unmute", False)),
            moderator_role_ids=frozenset({"moderator"}),
            log_channel_id=f"{community_id}-log",
            templates=templates,
        )
        record = CommunityRecord(
            community_id=community_id,
            name=name or community_id,
            config=config,
            moderators=DEFAULT_SIM_MODERATORS,
            thread_parent_channel=f"{community_id}-main",
            profiles=profiles,
            simulated=True,
        )
        self.register(record)
        return record

    def get(self, community_id: str) -> CommunityRecord | None:
        return self._records.get(community_id)

    def config_for(self, community_id: str) -> MediationConfig:
        record = self._records.get(community_id)
        return record.config if record else MediationConfig()

    def thread_parent_for(self, community_id: str) -> str:
        record = self._records.get(community_id)
        return record.thread_parent_channel if record else "channel-main"

    def roles_for(self, community_id: str, actor: str) -> frozenset[str]:
        """Roles the registry can vouch for (simulated communities only)."""
        record = self._records.get(community_id)
        if record and actor in record.moderators:
            return frozenset({"moderator"})
        return frozenset()

    def all(self) -> list[CommunityRecord]:
        return list(self._records.values())


class MediationService:
    """Single entry point for everything that changes a case."""

    def __init__(
        self,
        data_dir: str | Path,
        communities: CommunityRegistry,
        platform: Platform,
        clock: Clock | None = None,
        fsync: bool = True,
    ):
        data_dir = Path(data_dir)
        self.communities = communities
        self.clock = clock or WallClock()
        self.platform = platform
        self.store = EventStore(data_dir, communities.config_for, fsync=fsync)
        self.scheduler = DeadlineScheduler(self.dispatch_deadline)
        self.journal = ExecutionJournal(data_dir / "effects.ndjson", fsync=fsync)
        self.threads = ThreadRegistry(data_dir / "threads.ndjson", fsync=fsync)
        self.executor = EffectExecutor(
            platform,
            self.scheduler,
            self.journal,
            self.threads,
            communities.config_for,
            communities.thread_parent_for,
        )

    # -- case lifecycle -----------------------------------------------------------

    def open_case(
        self,
        community_id: str,
        offender_id: str,
        victim_id: str,
        moderator_id: str,
        duration: str,
        reason: str,
        proof_ref: str | None = None,
        review_request: bool = False,
        invoker_roles: frozenset[str] | None = None,
        now: datetime | None = None,
    ) -> MediationCase:
        config = self.communities.config_for(community_id)
        roles = invoker_roles
        if roles is None:
            roles = self.communities.roles_for(community_id, moderator_id)
        now = now or self.clock.now()
        for attempt in range(3):  # case_no races resolve via append conflicts
            case_no = self.store.count_cases(community_id) + 1
            command = OpenCommand(
                case_id=f"{community_id}-c{case_no}",
                community_id=community_id,
                offender_id=offender_id,
                victim_id=victim_id,
                moderator_id=moderator_id,
                invoker_roles=roles,
                duration=duration,
                reason=reason,
                proof_ref=proof_ref,
                review_request=review_request,
                case_no=case_no,
            )
            engine.validate_command(command, config)
            event = engine.open_event(command, now)
            case, effects = engine.apply_open(command.case_id, event, config)
            try:
                self.store.append(case.case_id, 0, [event])
            except VersionConflict:
                if attempt == 2:
                    raise
                continue
            self.executor.execute(case, effects, case.version)
            return case
        raise RuntimeError("unreachable")

    def submit(
        self,
        case_id: str,
        kind: EventKind,
        actor: str,
        payload: Mapping[str, Any] | None = None,
        occurred_at: datetime | None = None,
    ) -> MediationCase:
        """Apply one event to a case; retries once on a concurrent append."""
        payload = dict(payload or {})
        engine.validate_event_payload(kind, payload)
        when = occurred_at or self.clock.now()
        for attempt in (1, 2):
            case, version = self.store.load_or_raise(case_id)
            config = self.communities.config_for(case.community_id)
            event = CaseEvent(
                event_seq=version + 1, occurred_at=when, actor=actor,
                kind=kind, payload=payload,
            )
            nxt, effects = engine.transition(case, config, event)
            try:
                self.store.append(case_id, version, [event])
            except VersionConflict:
                if attempt == 2:
                    raise StaleInteraction("already handled")
                continue
            self.executor.execute(nxt, effects, nxt.version)
            return nxt
        raise RuntimeError("unreachable")

    # -- inbound interactions -------------------------------------------------------

    def handle_interaction(
        self, interaction: CommandInvoked | ButtonPressed | ModalSubmitted
    ) -> MediationCase | RouteResult:
        """Normalize platform traffic into case events.

        Returns the updated case, or a RouteResult asking the binding to
        open a text modal. Engine rejections surface as StaleInteraction so
        bindings can reply "already handled".
        """
        if isinstance(interaction, CommandInvoked):
            fields = interaction.fields
            return self.open_case(
                community_id=interaction.community_id,
                offender_id=fields["offender"],
                victim_id=fields["victim"],
                moderator_id=interaction.invoker,
                duration=fields["duration"],
                reason=fields["reason"],
                proof_ref=fields.get("proof"),
                review_request=bool(fields.get("review_request", False)),
                invoker_roles=interaction.invoker_roles,
                now=interaction.occurred_at,
            )
        case_id, _ = parse_custom_id(interaction.custom_id)
        case, _version = self.store.load_or_raise(case_id)
        config = self.communities.config_for(case.community_id)
        vouched = self.communities.roles_for(case.community_id, interaction.actor)
        if vouched - interaction.actor_roles:
            interaction = dataclasses.replace(
                interaction, actor_roles=interaction.actor_roles | vouched
            )
        result = route_interaction(case, config, interaction)
        if result.open_modal:
            return result
        try:
            return self.submit(
                result.case_id,
                result.event_kind,
                result.actor,
                result.payload,
                occurred_at=interaction.occurred_at,
            )
        except (IllegalEvent, TerminalCase) as exc:
            raise StaleInteraction(str(exc)) from exc

    def record_satisfaction(self, case_id: str, role: str, rating: int, actor: str,
                            occurred_at: datetime | None = None) -> MediationCase:
        return self.submit(
            case_id, EventKind.SATISFACTION_RECORDED, actor,
            {"role": role, "rating": rating}, occurred_at=occurred_at,
        )

    # -- deadline dispatch -----------------------------------------------------------

    def dispatch_deadline(self, deadline: Deadline) -> bool:
        """Convert a due deadline into a timer event; False = benign stale drop."""
        loaded = self.store.load(deadline.case_id)
        if loaded is None:
            return False
        case, version = loaded
        if case.terminal:
            return False
        if deadline.kind is DeadlineKind.STAGE_TIMEOUT:
            if version != deadline.armed_for_version:
                return False  # case moved on; its transition armed a fresh timer
            try:
                self.submit(
                    deadline.case_id, EventKind.STAGE_TIMED_OUT, SYSTEM_ACTOR,
                    {"stage": case.state.value}, occurred_at=deadline.at,
                )
            except (StaleStage, StaleInteraction, TerminalCase, IllegalEvent):
                return False
            return True
        try:
            self.submit(deadline.case_id, EventKind.MUTE_ELAPSED, SYSTEM_ACTOR,
                        occurred_at=deadline.at)
        except (TerminalCase, IllegalEvent):
            return False
        # StaleInteraction (double conflict) propagates: scheduler re-arms and retries.
        return True

    # -- recovery ---------------------------------------------------------------------

    def recover(self) -> dict[str, int]:
        """Restore scheduler state and finish half-executed effect batches."""
        cases = self.store.all_cases()
        open_cases = [
            (case, self.communities.config_for(case.community_id))
            for case in cases
            if not case.terminal
        ]
        armed = self.scheduler.recover(open_cases)
        replayed = 0
        for case in cases:
            replayed += self._replay_tail_effects(case.case_id)
        return {"cases": len(cases), "deadlines_armed": armed, "effects_replayed": replayed}

    def _replay_tail_effects(self, case_id: str) -> int:
        """Re-execute platform effects for the last two events (dedup makes
        this idempotent); covers batches cut short by a crash."""
        from .store import fold

        events = self.store.events(case_id)
        if not events:
            return 0
        config = self.communities.config_for(events[0].payload.get("community_id", ""))
        replayed = 0
        for seq in range(max(1, len(events) - 1), len(events) + 1):
            if seq == 1:
                case, effects = engine.apply_open(case_id, events[0], config)
            else:
                case = fold(config, case_id, events[: seq - 1])
                case, effects = engine.transition(case, config, events[seq - 1])
            self.executor.execute(case, effects, case.version, include_scheduler=False)
            replayed += 1
        return replayed
