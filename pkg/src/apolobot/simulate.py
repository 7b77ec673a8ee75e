"""Monte-Carlo runs of the workflow under seeded stakeholder behavior.

Each trial drives one case through the real engine with the simulated
binding on a virtual clock: prompts go out, role-played stakeholders
answer (or stay silent) per their behavior profiles, and stage timers
fire when nobody does. A closed-form restoration probability for the
timeout-free case ships alongside as the oracle the sampled rate is
checked against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from . import engine
from .adapters.base import route_interaction
from .adapters.executor import EffectExecutor, ExecutionJournal, ThreadRegistry
from .adapters.sim import ActorProfiles, InMemoryPlatform, SimulatedActors
from .errors import StaleInteraction, StaleStage, TerminalCase, IllegalEvent, Unauthorized
from .metrics import classify_outcome
from .model import (
    SYSTEM_ACTOR,
    CaseEvent,
    DeadlineKind,
    EventKind,
    MediationCase,
    MediationConfig,
    OpenCommand,
    stage_index,
)
from .scheduler import DeadlineScheduler, VirtualClock
from .store import EventStore

SIM_EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)

_MAX_STEPS = 1000


def analytic_restoration_probability(
    profiles: ActorProfiles,
    review_request: bool = False,
    auto_unmute: bool = True,
) -> float:
    """Probability the unique restoration path completes, absent timeouts.

    One factor per gate along the path: the victim composes a request
    (p_engage), the moderator approves it when review is on (p_approve),
    the offender composes an apology (p_engage), the moderator approves the
    response (p_approve), the victim accepts (p_approve), and, when the
    unmute stays manual, a moderator presses the button (p_engage).
    """
    p = profiles.victim.p_engage
    if review_request:
        p *= profiles.moderator.p_approve
    p *= profiles.offender.p_engage
    p *= profiles.moderator.p_approve
    p *= profiles.victim.p_approve
    if not auto_unmute:
        p *= profiles.moderator.p_engage
    return p


class TrialRunner:
    """Runs one case to a terminal state under the simulated binding.

    The case lives in memory; pass ``store`` to persist every event as it
    is applied (the replay-determinism harness does this to compare the
    fold against the live value).
    """

    def __init__(
        self,
        config: MediationConfig,
        profiles: ActorProfiles,
        stream: str = "",
        duration: str = "1h",
        review_request: bool = False,
        case_id: str = "trial",
        community_id: str = "sim",
        store: EventStore | None = None,
        platform: InMemoryPlatform | None = None,
    ):
        # The simulated community always defines the "moderator" role the
        # role-played moderator acts under.
        if "moderator" not in config.moderator_role_ids:
            config = replace(
                config, moderator_role_ids=config.moderator_role_ids | {"moderator"}
            )
        self.config = config
        self.duration = duration
        self.review_request = review_request
        self.case_id = case_id
        self.community_id = community_id
        self.store = store
        self.clock = VirtualClock(SIM_EPOCH)
        self.platform = platform if platform is not None else InMemoryPlatform(self.clock)
        self.actors = SimulatedActors(self.platform, profiles, stream=stream)
        self.scheduler = DeadlineScheduler(self._dispatch_deadline)
        self.executor = EffectExecutor(
            self.platform,
            self.scheduler,
            ExecutionJournal(None),
            ThreadRegistry(None),
            lambda _community: config,
            lambda community: f"{community}-main",
        )
        self.case: MediationCase | None = None

    # -- event application -------------------------------------------------------

    def _apply(self, event: CaseEvent) -> None:
        nxt, effects = engine.transition(self.case, self.config, event)
        if self.store is not None:
            self.store.append(self.case_id, self.case.version, [event])
        self.case = nxt
        self.executor.execute(nxt, effects, nxt.version)

    def _dispatch_deadline(self, deadline) -> bool:
        case = self.case
        if case is None or case.terminal:
            return False
        if deadline.kind is DeadlineKind.STAGE_TIMEOUT:
            if case.version != deadline.armed_for_version:
                return False
            payload = {"stage": case.state.value}
            kind = EventKind.STAGE_TIMED_OUT
        else:
            payload = {}
            kind = EventKind.MUTE_ELAPSED
        event = CaseEvent(
            event_seq=case.version + 1,
            occurred_at=deadline.at,
            actor=SYSTEM_ACTOR,
            kind=kind,
            payload=payload,
        )
        try:
            self._apply(event)
        except (StaleStage, TerminalCase, IllegalEvent):
            return False
        return True

    def _submit_interaction(self, interaction) -> None:
        if self.case.terminal:
            return
        try:
            result = route_interaction(self.case, self.config, interaction)
        except (Unauthorized, StaleInteraction, ValueError):
            return
        if result.open_modal or result.event_kind is None:
            return
        event = CaseEvent(
            event_seq=self.case.version + 1,
            occurred_at=interaction.occurred_at or self.clock.now(),
            actor=interaction.actor,
            kind=result.event_kind,
            payload=dict(result.payload),
        )
        try:
            self._apply(event)
        except (StaleStage, TerminalCase, IllegalEvent):
            return

    # -- main loop -------------------------------------------------------------------

    def run(self) -> MediationCase:
        command = OpenCommand(
            case_id=self.case_id,
            community_id=self.community_id,
            offender_id="offender-1",
            victim_id="victim-1",
            moderator_id="mod-1",
            invoker_roles=frozenset({"moderator"}) | self.config.moderator_role_ids,
            duration=self.duration,
            reason="simulated harm",
            review_request=self.review_request,
        )
        engine.validate_command(command, self.config)
        event = engine.open_event(command, self.clock.now())
        case, effects = engine.apply_open(self.case_id, event, self.config)
        if self.store is not None:
            self.store.append(self.case_id, 0, [event])
        self.case = case
        self.executor.execute(case, effects, case.version)

        for _ in range(_MAX_STEPS):
            if self.case.terminal:
                return self.case
            # Jump straight to whichever comes first: a stakeholder reply
            # or an armed deadline. Stakeholders act before timers on ties.
            actor_due = self.actors.next_due()
            armed = self.scheduler.armed()
            deadline_due = armed[0].at if armed else None
            candidates = [t for t in (actor_due, deadline_due) if t is not None]
            if not candidates:
                raise RuntimeError(f"case {self.case_id} stalled with no pending work")
            now = self.clock.advance_to(min(candidates))
            for interaction in self.actors.step(now):
                self._submit_interaction(interaction)
            self.scheduler.fire_due(now)
        raise RuntimeError(f"case {self.case_id} did not terminate in {_MAX_STEPS} steps")


@dataclass(frozen=True)
class SimReport:
    n_trials: int
    seed: int
    duration: str
    review_request: bool
    auto_unmute: bool
    outcomes: dict[str, int]
    closure_reasons: dict[str, int]
    restored: int
    mean_stages_reached: float
    analytic_restoration_probability: float

    @property
    def restoration_rate(self) -> float:
        return self.restored / self.n_trials if self.n_trials else 0.0

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "seed": self.seed,
            "duration": self.duration,
            "review_request": self.review_request,
            "auto_unmute": self.auto_unmute,
            "outcomes": dict(sorted(self.outcomes.items())),
            "closure_reasons": dict(sorted(self.closure_reasons.items())),
            "restored": self.restored,
            "restoration_rate": self.restoration_rate,
            "mean_stages_reached": self.mean_stages_reached,
            "analytic_restoration_probability": self.analytic_restoration_probability,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def simulate(
    config: MediationConfig,
    profiles: ActorProfiles,
    n_trials: int,
    seed: int,
    duration: str = "1h",
    review_request: bool = False,
) -> SimReport:
    """Run ``n_trials`` seeded cases and tally outcomes.

    Deterministic: trial i draws from a stream derived from (seed, i), so
    the same arguments always produce the same report.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    seeded = replace(profiles, seed=seed)
    outcomes: dict[str, int] = {}
    reasons: dict[str, int] = {}
    restored = 0
    stages_total = 0
    for i in range(n_trials):
        runner = TrialRunner(
            config,
            seeded,
            stream=f"trial-{i}",
            duration=duration,
            review_request=review_request,
        )
        case = runner.run()
        label = classify_outcome(case).label
        outcomes[label] = outcomes.get(label, 0) + 1
        reason = case.closure.reason.value
        reasons[reason] = reasons.get(reason, 0) + 1
        if case.state.value == "resolved_restored":
            restored += 1
        stages_total += stage_index(case.furthest_stage) + 1
    return SimReport(
        n_trials=n_trials,
        seed=seed,
        duration=duration,
        review_request=review_request,
        auto_unmute=config.auto_unmute,
        outcomes=outcomes,
        closure_reasons=reasons,
        restored=restored,
        mean_stages_reached=stages_total / n_trials,
        analytic_restoration_probability=analytic_restoration_probability(
            seeded, review_request=review_request, auto_unmute=config.auto_unmute
        ),
    )
