"""Deterministic in-memory binding: a transcript-recording platform and
seedable role-played stakeholders.

No network, no wall clock: timestamps come from an injected clock and all
randomness flows from one seed, so two runs with the same seed produce
identical transcripts.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Mapping, Sequence

from ..model import to_rfc3339
from ..scheduler import Clock
from ..templates import render
from .base import ACTION_TOKENS, ButtonPressed, InboundInteraction, ModalSubmitted, parse_custom_id


class InMemoryPlatform:
    """Records every outbound call; hands prompts to simulated actors."""

    def __init__(self, clock: Clock | None = None, templates: dict[str, str] | None = None):
        self.clock = clock
        self.templates = templates or {}
        self.transcript: list[dict[str, Any]] = []
        self._thread_members: dict[str, str] = {}
        self._log_threads: dict[str, str] = {}
        self._thread_seq = 0
        self._message_seq = 0
        # bounded: the live sandbox service runs this binding with no actors
        # attached, so unconsumed prompts must not accumulate forever
        self.pending_prompts: deque[dict[str, Any]] = deque(maxlen=1000)

    # -- helpers ---------------------------------------------------------------

    def _now(self) -> str | None:
        return to_rfc3339(self.clock.now()) if self.clock else None

    def _record(self, op: str, **details: Any) -> None:
        entry = {"op": op, **details}
        at = self._now()
        if at:
            entry["at"] = at
        self.transcript.append(entry)

    def _next_message_ref(self) -> str:
        self._message_seq += 1
        return f"msg-{self._message_seq}"

    def _register_prompt(self, ref: str, actor: str | None,
                         buttons: Sequence[tuple[str, str]]) -> None:
        if not buttons:
            return
        self.pending_prompts.append({
            "ref": ref,
            "actor": actor,
            "buttons": list(buttons),
            "at": self.clock.now() if self.clock else None,
        })

    # -- Platform contract -------------------------------------------------------

    def ensure_commands_registered(self, community_id: str) -> None:
        self._record("register_commands", community=community_id)

    def mute(self, community_id: str, member_id: str, until: datetime) -> None:
        self._record("mute", community=community_id, member=member_id,
                     until=to_rfc3339(until))

    def unmute(self, community_id: str, member_id: str) -> None:
        self._record("unmute", community=community_id, member=member_id)

    def create_private_thread(self, parent_channel_id: str, member_id: str,
                              name: str) -> str:
        self._thread_seq += 1
        ref = f"thread-{self._thread_seq}"
        self._thread_members[ref] = member_id
        self._record("create_private_thread", parent=parent_channel_id,
                     member=member_id, name=name, ref=ref)
        return ref

    def post_prompt(self, thread_ref: str, template_id: str,
                    params: Mapping[str, str],
                    buttons: Sequence[tuple[str, str]] = ()) -> str:
        ref = self._next_message_ref()
        text = render(self.templates, template_id, dict(params))
        self._record("post_prompt", thread=thread_ref, template=template_id,
                     text=text, buttons=[list(b) for b in buttons], ref=ref)
        self._register_prompt(ref, self._thread_members.get(thread_ref), buttons)
        return ref

    def post_log(self, log_channel_id: str, case_id: str, case_no: int,
                 summary: str, buttons: Sequence[tuple[str, str]] = (),
                 attachment_url: str | None = None) -> str:
        thread_name = f"update-case-{case_no}"
        if case_id not in self._log_threads:
            self._log_threads[case_id] = thread_name
        ref = self._next_message_ref()
        entry: dict[str, Any] = dict(
            channel=log_channel_id, log_thread=thread_name, summary=summary,
            buttons=[list(b) for b in buttons], ref=ref,
        )
        if attachment_url:
            entry["attachment_url"] = attachment_url
        self._record("post_log", **entry)
        self._register_prompt(ref, None, buttons)  # moderator-facing buttons
        return ref

    def archive_thread(self, thread_ref: str) -> None:
        self._record("archive_thread", ref=thread_ref)


@dataclass(frozen=True)
class BehaviorProfile:
    """How one role behaves when prompted.

    ``p_engage`` drives the compose-and-submit steps (request an apology,
    write one, press unmute): failing that draw means silence, which a
    stage timer eventually converts into a punitive closure. ``p_approve``
    drives the one-click decisions (moderator reviews, victim verdict):
    those always get an answer, approve or reject. Delays are uniform over
    [delay_min, delay_max] seconds.
    """

    p_engage: float = 1.0
    p_approve: float = 1.0
    delay_min: int = 0
    delay_max: int = 0

    def __post_init__(self) -> None:
        for name in ("p_engage", "p_approve"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {p}")
        if self.delay_min < 0 or self.delay_max < self.delay_min:
            raise ValueError("delays must satisfy 0 <= delay_min <= delay_max")


@dataclass(frozen=True)
class ActorProfiles:
    victim: BehaviorProfile = BehaviorProfile()
    offender: BehaviorProfile = BehaviorProfile()
    moderator: BehaviorProfile = BehaviorProfile()
    seed: int = 0

    def for_role(self, role: str) -> BehaviorProfile:
        return getattr(self, role)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"seed": self.seed}
        for role in ("victim", "offender", "moderator"):
            p = self.for_role(role)
            out[role] = {
                "p_engage": p.p_engage,
                "p_approve": p.p_approve,
                "delay_min": p.delay_min,
                "delay_max": p.delay_max,
            }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ActorProfiles":
        kwargs: dict[str, Any] = {"seed": int(data.get("seed", 0))}
        for role in ("victim", "offender", "moderator"):
            spec = data.get(role) or {}
            kwargs[role] = BehaviorProfile(
                p_engage=float(spec.get("p_engage", 1.0)),
                p_approve=float(spec.get("p_approve", 1.0)),
                delay_min=int(spec.get("delay_min", 0)),
                delay_max=int(spec.get("delay_max", 0)),
            )
        return cls(**kwargs)


@dataclass
class _Scheduled:
    due_at: datetime
    order: int
    interaction: InboundInteraction


class SimulatedActors:
    """Turns pending prompts into timed stakeholder interactions.

    Decisions are drawn from a stream seeded by (profiles.seed, message
    ref), so behavior is a pure function of the seed and the prompt
    sequence.
    """

    def __init__(self, platform: InMemoryPlatform, profiles: ActorProfiles,
                 moderator_id: str = "mod-1",
                 moderator_roles: frozenset[str] = frozenset({"moderator"}),
                 stream: str = ""):
        self.platform = platform
        self.profiles = profiles
        self.moderator_id = moderator_id
        self.moderator_roles = moderator_roles
        self.stream = stream  # discriminates parallel trials under one seed
        self._queue: list[_Scheduled] = []
        self._order = 0

    def _rng(self, message_ref: str) -> random.Random:
        return random.Random(f"{self.profiles.seed}:{self.stream}:{message_ref}")

    def _schedule(self, due_at: datetime, interaction: InboundInteraction) -> None:
        self._queue.append(_Scheduled(due_at, self._order, interaction))
        self._order += 1

    def _plan(self, prompt: dict[str, Any]) -> None:
        custom_id = prompt["buttons"][0][0]
        case_id, first_action = parse_custom_id(custom_id)
        spec = ACTION_TOKENS[first_action]
        rng = self._rng(prompt["ref"])
        profile = self.profiles.for_role(spec.role)
        delay = timedelta(seconds=rng.randint(profile.delay_min, profile.delay_max))
        due = prompt["at"] + delay

        if spec.role == "moderator":
            actor, roles = self.moderator_id, self.moderator_roles
        else:
            actor, roles = prompt["actor"], frozenset()

        if spec.opens_modal:  # compose step: engage or stay silent
            if rng.random() < profile.p_engage:
                text = f"{spec.role} message for {case_id} via {prompt['ref']}"
                self._schedule(due, ModalSubmitted(
                    custom_id=custom_id, actor=actor, text_fields={"text": text},
                    actor_roles=roles, occurred_at=due))
            return
        if first_action == "unmute":  # single button: press or stay silent
            if rng.random() < profile.p_engage:
                self._schedule(due, ButtonPressed(
                    custom_id=custom_id, actor=actor, actor_roles=roles,
                    occurred_at=due))
            return
        # two-button decision: always answered, approve with p_approve
        chosen = prompt["buttons"][0] if rng.random() < profile.p_approve \
            else prompt["buttons"][1]
        self._schedule(due, ButtonPressed(
            custom_id=chosen[0], actor=actor, actor_roles=roles, occurred_at=due))

    def step(self, virtual_now: datetime) -> list[InboundInteraction]:
        """Consume new prompts, then return interactions due by ``virtual_now``."""
        while self.platform.pending_prompts:
            self._plan(self.platform.pending_prompts.popleft())
        due = [s for s in self._queue if s.due_at <= virtual_now]
        due.sort(key=lambda s: (s.due_at, s.order))
        self._queue = [s for s in self._queue if s.due_at > virtual_now]
        return [s.interaction for s in due]

    def next_due(self) -> datetime | None:
        """Earliest scheduled response, for event-driven clock advancement."""
        while self.platform.pending_prompts:
            self._plan(self.platform.pending_prompts.popleft())
        if not self._queue:
            return None
        return min(s.due_at for s in self._queue)
