"""Executes engine effects against a platform binding, exactly once.

Every platform-bound effect gets an idempotency key
``<case_id>:<version>:<ordinal>`` journaled to disk after execution, so a
crash-recovery replay skips work that already happened. Deadline effects
are routed to the scheduler and never journaled: the scheduler's recover
pass re-derives them from the store.
"""

from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path
from typing import Callable

from ..errors import PermissionDenied, PlatformUnavailable
from ..model import (
    DeadlineKind,
    Effect,
    EffectKind,
    MediationCase,
    MediationConfig,
    SCHEDULER_EFFECTS,
)
from ..scheduler import Deadline, DeadlineScheduler
from ..templates import render
from .base import ACTION_TOKENS, Platform, build_custom_id

log = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3

ACTION_LABELS = {token: spec.label for token, spec in ACTION_TOKENS.items()}


def format_duration(seconds: int) -> str:
    """Render seconds compactly, e.g. 3600 -> ``1h``, 5400 -> ``1h30m``."""
    parts = []
    for unit, size in (("d", 86400), ("h", 3600), ("m", 60), ("s", 1)):
        if seconds >= size:
            parts.append(f"{seconds // size}{unit}")
            seconds %= size
    return "".join(parts) or "0s"


class ExecutionJournal:
    """Append-only record of executed idempotency keys.

    ``path=None`` keeps the journal in memory only (simulation trials).
    """

    def __init__(self, path: str | Path | None, fsync: bool = True):
        self.path = Path(path) if path else None
        self._fsync = fsync
        self._seen: set[str] = set()
        if self.path and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line:
                    try:
                        self._seen.add(json.loads(line)["key"])
                    except (json.JSONDecodeError, KeyError):
                        continue  # torn trailing write

    def seen(self, key: str) -> bool:
        return key in self._seen

    def record(self, key: str) -> None:
        self._seen.add(key)
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as fh:
            fh.write(json.dumps({"key": key}) + "\n")
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())

    def keys(self) -> set[str]:
        return set(self._seen)


class ThreadRegistry:
    """Durable map of (case, role) -> platform thread ref.

    ``path=None`` keeps the registry in memory only (simulation trials).
    """

    def __init__(self, path: str | Path | None, fsync: bool = True):
        self.path = Path(path) if path else None
        self._fsync = fsync
        self._refs: dict[tuple[str, str], str] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line:
                    try:
                        obj = json.loads(line)
                        self._refs[(obj["case_id"], obj["role"])] = obj["ref"]
                    except (json.JSONDecodeError, KeyError):
                        continue

    def get(self, case_id: str, role: str) -> str | None:
        return self._refs.get((case_id, role))

    def set(self, case_id: str, role: str, ref: str) -> None:
        self._refs[(case_id, role)] = ref
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as fh:
            fh.write(json.dumps({"case_id": case_id, "role": role, "ref": ref}) + "\n")
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())


class EffectExecutor:
    """Orders effects onto the platform and scheduler for one transition."""

    def __init__(
        self,
        platform: Platform,
        scheduler: DeadlineScheduler,
        journal: ExecutionJournal,
        threads: ThreadRegistry,
        community_config: Callable[[str], MediationConfig],
        thread_parent_channel: Callable[[str], str],
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.platform = platform
        self.scheduler = scheduler
        self.journal = journal
        self.threads = threads
        self._config_for = community_config
        self._parent_channel = thread_parent_channel
        self._sleep = sleep

    def execute(
        self,
        case: MediationCase,
        effects: list[Effect],
        produced_version: int,
        include_scheduler: bool = True,
    ) -> None:
        """Run one transition's effects in engine order.

        ``produced_version`` is the stream version whose transition emitted
        these effects; it anchors the idempotency keys.
        """
        config = self._config_for(case.community_id)
        for ordinal, effect in enumerate(effects):
            if effect.kind in SCHEDULER_EFFECTS:
                if include_scheduler:
                    self._apply_scheduler(case, effect, produced_version)
                continue
            key = f"{case.case_id}:{produced_version}:{ordinal}"
            if self.journal.seen(key):
                continue
            self._apply_platform(case, config, effect)
            self.journal.record(key)

    # -- scheduler routing -----------------------------------------------------

    def _apply_scheduler(self, case: MediationCase, effect: Effect, version: int) -> None:
        kind: DeadlineKind = effect.params["kind"]
        if effect.kind is EffectKind.ARM_DEADLINE:
            self.scheduler.arm(
                Deadline(case_id=case.case_id, kind=kind, at=effect.params["at"],
                         armed_for_version=version)
            )
        else:
            self.scheduler.cancel(case.case_id, kind)

    # -- platform routing --------------------------------------------------------

    def _apply_platform(self, case: MediationCase, config: MediationConfig,
                        effect: Effect) -> None:
        try:
            self._call(case, config, effect)
        except PermissionDenied as exc:
            # The case continues; moderators see the failure in the log thread.
            if effect.kind is EffectKind.MUTE_OFFENDER:
                log.critical("mute failed for case %s: %s", case.case_id, exc)
            else:
                log.error("platform denied %s for case %s: %s",
                          effect.kind.value, case.case_id, exc)
            try:
                self.platform.post_log(
                    config.log_channel_id, case.case_id, case.case_no,
                    f"platform call {effect.kind.value} failed: {exc}",
                )
            except Exception:
                log.exception("could not report permission failure to log channel")

    def _call(self, case: MediationCase, config: MediationConfig, effect: Effect) -> None:
        kind = effect.kind
        p = effect.params
        if kind is EffectKind.MUTE_OFFENDER:
            self._retry(lambda: self.platform.mute(case.community_id, case.offender_id,
                                                   p["until"]))
        elif kind is EffectKind.CREATE_VICTIM_THREAD:
            ref = self._retry(lambda: self.platform.create_private_thread(
                self._parent_channel(case.community_id), case.victim_id,
                f"apolo-victim-{case.case_id}"))
            self.threads.set(case.case_id, "victim", ref)
        elif kind is EffectKind.CREATE_OFFENDER_THREAD:
            ref = self._retry(lambda: self.platform.create_private_thread(
                self._parent_channel(case.community_id), case.offender_id,
                f"apolo-offender-{case.case_id}"))
            self.threads.set(case.case_id, "offender", ref)
        elif kind is EffectKind.PROMPT_VICTIM_REQUEST:
            self._prompt(case, "victim", "victim_prompt", {
                "victim_name": case.victim_id,
                "offender_name": case.offender_id,
                "reason": case.reason,
                "duration": format_duration(case.mute_duration),
            }, ["vreq_yes", "vreq_no"])
        elif kind is EffectKind.PROMPT_OFFENDER_APOLOGY:
            self._prompt(case, "offender", "offender_prompt", {
                "offender_name": case.offender_id,
                "victim_name": case.victim_id,
                "request_text": p["quoted_request"],
            }, ["oapo_yes", "oapo_no"])
        elif kind is EffectKind.FORWARD_APOLOGY_TO_VICTIM:
            self._prompt(case, "victim", "forward_apology", {
                "victim_name": case.victim_id,
                "response_text": p["response_text"],
            }, ["vfin_ok", "vfin_no"])
        elif kind is EffectKind.POST_LOG_UPDATE:
            summary = p["summary"]
            if "detail" in p:
                summary = f"{summary}\n> {p['detail']}"
            buttons = [(build_custom_id(case.case_id, a), ACTION_LABELS[a])
                       for a in p.get("buttons", ())]
            self._retry(lambda: self.platform.post_log(
                config.log_channel_id, case.case_id, case.case_no, summary, buttons,
                attachment_url=p.get("proof_ref")))
        elif kind is EffectKind.OFFER_UNMUTE_BUTTON:
            text = render(dict(config.templates), "unmute_offer", {
                "offender_name": case.offender_id, "victim_name": case.victim_id,
            })
            self._retry(lambda: self.platform.post_log(
                config.log_channel_id, case.case_id, case.case_no, text,
                [(build_custom_id(case.case_id, "unmute"), ACTION_LABELS["unmute"])]))
        elif kind is EffectKind.UNMUTE_OFFENDER:
            self._retry(lambda: self.platform.unmute(case.community_id, case.offender_id))
        elif kind is EffectKind.ARCHIVE_THREADS:
            for role in ("victim", "offender"):
                ref = self.threads.get(case.case_id, role)
                if ref:
                    self._retry(lambda r=ref: self.platform.archive_thread(r))
        else:
            raise ValueError(f"unroutable effect {kind}")

    def _prompt(self, case, thread_role, template_id, params, actions):
        ref = self.threads.get(case.case_id, thread_role)
        if ref is None:
            raise PlatformUnavailable(
                f"no {thread_role} thread recorded for case {case.case_id}"
            )
        buttons = [(build_custom_id(case.case_id, a), ACTION_LABELS[a]) for a in actions]
        self._retry(lambda: self.platform.post_prompt(ref, template_id, params, buttons))

    def _retry(self, call):
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            try:
                return call()
            except PlatformUnavailable:
                if attempt == RETRY_ATTEMPTS:
                    raise
                self._sleep(0.2 * attempt)
