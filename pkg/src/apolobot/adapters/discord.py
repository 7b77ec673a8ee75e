"""Discord binding: REST calls out, signed interactions webhook in.

Outbound traffic goes straight to the Discord HTTP API (v10) through an
injectable httpx client, so tests can swap in a mock transport. Inbound
traffic arrives on the interactions endpoint: Discord POSTs each slash
command, button press, and modal submission with an Ed25519 signature we
verify before routing.

Mutes map to the member communication-timeout endpoint; durations past
Discord's 28-day timeout cap fall back to assigning the configured mute
role. Private threads are named ``apolo-victim-<case>`` and
``apolo-offender-<case>``; log updates land in a per-case public thread
``update-case-<n>`` under the configured log channel.
"""

from __future__ import annotations

import json
import logging
from datetime import datetime, timedelta, timezone
from typing import Any, Callable, Mapping, Sequence

import httpx
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

from ..config import DiscordSettings
from ..errors import (
    MissingPermissions,
    PermissionDenied,
    PlatformUnavailable,
    StaleInteraction,
    Unauthorized,
    UnknownCase,
)
from ..model import MAX_TEXT_LEN, to_rfc3339
from ..templates import render
from .base import ButtonPressed, CommandInvoked, ModalSubmitted

log = logging.getLogger(__name__)

API_BASE = "https://discord.com/api/v10"

#: Discord's hard cap on member communication timeouts.
TIMEOUT_CAP = timedelta(days=28)

# application command option types
OPT_STRING = 3
OPT_BOOLEAN = 5
OPT_USER = 6
OPT_ATTACHMENT = 11

CHANNEL_PUBLIC_THREAD = 11
CHANNEL_PRIVATE_THREAD = 12

BUTTON_PRIMARY = 1
BUTTON_SECONDARY = 2

# interaction types / callback types
PING = 1
APPLICATION_COMMAND = 2
MESSAGE_COMPONENT = 3
MODAL_SUBMIT = 5
CB_PONG = 1
CB_MESSAGE = 4
CB_MODAL = 9
EPHEMERAL = 64

PERMISSIONS = {
    "MODERATE_MEMBERS": 1 << 40,
    "MANAGE_THREADS": 1 << 34,
    "CREATE_PRIVATE_THREADS": 1 << 36,
    "SEND_MESSAGES": 1 << 11,
    "SEND_MESSAGES_IN_THREADS": 1 << 38,
    "MANAGE_ROLES": 1 << 28,
}
ADMINISTRATOR = 1 << 3

APOLOMUTE_COMMAND: dict[str, Any] = {
    "name": "apolomute",
    "description": "Mute a member and open an apology path that can lift it early",
    "type": 1,
    "options": [
        {"type": OPT_USER, "name": "offender", "required": True,
         "description": "Member who caused the harm"},
        {"type": OPT_USER, "name": "victim", "required": True,
         "description": "Member who was harmed"},
        {"type": OPT_STRING, "name": "duration", "required": True,
         "description": "Mute duration, e.g. 45m, 12h, 7d"},
        {"type": OPT_STRING, "name": "reason", "required": True,
         "description": "Why the mute was issued"},
        {"type": OPT_ATTACHMENT, "name": "proof", "required": False,
         "description": "Optional image evidence"},
        {"type": OPT_BOOLEAN, "name": "review-request", "required": False,
         "description": "Review the apology request before the offender sees it"},
    ],
}


class DiscordRestClient:
    """Error-mapping shim over httpx against the Discord REST API."""

    def __init__(self, bot_token: str, client: httpx.Client | None = None):
        self._client = client or httpx.Client(base_url=API_BASE, timeout=20.0)
        self._headers = {"Authorization": f"Bot {bot_token}"}

    def request(self, method: str, path: str, *, json_body: Any | None = None,
                files: Any | None = None, data: Any | None = None) -> Any:
        try:
            response = self._client.request(
                method, path, json=json_body, files=files, data=data,
                headers=self._headers,
            )
        except httpx.HTTPError as exc:
            raise PlatformUnavailable(f"discord unreachable: {exc}") from exc
        if response.status_code in (401, 403):
            raise PermissionDenied(
                f"{method} {path} -> {response.status_code}: {response.text[:200]}"
            )
        if response.status_code == 429 or response.status_code >= 500:
            raise PlatformUnavailable(
                f"{method} {path} -> {response.status_code}"
            )
        if response.status_code >= 400:
            raise PlatformUnavailable(
                f"{method} {path} -> {response.status_code}: {response.text[:200]}"
            )
        if response.status_code == 204 or not response.content:
            return None
        return response.json()

    def get_bytes(self, url: str) -> bytes | None:
        try:
            response = self._client.get(url)
            response.raise_for_status()
            return response.content
        except httpx.HTTPError:
            return None


def _buttons_row(buttons: Sequence[tuple[str, str]]) -> list[dict[str, Any]]:
    if not buttons:
        return []
    return [{
        "type": 1,
        "components": [
            {"type": 2, "style": BUTTON_PRIMARY if i == 0 else BUTTON_SECONDARY,
             "label": label, "custom_id": custom_id}
            for i, (custom_id, label) in enumerate(buttons)
        ],
    }]


class DiscordPlatform:
    """Outbound half of the binding (the Platform contract)."""

    def __init__(
        self,
        settings: DiscordSettings,
        rest: DiscordRestClient | None = None,
        now: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
        templates: dict[str, str] | None = None,
    ):
        self.settings = settings
        self.rest = rest or DiscordRestClient(settings.bot_token)
        self._now = now
        self.templates = templates or {}
        self._log_threads: dict[str, str] = {}
        self._role_muted: set[str] = set()

    # -- startup ---------------------------------------------------------------

    def check_permissions(self) -> None:
        """Refuse to run without the grants the workflow needs."""
        guild = self.settings.community_id
        me = self.rest.request("GET", f"/guilds/{guild}/members/@me")
        roles = self.rest.request("GET", f"/guilds/{guild}/roles")
        by_id = {r["id"]: int(r.get("permissions", 0)) for r in roles}
        granted = 0
        for role_id in me.get("roles", []):
            granted |= by_id.get(role_id, 0)
        if granted & ADMINISTRATOR:
            return
        required = dict(PERMISSIONS)
        if not self.settings.mute_role_id:
            required.pop("MANAGE_ROLES")
        missing = [name for name, bit in required.items() if not granted & bit]
        if missing:
            raise MissingPermissions(missing)

    def ensure_commands_registered(self, community_id: str) -> None:
        self.rest.request(
            "PUT",
            f"/applications/{self.settings.application_id}/guilds/{community_id}/commands",
            json_body=[APOLOMUTE_COMMAND],
        )

    # -- moderation ------------------------------------------------------------------

    def mute(self, community_id: str, member_id: str, until: datetime) -> None:
        if until - self._now() <= TIMEOUT_CAP:
            self.rest.request(
                "PATCH", f"/guilds/{community_id}/members/{member_id}",
                json_body={"communication_disabled_until": to_rfc3339(until)},
            )
            return
        if not self.settings.mute_role_id:
            raise PermissionDenied(
                "mute exceeds the 28-day timeout cap and no mute role is configured"
            )
        self.rest.request(
            "PUT",
            f"/guilds/{community_id}/members/{member_id}/roles/{self.settings.mute_role_id}",
        )
        self._role_muted.add(member_id)

    def unmute(self, community_id: str, member_id: str) -> None:
        self.rest.request(
            "PATCH", f"/guilds/{community_id}/members/{member_id}",
            json_body={"communication_disabled_until": None},
        )
        if self.settings.mute_role_id and member_id in self._role_muted:
            self.rest.request(
                "DELETE",
                f"/guilds/{community_id}/members/{member_id}/roles/{self.settings.mute_role_id}",
            )
            self._role_muted.discard(member_id)

    # -- threads and messages -----------------------------------------------------------

    def create_private_thread(self, parent_channel_id: str, member_id: str,
                              name: str) -> str:
        thread = self.rest.request(
            "POST", f"/channels/{parent_channel_id}/threads",
            json_body={"name": name, "type": CHANNEL_PRIVATE_THREAD, "invitable": False},
        )
        thread_id = thread["id"]
        self.rest.request("PUT", f"/channels/{thread_id}/thread-members/{member_id}")
        return thread_id

    def post_prompt(self, thread_ref: str, template_id: str,
                    params: Mapping[str, str],
                    buttons: Sequence[tuple[str, str]] = ()) -> str:
        rendered = render(
            self.templates, template_id,
            {k: self._mention(k, v) for k, v in params.items()},
        )
        message = self.rest.request(
            "POST", f"/channels/{thread_ref}/messages",
            json_body={"content": rendered, "components": _buttons_row(buttons)},
        )
        return message["id"]

    @staticmethod
    def _mention(key: str, value: str) -> str:
        if key.endswith("_name") and value.isdigit():
            return f"<@{value}>"
        return value

    def post_log(self, log_channel_id: str, case_id: str, case_no: int,
                 summary: str, buttons: Sequence[tuple[str, str]] = (),
                 attachment_url: str | None = None) -> str:
        thread_id = self._log_threads.get(case_id)
        if thread_id is None:
            thread = self.rest.request(
                "POST", f"/channels/{log_channel_id}/threads",
                json_body={"name": f"update-case-{case_no}", "type": CHANNEL_PUBLIC_THREAD},
            )
            thread_id = thread["id"]
            self._log_threads[case_id] = thread_id
        body: dict[str, Any] = {"content": summary, "components": _buttons_row(buttons)}
        if attachment_url:
            # keep the evidence alive even if the source message is deleted
            blob = self.rest.get_bytes(attachment_url)
            if blob is not None:
                message = self.rest.request(
                    "POST", f"/channels/{thread_id}/messages",
                    data={"payload_json": json.dumps(body)},
                    files={"files[0]": ("proof.png", blob)},
                )
                return message["id"]
            body["content"] = f"{summary}\nproof: {attachment_url}"
        message = self.rest.request(
            "POST", f"/channels/{thread_id}/messages", json_body=body
        )
        return message["id"]

    def archive_thread(self, thread_ref: str) -> None:
        self.rest.request("PATCH", f"/channels/{thread_ref}", json_body={"archived": True})


# --- inbound: the interactions endpoint ---------------------------------------------


def verify_signature(public_key_hex: str, signature_hex: str, timestamp: str,
                     body: bytes) -> bool:
    try:
        key = Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_key_hex))
        key.verify(bytes.fromhex(signature_hex), timestamp.encode() + body)
        return True
    except (ValueError, InvalidSignature):
        return False


def _option_map(data: Mapping[str, Any]) -> dict[str, Any]:
    return {opt["name"]: opt.get("value") for opt in data.get("options", [])}


def normalize_interaction(payload: Mapping[str, Any]) -> (
    CommandInvoked | ButtonPressed | ModalSubmitted | None
):
    """Translate a raw interaction payload into a normalized inbound event."""
    itype = payload.get("type")
    member = payload.get("member") or {}
    actor = (member.get("user") or payload.get("user") or {}).get("id", "")
    roles = frozenset(member.get("roles", []))
    occurred = datetime.now(timezone.utc)

    if itype == APPLICATION_COMMAND:
        data = payload.get("data", {})
        if data.get("name") != APOLOMUTE_COMMAND["name"]:
            return None
        options = _option_map(data)
        proof = None
        attachment_id = options.get("proof")
        if attachment_id:
            resolved = (data.get("resolved") or {}).get("attachments") or {}
            proof = (resolved.get(attachment_id) or {}).get("url")
        return CommandInvoked(
            community_id=payload.get("guild_id", ""),
            invoker=actor,
            invoker_roles=roles,
            fields={
                "offender": options.get("offender"),
                "victim": options.get("victim"),
                "duration": options.get("duration"),
                "reason": options.get("reason"),
                "proof": proof,
                "review_request": bool(options.get("review-request", False)),
            },
            occurred_at=occurred,
        )
    if itype == MESSAGE_COMPONENT:
        return ButtonPressed(
            custom_id=payload.get("data", {}).get("custom_id", ""),
            actor=actor, actor_roles=roles, occurred_at=occurred,
        )
    if itype == MODAL_SUBMIT:
        data = payload.get("data", {})
        text_fields: dict[str, str] = {}
        for row in data.get("components", []):
            for component in row.get("components", []):
                text_fields[component.get("custom_id", "text")] = component.get("value", "")
        return ModalSubmitted(
            custom_id=data.get("custom_id", ""),
            actor=actor, text_fields=text_fields, actor_roles=roles,
            occurred_at=occurred,
        )
    return None


def _ephemeral(content: str) -> dict[str, Any]:
    return {"type": CB_MESSAGE, "data": {"content": content, "flags": EPHEMERAL}}


def _modal(custom_id: str, title: str) -> dict[str, Any]:
    return {
        "type": CB_MODAL,
        "data": {
            "custom_id": custom_id,
            "title": title,
            "components": [{
                "type": 1,
                "components": [{
                    "type": 4, "custom_id": "text", "style": 2,
                    "label": "Your message", "required": True,
                    "min_length": 1, "max_length": MAX_TEXT_LEN,
                }],
            }],
        },
    }


class InteractionsEndpoint:
    """Signature check + routing for Discord's interaction callbacks."""

    def __init__(self, service, settings: DiscordSettings):
        self.service = service
        self.settings = settings

    def handle(self, signature: str | None, timestamp: str | None,
               body: bytes) -> tuple[int, dict[str, Any]]:
        if not signature or not timestamp or not verify_signature(
            self.settings.public_key, signature, timestamp, body
        ):
            return 401, {"detail": "invalid request signature"}
        payload = json.loads(body)
        if payload.get("type") == PING:
            return 200, {"type": CB_PONG}
        inbound = normalize_interaction(payload)
        if inbound is None:
            return 200, _ephemeral("Nothing to do with that interaction.")
        if isinstance(inbound, CommandInvoked):
            bot_id = (payload.get("application_id") or "")
            fields = inbound.fields
            if bot_id and bot_id in (fields.get("offender"), fields.get("victim")):
                return 200, _ephemeral("I cannot be a party to a case.")
        try:
            result = self.service.handle_interaction(inbound)
        except Unauthorized:
            return 200, _ephemeral("This is not your decision to make.")
        except (StaleInteraction,) as exc:
            return 200, _ephemeral(f"Already handled: {exc}")
        except UnknownCase:
            return 200, _ephemeral("That case no longer exists.")
        except Exception as exc:  # validation and platform errors
            log.warning("interaction failed: %s", exc)
            return 200, _ephemeral(f"Could not process that: {exc}")
        if hasattr(result, "open_modal") and getattr(result, "open_modal", False):
            title = "Apology request" if result.action == "vreq_yes" else "Your apology"
            return 200, _modal(f"apolo.v1.{result.case_id}.{result.action}", title)
        if isinstance(inbound, CommandInvoked):
            return 200, _ephemeral(
                f"Case {result.case_id} opened: offender muted, victim prompted."
            )
        return 200, _ephemeral("Recorded.")
