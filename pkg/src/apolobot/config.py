"""Operator configuration: one TOML file plus APOLO_* env overrides.

Schema (all sections optional unless running the Discord binding)::

    data_dir = "data"

    [mediation]
    default_stage_timeout = 86400   # seconds per stage, clamped to mute end
    max_attempts = 1                # apology attempts before final rejection
    auto_unmute = false             # skip the manual unmute button

    [discord]
    bot_token = "..."        # or APOLO_BOT_TOKEN
    application_id = "..."
    public_key = "..."       # interactions endpoint verification key (hex)
    community_id = "..."     # guild id
    log_channel_id = "..."
    thread_parent_channel_id = "..."
    moderator_role_ids = ["..."]
    mute_role_id = "..."     # fallback role for mutes past the timeout cap

    [api]
    bind = "127.0.0.1:8642"

    [[api.tokens]]
    token = "..."            # or APOLO_API_TOKEN (scope moderate)
    scope = "read" | "sim" | "moderate"

    [mediation.templates]
    victim_prompt = "..."    # optional overrides, placeholders enforced
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .model import MediationConfig
from .templates import validate_templates

ENV_PREFIX = "APOLO_"

SCOPES = ("read", "sim", "moderate")


@dataclass(frozen=True)
class TokenEntry:
    token: str
    scope: str


@dataclass(frozen=True)
class DiscordSettings:
    bot_token: str = ""
    application_id: str = ""
    public_key: str = ""
    community_id: str = ""
    log_channel_id: str = ""
    thread_parent_channel_id: str = ""
    moderator_role_ids: frozenset[str] = frozenset()
    mute_role_id: str = ""


@dataclass(frozen=True)
class AppConfig:
    data_dir: Path = Path("data")
    mediation: MediationConfig = field(default_factory=MediationConfig)
    discord: DiscordSettings = field(default_factory=DiscordSettings)
    api_bind: str = "127.0.0.1:8642"
    tokens: tuple[TokenEntry, ...] = ()

    def scope_for(self, token: str | None) -> str | None:
        if not token:
            return None
        for entry in self.tokens:
            if entry.token == token:
                return entry.scope
        return None


def _env(name: str, fallback: str) -> str:
    return os.environ.get(ENV_PREFIX + name, fallback)


def load_config(path: str | Path) -> AppConfig:
    """Parse and validate the config file; raises ConfigError with the
    offending key (never echoing secret values)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from exc

    med = raw.get("mediation", {})
    templates = dict(med.get("templates", {}))
    problems = validate_templates(templates)
    if problems:
        raise ConfigError("; ".join(problems))

    disc = raw.get("discord", {})
    discord = DiscordSettings(
        bot_token=_env("BOT_TOKEN", disc.get("bot_token", "")),
        application_id=str(disc.get("application_id", "")),
        public_key=_env("PUBLIC_KEY", disc.get("public_key", "")),
        community_id=str(disc.get("community_id", "")),
        log_channel_id=str(disc.get("log_channel_id", "")),
        thread_parent_channel_id=str(disc.get("thread_parent_channel_id", "")),
        moderator_role_ids=frozenset(str(r) for r in disc.get("moderator_role_ids", [])),
        mute_role_id=str(disc.get("mute_role_id", "")),
    )

    try:
        mediation = MediationConfig(
            default_stage_timeout=int(med.get("default_stage_timeout", 86400)),
            max_attempts=int(med.get("max_attempts", 1)),
            auto_unmute=bool(med.get("auto_unmute", False)),
            moderator_role_ids=discord.moderator_role_ids,
            log_channel_id=discord.log_channel_id,
            templates=templates,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [mediation] settings: {exc}") from exc

    api = raw.get("api", {})
    tokens = []
    for entry in api.get("tokens", []):
        scope = entry.get("scope", "read")
        if scope not in SCOPES:
            raise ConfigError(f"api token scope must be one of {SCOPES}, got {scope!r}")
        if not entry.get("token"):
            raise ConfigError("api token entry missing 'token'")
        tokens.append(TokenEntry(token=str(entry["token"]), scope=scope))
    env_token = os.environ.get(ENV_PREFIX + "API_TOKEN")
    if env_token:
        tokens.append(TokenEntry(token=env_token, scope="moderate"))

    return AppConfig(
        data_dir=Path(raw.get("data_dir", "data")),
        mediation=mediation,
        discord=discord,
        api_bind=str(api.get("bind", "127.0.0.1:8642")),
        tokens=tuple(tokens),
    )


def require_discord_settings(config: AppConfig) -> DiscordSettings:
    """Check everything the Discord binding needs is present."""
    disc = config.discord
    missing = [
        name
        for name, value in (
            ("bot_token", disc.bot_token),
            ("application_id", disc.application_id),
            ("community_id", disc.community_id),
            ("log_channel_id", disc.log_channel_id),
            ("thread_parent_channel_id", disc.thread_parent_channel_id),
        )
        if not value
    ]
    if not disc.moderator_role_ids:
        missing.append("moderator_role_ids")
    if missing:
        raise ConfigError(f"[discord] settings missing: {', '.join(missing)}")
    return disc
