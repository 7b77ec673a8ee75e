"""Operator command line: run the service, register commands, simulate,
enumerate workflow paths, inspect cases, export reports.

Exit codes: 0 ok, 2 config error, 3 platform permission error, 4 not found.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__, metrics, paths
from .adapters.discord import DiscordPlatform, InteractionsEndpoint
from .adapters.sim import ActorProfiles, InMemoryPlatform
from .api import ApiRuntime, create_app
from .config import AppConfig, load_config, require_discord_settings
from .errors import (
    ApoloError,
    ConfigError,
    MissingPermissions,
    PermissionDenied,
    UnknownCase,
)
from .model import MediationConfig, to_rfc3339
from .scheduler import Ticker, WallClock, WALL_TICK_SECONDS, VIRTUAL_TICK_SECONDS
from .service import CommunityRecord, CommunityRegistry, MediationService
from .simulate import simulate as run_simulation

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_PERMISSION = 3
EXIT_NOT_FOUND = 4


def _load(config_path: str) -> AppConfig:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _open_service(app_config: AppConfig, platform) -> MediationService:
    registry = CommunityRegistry(app_config.data_dir)
    return MediationService(app_config.data_dir, registry, platform)


@click.group()
@click.version_option(version=__version__)
def cli():
    """Apology-mediation workflow service."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s %(message)s")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--sim", "mode", flag_value="sim", default=True,
              help="Serve the in-memory simulated binding (default).")
@click.option("--discord", "mode", flag_value="discord",
              help="Serve the Discord binding.")
@click.option("--allow-sim", is_flag=True, default=False,
              help="Keep sim endpoints available alongside the Discord binding.")
@click.option("--host", default=None, help="Override the api bind host.")
@click.option("--port", default=None, type=int, help="Override the api bind port.")
def run(config_path: str, mode: str, allow_sim: bool, host: str | None, port: int | None):
    """Start the service: adapter, deadline ticker, and HTTP API."""
    import uvicorn

    app_config = _load(config_path)
    app_config.data_dir.mkdir(parents=True, exist_ok=True)

    if mode == "discord":
        try:
            settings = require_discord_settings(app_config)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        platform = DiscordPlatform(
            settings, templates=dict(app_config.mediation.templates)
        )
        try:
            platform.check_permissions()
            platform.ensure_commands_registered(settings.community_id)
        except MissingPermissions as exc:
            click.echo(f"missing permissions: {', '.join(exc.missing)}", err=True)
            sys.exit(EXIT_PERMISSION)
        except PermissionDenied as exc:
            click.echo(f"platform refused: {exc}", err=True)
            sys.exit(EXIT_PERMISSION)
        service = _open_service(app_config, platform)
        service.communities.register(CommunityRecord(
            community_id=settings.community_id,
            name="discord",
            config=app_config.mediation,
            moderators=(),
            thread_parent_channel=settings.thread_parent_channel_id,
            profiles=None,
            simulated=False,
        ))
        sim_enabled = allow_sim
        tick = WALL_TICK_SECONDS
    else:
        platform = InMemoryPlatform(clock=WallClock())
        service = _open_service(app_config, platform)
        sim_enabled = True
        tick = VIRTUAL_TICK_SECONDS

    recovered = service.recover()
    log.info("recovered %s", recovered)

    runtime = ApiRuntime(
        service=service,
        token_scopes={t.token: t.scope for t in app_config.tokens},
        sim_enabled=sim_enabled,
    )
    app = create_app(runtime)

    if mode == "discord":
        from fastapi import Request, Response

        endpoint = InteractionsEndpoint(service, settings)

        @app.post("/discord/interactions")
        async def discord_interactions(request: Request):
            body = await request.body()
            status, payload = endpoint.handle(
                request.headers.get("X-Signature-Ed25519"),
                request.headers.get("X-Signature-Timestamp"),
                body,
            )
            return Response(
                content=json.dumps(payload), status_code=status,
                media_type="application/json",
            )

    ticker = Ticker(service.scheduler, service.clock, interval=tick)
    ticker.start()
    bind_host, _, bind_port = app_config.api_bind.partition(":")
    try:
        uvicorn.run(app, host=host or bind_host or "127.0.0.1",
                    port=port or int(bind_port or 8642), log_level="info")
    finally:
        ticker.stop()


@cli.command("register-commands")
@click.option("--config", "config_path", required=True, type=click.Path())
def register_commands(config_path: str):
    """Idempotently (re)register the slash command with the platform."""
    app_config = _load(config_path)
    try:
        settings = require_discord_settings(app_config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    platform = DiscordPlatform(settings)
    try:
        platform.ensure_commands_registered(settings.community_id)
    except MissingPermissions as exc:
        click.echo(f"missing permissions: {', '.join(exc.missing)}", err=True)
        sys.exit(EXIT_PERMISSION)
    except PermissionDenied as exc:
        click.echo(f"platform refused: {exc}", err=True)
        sys.exit(EXIT_PERMISSION)
    click.echo("commands registered")


@cli.command("simulate")
@click.option("--profiles", "profiles_path", required=True, type=click.Path())
@click.option("--trials", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", default=None, type=click.Path())
def simulate_cmd(profiles_path: str, trials: int, seed: int, out_path: str | None):
    """Run seeded Monte-Carlo trials and print (or save) the report."""
    path = Path(profiles_path)
    if not path.exists():
        click.echo(f"profiles file not found: {path}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        spec = json.loads(path.read_text())
        profiles = ActorProfiles.from_dict(spec)
        cfg = spec.get("config", {})
        config = MediationConfig(
            default_stage_timeout=int(cfg.get("default_stage_timeout", 86400)),
            max_attempts=int(cfg.get("max_attempts", 1)),
            auto_unmute=bool(cfg.get("auto_unmute", False)),
            moderator_role_ids=frozenset({"moderator"}),
            log_channel_id="log",
        )
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        click.echo(f"bad profiles file: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        report = run_simulation(
            config, profiles, trials, seed,
            duration=spec.get("duration", "1h"),
            review_request=bool(spec.get("review_request", False)),
        )
    except ValueError as exc:
        click.echo(f"bad simulation parameters: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    rendered = report.to_json()
    if out_path:
        Path(out_path).write_text(rendered + "\n")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(rendered)


@cli.command("enumerate")
@click.option("--review-request", is_flag=True, default=False)
@click.option("--max-attempts", default=1, type=int)
@click.option("--auto-unmute", is_flag=True, default=False)
@click.option("--max-depth", default=16, type=int)
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
def enumerate_cmd(review_request: bool, max_attempts: int, auto_unmute: bool,
                  max_depth: int, fmt: str):
    """List every workflow path from case open to a terminal state."""
    try:
        config = MediationConfig(
            max_attempts=max_attempts, auto_unmute=auto_unmute, log_channel_id="log"
        )
        results = paths.enumerate_terminal_paths(
            config, review_request=review_request, max_depth=max_depth
        )
    except ValueError as exc:
        click.echo(f"bad enumeration parameters: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if fmt == "json":
        click.echo(json.dumps([
            {
                "events": [e.value for e in p.events],
                "terminal_state": p.terminal_state.value,
                "closure_reason": p.closure_reason.value,
            }
            for p in results
        ], indent=2))
        return
    restored = sum(1 for p in results if p.terminal_state.value == "resolved_restored")
    click.echo(f"{len(results)} terminal paths ({restored} restored)")
    for p in results:
        marker = "RESTORED" if p.terminal_state.value == "resolved_restored" else "punitive"
        click.echo(f"  [{marker:8}] {p.closure_reason.value:24} "
                   + " -> ".join(e.value for e in p.events))


@cli.group()
def case():
    """Inspect persisted cases."""


def _service_for_inspection(config_path: str) -> MediationService:
    app_config = _load(config_path)
    if not app_config.data_dir.exists():
        click.echo(f"data directory not found: {app_config.data_dir}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    return _open_service(app_config, InMemoryPlatform())


@case.command("show")
@click.argument("case_id")
@click.option("--config", "config_path", required=True, type=click.Path())
def case_show(case_id: str, config_path: str):
    """Human-readable dump of one case."""
    service = _service_for_inspection(config_path)
    try:
        loaded, version = service.store.load_or_raise(case_id)
    except UnknownCase:
        click.echo(f"case not found: {case_id}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    body = loaded.to_dict()
    if loaded.terminal:
        body["outcome"] = metrics.classify_outcome(loaded).to_dict()
    click.echo(json.dumps(body, indent=2, sort_keys=True))


@case.command("events")
@click.argument("case_id")
@click.option("--config", "config_path", required=True, type=click.Path())
def case_events(case_id: str, config_path: str):
    """Ordered event log of one case."""
    service = _service_for_inspection(config_path)
    events = service.store.events(case_id)
    if not events:
        click.echo(f"case not found: {case_id}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    for event in events:
        click.echo(
            f"{event.event_seq:3} {to_rfc3339(event.occurred_at)} "
            f"{event.actor:12} {event.kind.value:22} "
            + (json.dumps(dict(event.payload), sort_keys=True) if event.payload else "")
        )


@cli.command("export")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--window", default=None,
              help="created_at window, '<start>..<end>' in RFC 3339 (bounds optional).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--out", "out_path", default=None, type=click.Path())
def export_cmd(config_path: str, window: str | None, fmt: str, out_path: str | None):
    """Funnel and recidivism report over terminal cases."""
    from .model import from_rfc3339

    service = _service_for_inspection(config_path)
    start = end = None
    if window:
        if ".." not in window:
            click.echo("window must look like <start>..<end>", err=True)
            sys.exit(EXIT_CONFIG)
        start_s, _, end_s = window.partition("..")
        try:
            start = from_rfc3339(start_s) if start_s else None
            end = from_rfc3339(end_s) if end_s else None
        except ValueError as exc:
            click.echo(f"bad window bound: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
    cases = service.store.all_cases()
    report = metrics.export_report(cases, start, end)
    if fmt == "json":
        rendered = metrics.export_json(report)
    else:
        terminal = [
            c for c in cases
            if c.terminal
            and (start is None or c.created_at >= start)
            and (end is None or c.created_at < end)
        ]
        lines = [metrics.funnel_to_csv(metrics.funnel(terminal))]
        lines.append("offender,recidivism")
        for offender, count in sorted(report["recidivism"].items()):
            lines.append(f"{offender},{count}")
        rendered = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(rendered if rendered.endswith("\n") else rendered + "\n")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(rendered)


def main():
    try:
        cli(standalone_mode=True)
    except ApoloError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
