"""CLI subcommand and exit-code tests."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from apolobot.cli import cli
from apolobot.adapters.sim import InMemoryPlatform
from apolobot.model import EventKind
from apolobot.scheduler import VirtualClock
from apolobot.service import CommunityRegistry, MediationService
from conftest import T0


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path):
    config_path = tmp_path / "apolobot.toml"
    config_path.write_text(f'data_dir = "{tmp_path / "data"}"\n')
    clock = VirtualClock(T0)
    registry = CommunityRegistry(tmp_path / "data", fsync=False)
    registry.create_simulated()
    service = MediationService(
        tmp_path / "data", registry, InMemoryPlatform(clock=clock), clock, fsync=False
    )
    case = service.open_case(
        community_id="sim-1", offender_id="off-1", victim_id="vic-1",
        moderator_id="mod-1", duration="1h", reason="insult",
    )
    service.submit(case.case_id, EventKind.VICTIM_DECLINED, "vic-1")
    return {"config": str(config_path), "tmp": tmp_path, "case_id": case.case_id}


def test_enumerate_default_lists_single_restored_path(runner):
    result = runner.invoke(cli, ["enumerate"])
    assert result.exit_code == 0
    assert "20 terminal paths (1 restored)" in result.output
    assert (
        "victim_requested -> offender_apologized -> response_approved "
        "-> victim_accepted -> unmute_executed"
    ) in result.output


def test_enumerate_json_is_machine_parseable(runner):
    result = runner.invoke(cli, ["enumerate", "--format", "json", "--review-request"])
    assert result.exit_code == 0
    paths = json.loads(result.output)
    assert len(paths) == 24
    restored = [p for p in paths if p["terminal_state"] == "resolved_restored"]
    assert len(restored) == 1
    assert "request_approved" in restored[0]["events"]


def test_simulate_same_seed_identical_files(runner, tmp_path):
    profiles = tmp_path / "profiles.json"
    profiles.write_text(json.dumps({
        "victim": {"p_engage": 0.8, "p_approve": 0.9},
        "offender": {"p_engage": 0.5},
        "moderator": {"p_engage": 1.0, "p_approve": 1.0},
        "config": {"auto_unmute": True},
    }))
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (out_a, out_b):
        result = runner.invoke(cli, [
            "simulate", "--profiles", str(profiles), "--trials", "200",
            "--seed", "42", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
    assert out_a.read_text() == out_b.read_text()
    report = json.loads(out_a.read_text())
    assert report["n_trials"] == 200
    assert report["analytic_restoration_probability"] == pytest.approx(0.36)


def test_simulate_missing_profiles_is_config_error(runner, tmp_path):
    result = runner.invoke(cli, [
        "simulate", "--profiles", str(tmp_path / "nope.json"),
        "--trials", "1", "--seed", "1",
    ])
    assert result.exit_code == 2


def test_case_show_and_events(runner, workspace):
    result = runner.invoke(cli, [
        "case", "show", workspace["case_id"], "--config", workspace["config"],
    ])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert body["state"] == "closed_punitive"
    assert body["outcome"]["label"] == "no_engagement"

    result = runner.invoke(cli, [
        "case", "events", workspace["case_id"], "--config", workspace["config"],
    ])
    assert result.exit_code == 0
    assert "case_opened" in result.output and "victim_declined" in result.output


def test_case_show_unknown_exits_4(runner, workspace):
    result = runner.invoke(cli, [
        "case", "show", "ghost", "--config", workspace["config"],
    ])
    assert result.exit_code == 4


def test_missing_config_file_exits_2(runner):
    result = runner.invoke(cli, ["case", "show", "x", "--config", "/nope/apolo.toml"])
    assert result.exit_code == 2


def test_register_commands_without_discord_section_exits_2(runner, workspace):
    result = runner.invoke(cli, ["register-commands", "--config", workspace["config"]])
    assert result.exit_code == 2


def test_export_json_and_csv(runner, workspace):
    result = runner.invoke(cli, ["export", "--config", workspace["config"]])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["funnel"]["total_cases"] == 1
    assert report["recidivism"] == {"off-1": 1}

    result = runner.invoke(cli, [
        "export", "--config", workspace["config"], "--format", "csv",
    ])
    assert result.exit_code == 0
    assert result.output.splitlines()[0] == "stage,entered,advanced,dropped,drop_reasons"
    assert "offender,recidivism" in result.output


def test_export_window_filter(runner, workspace):
    result = runner.invoke(cli, [
        "export", "--config", workspace["config"],
        "--window", "2030-01-01T00:00:00Z..",
    ])
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert report["funnel"]["total_cases"] == 0


def test_bad_window_exits_2(runner, workspace):
    result = runner.invoke(cli, [
        "export", "--config", workspace["config"], "--window", "not-a-window",
    ])
    assert result.exit_code == 2


def test_discord_run_without_grants_exits_3(runner, tmp_path, monkeypatch):
    config_path = tmp_path / "discord.toml"
    config_path.write_text(
        f'data_dir = "{tmp_path / "data"}"\n'
        '[discord]\n'
        'bot_token = "t"\napplication_id = "a"\npublic_key = "k"\n'
        'community_id = "g"\nlog_channel_id = "l"\n'
        'thread_parent_channel_id = "m"\nmoderator_role_ids = ["r"]\n'
    )

    from apolobot import cli as cli_module
    from apolobot.errors import MissingPermissions

    class Grantless:
        def __init__(self, *args, **kwargs):
            pass

        def check_permissions(self):
            raise MissingPermissions(["MODERATE_MEMBERS"])

    monkeypatch.setattr(cli_module, "DiscordPlatform", Grantless)
    result = runner.invoke(cli, ["run", "--config", str(config_path), "--discord"])
    assert result.exit_code == 3
    assert "MODERATE_MEMBERS" in result.output


def test_enumerate_depth_overflow_exits_2(runner):
    result = runner.invoke(cli, ["enumerate", "--max-attempts", "8", "--max-depth", "10"])
    assert result.exit_code == 2
    assert "max_depth" in result.output or "max-depth" in result.output
