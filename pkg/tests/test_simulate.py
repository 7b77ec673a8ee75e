"""Monte-Carlo reports and the closed-form restoration oracle."""

from __future__ import annotations

import math

import pytest

from apolobot.adapters.sim import ActorProfiles, BehaviorProfile
from apolobot.metrics import NO_ENGAGEMENT
from apolobot.model import MediationConfig
from apolobot.simulate import analytic_restoration_probability, simulate


def config(**overrides):
    return MediationConfig(
        moderator_role_ids=frozenset({"moderator"}), log_channel_id="log", **overrides
    )


ACCEPTANCE_PROFILE = ActorProfiles(
    victim=BehaviorProfile(p_engage=0.8, p_approve=0.9),
    offender=BehaviorProfile(p_engage=0.5),
    moderator=BehaviorProfile(p_engage=1.0, p_approve=1.0),
)


# --- analytic oracle ---------------------------------------------------------------


def test_analytic_all_ones():
    assert analytic_restoration_probability(ActorProfiles()) == 1.0


@pytest.mark.parametrize("gate", ["victim", "offender", "moderator"])
def test_analytic_any_zero_gate(gate):
    kwargs = {gate: BehaviorProfile(p_engage=0.0, p_approve=0.0)}
    profiles = ActorProfiles(**kwargs)
    assert analytic_restoration_probability(profiles, auto_unmute=False) == 0.0


def test_analytic_acceptance_product():
    # 0.8 * 0.5 * 1.0 * 0.9, hand-checkable
    assert analytic_restoration_probability(
        ACCEPTANCE_PROFILE, auto_unmute=True
    ) == pytest.approx(0.36)


def test_analytic_includes_review_and_unmute_gates():
    profiles = ActorProfiles(
        victim=BehaviorProfile(p_engage=0.8, p_approve=0.9),
        offender=BehaviorProfile(p_engage=0.5),
        moderator=BehaviorProfile(p_engage=0.7, p_approve=0.6),
    )
    base = 0.8 * 0.5 * 0.6 * 0.9
    assert analytic_restoration_probability(
        profiles, auto_unmute=True
    ) == pytest.approx(base)
    assert analytic_restoration_probability(
        profiles, review_request=True, auto_unmute=True
    ) == pytest.approx(base * 0.6)
    assert analytic_restoration_probability(
        profiles, auto_unmute=False
    ) == pytest.approx(base * 0.7)


# --- simulate ---------------------------------------------------------------------------


def test_simulate_requires_trials():
    with pytest.raises(ValueError):
        simulate(config(), ActorProfiles(), 0, seed=1)


def test_simulate_all_ones_restores_every_trial():
    report = simulate(config(auto_unmute=True), ActorProfiles(), 50, seed=9)
    assert report.restoration_rate == 1.0
    assert report.outcomes == {"full_restoration": 50}
    assert sum(report.outcomes.values()) == report.n_trials


def test_simulate_silent_victim_is_all_no_engagement():
    profiles = ActorProfiles(victim=BehaviorProfile(p_engage=0.0))
    report = simulate(config(auto_unmute=True), profiles, 40, seed=9, duration="7d")
    assert report.outcomes == {NO_ENGAGEMENT: 40}
    assert report.closure_reasons == {"victim_timeout": 40}
    assert report.restoration_rate == 0.0


def test_simulate_is_deterministic_per_seed():
    report_a = simulate(config(auto_unmute=True), ACCEPTANCE_PROFILE, 200, seed=42)
    report_b = simulate(config(auto_unmute=True), ACCEPTANCE_PROFILE, 200, seed=42)
    assert report_a == report_b
    report_c = simulate(config(auto_unmute=True), ACCEPTANCE_PROFILE, 200, seed=43)
    assert report_c != report_a


def test_simulate_tracks_analytic_oracle():
    n = 3000
    report = simulate(config(auto_unmute=True), ACCEPTANCE_PROFILE, n, seed=7)
    p = report.analytic_restoration_probability
    assert p == pytest.approx(0.36)
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(report.restoration_rate - p) <= 3 * sigma


def test_simulate_review_gate_changes_oracle():
    profiles = ActorProfiles(
        victim=BehaviorProfile(p_engage=1.0, p_approve=1.0),
        offender=BehaviorProfile(p_engage=1.0),
        moderator=BehaviorProfile(p_engage=1.0, p_approve=0.5),
    )
    n = 2000
    report = simulate(
        config(auto_unmute=True), profiles, n, seed=11, review_request=True
    )
    assert report.analytic_restoration_probability == pytest.approx(0.25)
    sigma = math.sqrt(0.25 * 0.75 / n)
    assert abs(report.restoration_rate - 0.25) <= 3 * sigma


def test_report_distribution_sums_to_trials():
    profiles = ActorProfiles(
        victim=BehaviorProfile(p_engage=0.6, p_approve=0.5),
        offender=BehaviorProfile(p_engage=0.7),
        moderator=BehaviorProfile(p_engage=0.9, p_approve=0.8),
    )
    report = simulate(config(), profiles, 300, seed=3, duration="30d")
    assert sum(report.outcomes.values()) == 300
    assert sum(report.closure_reasons.values()) == 300
    assert 1.0 <= report.mean_stages_reached <= 6.0
    assert report.to_dict()["seed"] == 3
