"""
Tests for the closed-loop trial
"""
import numpy as np
import pytest

from config.config_manager import ScenarioValidationError
from planner.replanner import Strategy
from simulation.trial_runner import (
    COLLISION_DISTANCE, Attacker, GroundTruthProjectile, build_world, launch_velocity, refine_minimum,
    run_trial,
)


def test_refine_minimum_recovers_parabola_vertex():
    times = np.linspace(0.0, 1.0, 11)
    distances = np.sqrt(0.04 + (times - 0.43) ** 2)
    d_min, when = refine_minimum(times, distances)
    assert d_min == pytest.approx(0.2, abs=1e-9)
    assert when == pytest.approx(0.43, abs=1e-9)


def test_refine_minimum_at_the_edge():
    times = np.array([0.0, 0.1, 0.2])
    d_min, when = refine_minimum(times, np.array([0.5, 0.7, 0.9]))
    assert (d_min, when) == (0.5, 0.0)


def test_projectile_stops_at_the_ground_crossing():
    attacker = Attacker(arm=None, release_time=0.0, p0=np.array([0.0, 0.0, 1.0]), v0=np.zeros(3),
                        landing_time=10.0)
    projectile = GroundTruthProjectile(attacker, c_d=0.0, z_ground=0.0)
    for t in np.arange(0.0, 0.5, 0.01):
        projectile.advance_to(float(t))
    assert projectile.landed
    assert projectile.position[2] == 0.0
    assert projectile.t_state == pytest.approx(np.sqrt(2.0 / 9.81), abs=1e-3)


def test_world_of_default_scenario(scenario):
    world = build_world(scenario)
    assert len(world.attackers) == 1
    attacker = world.attackers[0]
    assert attacker.release_time == pytest.approx(1.0)
    assert attacker.landing_time > attacker.release_time
    assert np.linalg.norm(attacker.v0) == pytest.approx(6.0)
    expected_frames = int(round(world.end_time * scenario.noise.frame_rate)) * 2
    assert len(world.stream.frames) == expected_frames


def test_zero_speed_throw_has_no_velocity(scenario):
    throw = scenario.throw.model_copy(update={"speed": 0.0})
    assert not launch_velocity(throw, np.array([3.65, 0.0, 1.7]), np.zeros(3), 0.02).any()


def test_unreachable_throw_is_a_scenario_error(scenario):
    throw = scenario.throw.model_copy(update={"speed": 1.0})
    with pytest.raises(ScenarioValidationError):
        build_world(scenario.model_copy(update={"throw": throw}))


def test_default_trial_dodges(scenario):
    result = run_trial(scenario)
    assert result.success
    assert result.d_min >= COLLISION_DISTANCE
    assert result.detection_time is not None
    assert result.first_plan_time is not None
    assert result.descent_monotone
    assert result.max_command_accel <= scenario.planner.a_max + 1e-9
    events = [name for _, name in result.timeline]
    assert "release" in events and "dodge_triggered" in events
    assert [t for t, _ in result.timeline] == sorted(t for t, _ in result.timeline)
    assert {"t", "uav_x", "plan_id", "surviving_count", "R_of_nearest"} <= set(result.trajectory_log.columns)


def test_frozen_uav_is_hit(scenario):
    result = run_trial(scenario, Strategy.FROZEN, capture_log=False)
    assert not result.success
    assert result.first_plan_time is None
    assert result.trajectory_log is None


def test_speed_zero_throw_is_harmless(scenario):
    throw = scenario.throw.model_copy(update={"speed": 0.0})
    result = run_trial(scenario.model_copy(update={"throw": throw}), capture_log=False)
    assert result.success
    assert result.first_plan_time is None


def test_record_is_json_ready(scenario):
    result = run_trial(scenario, Strategy.FROZEN, capture_log=False, keep_stream=True)
    record = result.to_record()
    assert record["strategy"] == "frozen"
    assert isinstance(record["timeline"], list)
    assert result.stream is not None and result.stream.frames


@pytest.mark.slow
def test_trials_are_deterministic(scenario):
    first = run_trial(scenario.with_seed(11), capture_log=False)
    second = run_trial(scenario.with_seed(11), capture_log=False)
    assert first.d_min == second.d_min
    assert first.timeline == second.timeline
