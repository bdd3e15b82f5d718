"""
Tests for residual collection and the envelope parameter search
"""
import numpy as np
import pytest

from simulation.calibration import (
    ResidualSamples, calibrate_uncertainty, calibration_batch, containment_fraction, search_params,
    trial_residuals,
)
from simulation.trial_runner import PerceptionPipeline, build_world
from uncertainty.uncertainty_model import UncertaintyParams


def _samples(elapsed, residual):
    return ResidualSamples(np.asarray(elapsed, dtype=float), np.asarray(residual, dtype=float), 1, 0)


def test_containment_fraction():
    samples = _samples([0.0, 0.5, 1.0, 1.0], [0.05, 0.2, 0.3, 0.5])
    params = UncertaintyParams(0.1, 0.2, 0.05)
    # radii 0.05, 0.175, 0.35, 0.35
    assert containment_fraction(samples, params) == pytest.approx(0.5)
    assert containment_fraction(ResidualSamples(), params) == 0.0


def test_extend_concatenates():
    merged = _samples([0.1], [0.2]).extend(ResidualSamples(trials_missed=1))
    assert merged.elapsed.size == 1
    assert (merged.trials_used, merged.trials_missed) == (1, 1)


def test_search_picks_smallest_gamma_first():
    result = search_params(_samples(np.zeros(10), np.full(10, 0.123)), 1.0)
    assert result.reached
    assert result.params.gamma == pytest.approx(0.13)
    assert (result.params.beta, result.params.alpha) == (0.0, 0.0)


def test_search_result_contains_target_share(rng):
    elapsed = rng.uniform(0.0, 1.0, 500)
    residual = 0.03 + 0.2 * elapsed + 0.4 * elapsed ** 2 + rng.normal(0.0, 0.01, 500)
    result = search_params(_samples(elapsed, residual), 0.95)
    assert result.reached
    assert containment_fraction(_samples(elapsed, residual), result.params) >= 0.95


def test_unreachable_target_reports_best():
    result = search_params(_samples([0.0, 0.0], [10.0, 0.02]), 1.0)
    assert not result.reached
    assert result.achieved == pytest.approx(0.5)


def test_target_must_be_a_fraction():
    with pytest.raises(ValueError):
        search_params(_samples([0.0], [0.0]), 1.5)
    with pytest.raises(ValueError):
        search_params(_samples([0.0], [0.0]), 0.0)


def test_batch_is_seeded(scenario):
    first = calibration_batch(scenario, 3, 5)
    second = calibration_batch(scenario, 3, 5)
    assert [s.seed for s in first] == [s.seed for s in second]
    assert [s.throw.attacker_position for s in first] == [s.throw.attacker_position for s in second]


def test_oracle_release_without_drag_needs_no_envelope(quiet_scenario):
    scenario = quiet_scenario.model_copy(update={"drag_coefficient": 0.0})
    samples = trial_residuals(scenario, oracle_release=True)
    assert samples.trials_used == 1
    assert samples.residual.max() < 1e-6
    result = calibrate_uncertainty(scenario, trials=3, target=0.99, oracle_release=True)
    assert result.reached
    assert (result.params.gamma, result.params.beta, result.params.alpha) == (0.01, 0.0, 0.0)


@pytest.mark.slow
def test_calibrated_envelope_holds_on_fresh_draws(scenario):
    result = calibrate_uncertainty(scenario, trials=60, target=0.99, master_seed=1)
    fresh = ResidualSamples()
    for s in calibration_batch(scenario, 40, master_seed=2):
        fresh = fresh.extend(trial_residuals(s))
    assert containment_fraction(fresh, result.params) >= 0.95


@pytest.mark.slow
def test_release_detection_timing_on_noisy_streams(scenario):
    """First candidate falls between one scan step before the threshold crossing and the release"""
    hits = 0
    draws = 100
    dt = scenario.papt.eval_grid_dt
    for seed in range(draws):
        world = build_world(scenario.with_seed(seed))
        attacker = world.attackers[0]
        crossing = attacker.arm.threshold_crossing_time(scenario.papt.accel_threshold)
        pipeline = PerceptionPipeline(scenario, world.camera)
        for frame in sorted(world.stream.frames, key=lambda f: f.delivery_time):
            pipeline.deliver(frame)
        if not pipeline.candidates:
            continue
        first = min(c.t_release for c in pipeline.candidates)
        if crossing - dt - 1.0 / scenario.noise.frame_rate <= first <= attacker.release_time:
            hits += 1
    assert hits >= 0.95 * draws
