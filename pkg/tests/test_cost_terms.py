"""
Tests for the objective terms and their analytic gradients
"""
import numpy as np
import pytest

from perception.papt_predictor import BallisticTrajectory
from planner.cost_terms import (
    TERMS, PlannerConfig, PlannerConfigError, PlanningContext, StaticObstacle, cost_dodge,
    cost_feasibility, cost_relvel, cost_smoothness, cost_static, cost_time, evaluate_costs, term_cost,
    weighted_total,
)
from planner.gradient_check import (
    check_instance, finite_difference, gradients_pass, random_instance, relative_error, run_gradient_check,
)
from trajectory.minco import BoundaryState, construct
from uncertainty.uncertainty_model import SurvivingSet, SurvivingTrajectory, UncertaintyParams


def _unit_move():
    return construct(np.zeros((0, 3)), np.array([1.0]),
                     BoundaryState.at_rest(np.zeros(3)), BoundaryState.at_rest(np.ones(3)))


def _threat_through(point, flight, t_release=0.0):
    """Surviving arc that passes through point after the given flight time"""
    p0 = point + np.array([4.0, 0.0, 0.5])
    v0 = (point - p0 + 0.5 * np.array([0.0, 0.0, 9.81]) * flight ** 2) / flight
    surviving = SurvivingSet()
    surviving.add(SurvivingTrajectory.from_ballistic(
        BallisticTrajectory(t_release, p0, v0), UncertaintyParams(), z_ground=-10.0))
    return surviving


def test_config_validation():
    with pytest.raises(PlannerConfigError):
        PlannerConfig(w_dodge=-1.0)
    with pytest.raises(PlannerConfigError):
        PlannerConfig(samples_per_segment=1)
    with pytest.raises(PlannerConfigError):
        PlannerConfig(epsilon=0.0)
    assert set(PlannerConfig().weights()) == set(TERMS)


def test_smoothness_of_unit_quintic():
    value, d_coeffs, d_durations = cost_smoothness(_unit_move())
    # three axes each carry the 0 -> 1 rest-to-rest quintic
    assert value == pytest.approx(3 * 720.0)
    assert d_coeffs.shape == (1, 6, 3)
    assert d_durations[0] == pytest.approx(3 * 60.0 ** 2)


def test_time_cost():
    value, grad = cost_time(np.array([0.5, 1.5, 2.0]))
    assert value == pytest.approx(4.0)
    np.testing.assert_array_equal(grad, np.ones(3))


def test_feasibility_is_zero_inside_limits():
    value, d_coeffs, d_durations = cost_feasibility(_unit_move(), PlannerConfig())
    assert value == 0.0
    assert not d_coeffs.any() and not d_durations.any()


def test_feasibility_penalises_speeding():
    value, d_coeffs, _ = cost_feasibility(_unit_move(), PlannerConfig(v_max=0.5))
    assert value > 0.0
    assert np.abs(d_coeffs).max() > 0.0


def test_static_obstacle_hinge():
    traj = _unit_move()
    cfg = PlannerConfig()
    assert cost_static(traj, [], cfg)[0] == 0.0
    far = StaticObstacle(np.array([10.0, 10.0, 10.0]), 0.5)
    assert cost_static(traj, [far], cfg)[0] == 0.0
    near = StaticObstacle(np.array([0.5, 0.5, 0.5]), 0.3)
    assert cost_static(traj, [near], cfg)[0] > 0.0
    with pytest.raises(PlannerConfigError):
        StaticObstacle(np.zeros(3), 0.0)


def test_threat_terms_vanish_without_threats():
    traj = _unit_move()
    cfg = PlannerConfig()
    assert cost_dodge(traj, SurvivingSet(), 0.0, cfg)[0] == 0.0
    assert cost_relvel(traj, SurvivingSet(), 0.0, cfg)[0] == 0.0


def test_dodge_penalises_sharing_the_arc():
    traj = _unit_move()
    midpoint = traj.eval(0.5)
    threat = _threat_through(midpoint, 0.5)
    cfg = PlannerConfig()
    value, _, _ = cost_dodge(traj, threat, 0.0, cfg)
    assert value > 0.0
    # same arc released long ago has already landed
    assert cost_dodge(traj, threat, 30.0, cfg)[0] == 0.0
    # the spatial-free view keeps the inflated safety radius only
    assert cost_dodge(traj, threat.as_batch(spatial=False), 0.0, cfg)[0] <= value


def test_relvel_measures_closing_speed():
    traj = _unit_move()
    threat = _threat_through(traj.eval(0.5), 0.5)
    value, d_coeffs, _ = cost_relvel(traj, threat, 0.0, PlannerConfig())
    assert value > 0.0
    assert np.isfinite(d_coeffs).all()


def test_term_cost_rejects_unknown_names():
    with pytest.raises(KeyError):
        term_cost("wind", _unit_move(), PlanningContext(), PlannerConfig())


def test_weighted_total_matches_weights():
    cfg = PlannerConfig()
    values, _, _ = evaluate_costs(_unit_move(), PlanningContext(), cfg)
    expected = cfg.w_smoothness * 3 * 720.0 + cfg.w_time * 1.0
    assert weighted_total(values, cfg) == pytest.approx(expected)


def test_finite_difference_helpers():
    grad = finite_difference(lambda x: float(x @ x), np.array([1.0, -2.0]), 1e-6)
    np.testing.assert_allclose(grad, [2.0, -4.0], atol=1e-6)
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.zeros(0), np.zeros(0)) == 0.0


def test_relative_error_scales_small_gradients():
    small = np.array([1e-3, 2e-3])
    assert relative_error(small, small * np.array([1.0, 1.01])) == pytest.approx(0.01 / 1.01, rel=1e-9)
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.zeros(2), np.array([0.0, 1e-9])) == pytest.approx(1e-3)


def test_single_instance_gradients_agree():
    instance = random_instance(np.random.default_rng(7))
    errors = check_instance(instance)
    assert set(errors) == set(TERMS) | {"total"}
    for name, err in errors.items():
        assert err["q"] < 1e-5, name
        assert err["T"] < 1e-5, name


def test_gradient_check_table_passes():
    table = run_gradient_check(n_instances=3, seed=1)
    assert set(table.index) == set(TERMS) | {"total"}
    assert gradients_pass(table)


@pytest.mark.slow
def test_gradient_check_hundred_instances():
    assert gradients_pass(run_gradient_check(n_instances=100, seed=0))
