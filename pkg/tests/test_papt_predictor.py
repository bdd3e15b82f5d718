"""
Tests for keypoint smoothing, release detection and ballistic prediction
"""
import numpy as np
import pytest

from perception.arm_motion import ArmMotionModel
from perception.camera_geometry import Joint, Keypoint3D
from perception.papt_predictor import (
    GRAVITY, BallisticError, BallisticTrajectory, NonMonotoneTimestampsError, OutOfDomainError,
    PaptPredictor, ReleaseCandidate, ReleaseDetectorConfig, SplineConfig, SplineError,
    TooFewPointsError, ballistic_eval, detect_release, fit_spline, grid_window, predict_ballistic,
)
from simulation.projectile import integrate


def _window(times, positions, joint=Joint.RIGHT_WRIST):
    return [Keypoint3D(p, t, joint) for t, p in zip(times, positions)]


def _axes(values):
    """Same scalar signal on all three axes"""
    values = np.asarray(values, dtype=float)
    return np.stack([values, values, values], axis=1)


def test_interpolation_reproduces_cubic():
    times = np.linspace(0.0, 0.7, 8)
    cubic = lambda t: 3 * t ** 3 - t + 2
    spline = fit_spline(_window(times, _axes(cubic(times))), SplineConfig(smoothing=0.0))

    p, _, _ = spline.eval(times)
    np.testing.assert_allclose(p[:, 0], cubic(times), atol=1e-12)

    interior = np.linspace(0.05, 0.65, 25)
    p, v, a = spline.eval(interior)
    np.testing.assert_allclose(p[:, 1], cubic(interior), atol=1e-6)
    np.testing.assert_allclose(v[:, 1], 9 * interior ** 2 - 1, atol=1e-6)
    np.testing.assert_allclose(a[:, 2], 18 * interior, atol=1e-6)


@pytest.mark.parametrize("smoothing", [0.0, 1e-4, 1.0])
def test_constant_samples_stay_constant(smoothing):
    times = np.arange(8) / 30.0
    spline = fit_spline(_window(times, np.full((8, 3), 5.0)), SplineConfig(smoothing=smoothing))
    p, v, a = spline.eval(np.linspace(times[0], times[-1], 17))
    np.testing.assert_allclose(p, 5.0, atol=1e-9)
    np.testing.assert_allclose(v, 0.0, atol=1e-9)
    np.testing.assert_allclose(a, 0.0, atol=1e-9)


def test_free_fall_acceleration():
    times = np.arange(8) / 30.0
    z = 3.0 - 0.5 * GRAVITY * times ** 2
    positions = np.column_stack([np.zeros(8), np.zeros(8), z])
    spline = fit_spline(_window(times, positions), SplineConfig(smoothing=0.0))
    _, _, a = spline.eval(times[1:-1])
    np.testing.assert_allclose(a[:, 2], -GRAVITY, atol=1e-3)


def test_linear_motion_has_no_acceleration():
    times = np.arange(8) / 30.0
    positions = np.array([1.0, -2.0, 0.5]) + np.outer(times, [2.0, 0.5, -1.0])
    for smoothing in (0.0, 1e-4):
        spline = fit_spline(_window(times, positions), SplineConfig(smoothing=smoothing))
        _, v, a = spline.eval(np.linspace(times[0], times[-1], 11))
        np.testing.assert_allclose(a, 0.0, atol=1e-6)
        np.testing.assert_allclose(v, np.tile([2.0, 0.5, -1.0], (11, 1)), atol=1e-6)


def test_roughness_never_increases_with_smoothing(rng):
    times = np.cumsum(rng.uniform(0.02, 0.05, 8))
    positions = rng.normal(0.0, 0.1, (8, 3))
    window = _window(times, positions)
    roughness = [fit_spline(window, SplineConfig(smoothing=lam)).roughness()
                 for lam in (0.0, 1e-7, 1e-5, 1e-4, 1e-2, 1.0)]
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(roughness, roughness[1:]))


def test_fit_errors():
    times = np.arange(3) / 30.0
    with pytest.raises(TooFewPointsError):
        fit_spline(_window(times, np.zeros((3, 3))), SplineConfig())
    times = np.array([0.0, 0.1, 0.1, 0.2, 0.3])
    with pytest.raises(NonMonotoneTimestampsError):
        fit_spline(_window(times, np.zeros((5, 3))), SplineConfig())
    with pytest.raises(SplineError):
        SplineConfig(window=3)
    with pytest.raises(SplineError):
        ReleaseDetectorConfig(accel_threshold=0.0)


def test_eval_outside_domain_raises():
    times = np.arange(8) / 30.0
    spline = fit_spline(_window(times, np.zeros((8, 3))), SplineConfig())
    with pytest.raises(OutOfDomainError):
        spline.eval(times[-1] + 0.01)
    with pytest.raises(OutOfDomainError):
        spline.eval(times[0] - 0.01)


def _spline_of(positions_fn, times, smoothing=0.0):
    return fit_spline(_window(times, np.array([positions_fn(t) for t in times])),
                      SplineConfig(smoothing=smoothing))


def test_constant_velocity_stream_has_no_candidates():
    times = np.arange(8) / 30.0
    spline = _spline_of(lambda t: np.array([3.0 * t, 0.0, 1.5]), times)
    scan = np.linspace(times[0], times[-1], 30)
    assert detect_release(spline, ReleaseDetectorConfig(25.0), scan) == []


def test_decelerating_stream_fails_consistency():
    times = np.arange(8) / 30.0
    # v = 20 - 60 t stays positive over the window while a = -60
    spline = _spline_of(lambda t: np.array([20.0 * t - 30.0 * t ** 2, 0.0, 1.5]), times)
    scan = np.linspace(times[0], times[-1], 30)
    assert detect_release(spline, ReleaseDetectorConfig(25.0), scan) == []


def test_accelerating_stream_emits_every_scan_instant():
    times = np.arange(8) / 30.0
    spline = _spline_of(lambda t: np.array([1.0 * t + 30.0 * t ** 2, 0.0, 1.5]), times)
    scan = np.linspace(times[0], times[-1], 12)
    candidates = detect_release(spline, ReleaseDetectorConfig(25.0), scan)
    assert [c.t_release for c in candidates] == pytest.approx(list(scan))
    np.testing.assert_allclose(candidates[3].velocity, [1.0 + 60.0 * scan[3], 0.0, 0.0], atol=1e-9)
    assert detect_release(spline, ReleaseDetectorConfig(61.0), scan) == []


def test_detection_at_analytic_threshold_crossing():
    """Densely sampled arm ramp: first candidate within one grid step of the crossing"""
    arm = ArmMotionModel(np.array([3.6, 0.0, 1.7]), np.array([-6.0, 0.0, 1.5]), 1.0)
    crossing = arm.threshold_crossing_time(25.0)
    assert arm.t_accel < crossing < arm.release_time

    times = np.arange(arm.t_accel - 0.02, arm.release_time - 0.01, 0.002)
    spline = _spline_of(lambda t: arm.wrist_state(Joint.RIGHT_WRIST, t)[0], times)
    dt = 0.005
    scan = np.arange(np.ceil(times[2] / dt), np.floor(times[-3] / dt) + 1) * dt
    candidates = detect_release(spline, ReleaseDetectorConfig(25.0), scan)
    assert candidates
    assert abs(candidates[0].t_release - crossing) <= dt


def test_ballistic_examples():
    drop = BallisticTrajectory(0.0, np.array([0.0, 0.0, 10.0]), np.zeros(3))
    p, v = ballistic_eval(drop, 1.0)
    np.testing.assert_allclose(p, [0.0, 0.0, 10.0 - 4.905], atol=1e-12)
    np.testing.assert_allclose(v, [0.0, 0.0, -GRAVITY], atol=1e-12)

    lob = BallisticTrajectory(2.0, np.array([0.0, 0.0, 1.5]), np.array([6.0, 0.0, 3.0]))
    p, _ = lob.evaluate(0.5)
    np.testing.assert_allclose(p, [3.0, 0.0, 1.77375], atol=1e-12)

    with pytest.raises(BallisticError):
        ballistic_eval(lob, -0.1)
    with pytest.raises(BallisticError):
        BallisticTrajectory(0.0, np.array([np.nan, 0.0, 0.0]), np.zeros(3))
    with pytest.raises(BallisticError):
        BallisticTrajectory(0.0, np.zeros(3), np.zeros(3), g=0.0)


def test_ballistic_matches_drag_free_integration():
    traj = BallisticTrajectory(0.0, np.array([0.5, -0.2, 1.5]), np.array([6.0, 1.0, 3.0]))
    times, states = integrate(traj.p0, traj.v0, 2.0, 1e-3, c_d=0.0)
    p, v = ballistic_eval(traj, times)
    assert np.abs(states[:, :3] - p).max() < 1e-9
    assert np.abs(states[:, 3:] - v).max() < 1e-9


def test_ballistic_energy_conserved():
    traj = BallisticTrajectory(0.0, np.array([0.0, 0.0, 1.5]), np.array([4.0, -2.0, 5.0]))
    p, v = ballistic_eval(traj, np.linspace(0.0, 2.0, 101))
    energy = 0.5 * np.sum(v ** 2, axis=1) + GRAVITY * p[:, 2]
    assert np.ptp(energy) < 1e-9


def test_predict_ballistic_uses_candidate_state():
    candidate = ReleaseCandidate(1.25, np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
    traj = predict_ballistic(candidate)
    assert traj.t_release == 1.25
    np.testing.assert_array_equal(traj.v0, candidate.velocity)


def test_grid_window_is_contiguous_and_disjoint():
    first = grid_window(0.0, 1 / 30, 0.005, -1)
    np.testing.assert_array_equal(first, np.arange(1, 7))
    second = grid_window(1 / 30, 2 / 30, 0.005, int(first[-1]))
    np.testing.assert_array_equal(second, np.arange(7, 14))
    assert grid_window(2 / 30, 2 / 30 + 0.001, 0.005, 13).size == 0


def test_predictor_emits_each_grid_instant_once():
    predictor = PaptPredictor(SplineConfig(window=6, smoothing=0.0), ReleaseDetectorConfig(25.0))
    emitted = []
    for i in range(20):
        t = i / 30.0
        emitted.extend(predictor.update(Keypoint3D(np.array([20.0 * t ** 2, 0.0, 1.5]), t)))
    indices = [c.grid_index for c in emitted]
    assert len(indices) == len(set(indices))
    # one interval behind the newest knot: (3/30, 4/30] first, (17/30, 18/30] last
    assert indices == list(range(21, 121))


def test_scan_lag_zero_scans_newest_interval():
    predictor = PaptPredictor(SplineConfig(window=6, smoothing=0.0, scan_lag=0), ReleaseDetectorConfig(25.0))
    emitted = []
    for i in range(8):
        t = i / 30.0
        emitted.extend(predictor.update(Keypoint3D(np.array([20.0 * t ** 2, 0.0, 1.5]), t)))
    assert [c.grid_index for c in emitted] == list(range(27, 47))


def test_scan_lag_must_leave_room_in_window():
    assert SplineConfig(window=4, scan_lag=2).scan_lag == 2
    with pytest.raises(SplineError):
        SplineConfig(window=8, scan_lag=7)
    with pytest.raises(SplineError):
        SplineConfig(scan_lag=-1)


def test_default_settings_catch_a_30hz_throw():
    """Default window, smoothing and threshold on the default 6 m/s throw sampled at 30 Hz"""
    arm = ArmMotionModel(np.array([3.65, 0.0, 1.7]), np.array([-4.548, 0.0, 3.913]), 1.0)
    predictor = PaptPredictor(SplineConfig(), ReleaseDetectorConfig())
    emitted = []
    for i in range(60):
        t = i / 30.0
        position, _, _ = arm.wrist_state(Joint.RIGHT_WRIST, t)
        emitted.extend(predictor.update(Keypoint3D(position, t)))

    assert min(c.t_release for c in emitted) > arm.t_windup + 0.5 * arm.timing.windup
    near_release = [c for c in emitted if arm.t_accel <= c.t_release <= arm.release_time + 0.05]
    assert near_release
    assert max(np.linalg.norm(c.velocity) for c in near_release) > 4.5


def test_predictor_ignores_stale_keypoints():
    predictor = PaptPredictor(SplineConfig(window=4), ReleaseDetectorConfig())
    predictor.update(Keypoint3D(np.zeros(3), 0.1))
    assert predictor.update(Keypoint3D(np.ones(3), 0.05)) == []
    assert len(predictor.window) == 1
