"""
Pose-Aware Projectile Trajectory prediction
Smooths wrist keypoint streams, flags release candidates and predicts ballistic flight
"""
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solveh_banded

from logs.logger import log_perception
from perception.camera_geometry import Joint, Keypoint3D


GRAVITY = 9.81


class SplineError(ValueError):
    """Base error for keypoint spline fitting"""


class TooFewPointsError(SplineError):
    pass


class NonMonotoneTimestampsError(SplineError):
    pass


class OutOfDomainError(SplineError):
    pass


class BallisticError(ValueError):
    """Invalid ballistic query"""


@dataclass(frozen=True)
class SplineConfig:
    """Window length, per-axis smoothing factor and release scan spacing

    scan_lag is how many frame intervals behind the newest knot the release
    scan runs. The natural end condition pins s'' to zero at the newest knot.
    """
    window: int = 8
    smoothing: float = 1e-5
    eval_grid_dt: float = 0.005
    scan_lag: int = 1

    def __post_init__(self):
        if self.window < 4:
            raise SplineError("window must hold at least 4 frames")
        if self.smoothing < 0:
            raise SplineError("smoothing factor must be >= 0")
        if self.eval_grid_dt <= 0:
            raise SplineError("eval_grid_dt must be positive")
        if not 0 <= self.scan_lag <= self.window - 2:
            raise SplineError("scan_lag must lie in [0, window - 2]")


@dataclass(frozen=True)
class ReleaseDetectorConfig:
    accel_threshold: float = 25.0

    def __post_init__(self):
        if self.accel_threshold <= 0:
            raise SplineError("accel_threshold must be positive")


@dataclass(frozen=True)
class ReleaseCandidate:
    """A potential release instant and the smoothed wrist state there"""
    t_release: float
    position: np.ndarray
    velocity: np.ndarray
    joint_id: Joint = Joint.RIGHT_WRIST
    grid_index: int = -1


@dataclass(frozen=True)
class BallisticTrajectory:
    """Drag-free flight from a release state, gravity along -z"""
    t_release: float
    p0: np.ndarray
    v0: np.ndarray
    g: float = GRAVITY

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float).reshape(3)
        v0 = np.asarray(self.v0, dtype=float).reshape(3)
        if self.g <= 0:
            raise BallisticError("gravity must be positive")
        if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(v0)) and np.isfinite(self.t_release)):
            raise BallisticError("ballistic state must be finite")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "v0", v0)

    @property
    def gravity_vector(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.g])

    def evaluate(self, tau: float) -> Tuple[np.ndarray, np.ndarray]:
        return ballistic_eval(self, tau)


@dataclass
class KeypointSpline:
    """Per-axis cubic smoothing spline over a keypoint window"""
    knots: np.ndarray
    curve: CubicSpline
    smoothing: float
    joint_id: Joint = Joint.RIGHT_WRIST

    @property
    def t_start(self) -> float:
        return float(self.knots[0])

    @property
    def t_end(self) -> float:
        return float(self.knots[-1])

    def eval(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, velocity and acceleration at t (scalar or array)"""
        t_arr = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.t_end))
        if np.any(t_arr < self.t_start - tol) or np.any(t_arr > self.t_end + tol):
            raise OutOfDomainError(
                f"query outside fitted domain [{self.t_start:.6f}, {self.t_end:.6f}]"
            )
        t_arr = np.clip(t_arr, self.t_start, self.t_end)
        return self.curve(t_arr), self.curve(t_arr, 1), self.curve(t_arr, 2)

    def roughness(self) -> float:
        """Integral of the squared second derivative, summed over axes"""
        h = np.diff(self.knots)
        second = self.curve(self.knots, 2)
        left, right = second[:-1], second[1:]
        per_axis = (h[:, None] / 3.0) * (left ** 2 + left * right + right ** 2)
        return float(per_axis.sum())


def _reinsch_matrices(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Band matrices Q (n x n-2) and R (n-2 x n-2) of the natural-spline roughness penalty"""
    n = t.size
    h = np.diff(t)
    q = np.zeros((n, n - 2))
    r = np.zeros((n - 2, n - 2))
    for j in range(n - 2):
        q[j, j] = 1.0 / h[j]
        q[j + 1, j] = -(1.0 / h[j] + 1.0 / h[j + 1])
        q[j + 2, j] = 1.0 / h[j + 1]
        r[j, j] = (h[j] + h[j + 1]) / 3.0
        if j + 1 < n - 2:
            r[j, j + 1] = r[j + 1, j] = h[j + 1] / 6.0
    return q, r


def _upper_band(matrix: np.ndarray, bandwidth: int) -> np.ndarray:
    """Upper banded storage for solveh_banded"""
    n = matrix.shape[0]
    ab = np.zeros((bandwidth + 1, n))
    for offset in range(bandwidth + 1):
        ab[bandwidth - offset, offset:] = np.diagonal(matrix, offset)
    return ab


def fit_spline(window: Sequence[Keypoint3D], cfg: SplineConfig) -> KeypointSpline:
    """Per-axis smoothing spline minimising residual squares plus lambda * roughness

    lambda == 0 gives the not-a-knot interpolant, which is exact on cubics.
    """
    if len(window) < 4:
        raise TooFewPointsError(f"need at least 4 keypoints, got {len(window)}")
    t = np.array([kp.timestamp for kp in window], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise NonMonotoneTimestampsError("keypoint timestamps must be strictly increasing")
    y = np.stack([kp.position for kp in window])
    joint = window[-1].joint_id

    if cfg.smoothing == 0:
        return KeypointSpline(t, CubicSpline(t, y, bc_type="not-a-knot"), 0.0, joint)

    # Reinsch: (R + lambda Q^T Q) gamma = Q^T y, fitted values g = y - lambda Q gamma
    q, r = _reinsch_matrices(t)
    system = r + cfg.smoothing * (q.T @ q)
    gamma = solveh_banded(_upper_band(system, 2), q.T @ y)
    fitted = y - cfg.smoothing * (q @ gamma)
    return KeypointSpline(t, CubicSpline(t, fitted, bc_type="natural"), cfg.smoothing, joint)


def detect_release(spline: KeypointSpline, cfg: ReleaseDetectorConfig,
                   scan_times: np.ndarray,
                   grid_indices: Optional[np.ndarray] = None) -> List[ReleaseCandidate]:
    """Every scan instant with |a| above threshold and a . v > 0"""
    scan_times = np.asarray(scan_times, dtype=float)
    if scan_times.size == 0:
        return []
    if grid_indices is None:
        grid_indices = np.full(scan_times.size, -1, dtype=int)

    p, v, a = spline.eval(scan_times)
    accel_norm = np.linalg.norm(a, axis=1)
    consistent = np.einsum("ij,ij->i", a, v) > 0
    hits = np.flatnonzero((accel_norm > cfg.accel_threshold) & consistent)
    return [
        ReleaseCandidate(
            t_release=float(scan_times[i]),
            position=p[i].copy(),
            velocity=v[i].copy(),
            joint_id=spline.joint_id,
            grid_index=int(grid_indices[i]),
        )
        for i in hits
    ]


def predict_ballistic(candidate: ReleaseCandidate, g: float = GRAVITY) -> BallisticTrajectory:
    return BallisticTrajectory(candidate.t_release, candidate.position, candidate.velocity, g)


def ballistic_eval(traj: BallisticTrajectory, tau) -> Tuple[np.ndarray, np.ndarray]:
    """Position and velocity tau seconds after release"""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise BallisticError("time since release must be non-negative")
    g_vec = traj.gravity_vector
    tau_col = tau_arr[..., None]
    position = traj.p0 + traj.v0 * tau_col + 0.5 * g_vec * tau_col ** 2
    velocity = traj.v0 + g_vec * tau_col
    return position, velocity


def grid_window(t_prev: float, t_new: float, dt: float, last_index: int) -> np.ndarray:
    """Global grid indices k with t_prev < k*dt <= t_new and k > last_index"""
    k_lo = max(int(np.floor(t_prev / dt + 1e-9)) + 1, last_index + 1)
    k_hi = int(np.floor(t_new / dt + 1e-9))
    if k_hi < k_lo:
        return np.empty(0, dtype=int)
    return np.arange(k_lo, k_hi + 1)


class PaptPredictor:
    """Release detection for one joint stream

    Keeps the N most recent keypoints and a scan cursor, so every grid
    instant is examined exactly once over the stream's lifetime.
    """

    def __init__(self, spline_cfg: SplineConfig, detector_cfg: ReleaseDetectorConfig,
                 joint_id: Joint = Joint.RIGHT_WRIST, g: float = GRAVITY):
        self.spline_cfg = spline_cfg
        self.detector_cfg = detector_cfg
        self.joint_id = joint_id
        self.g = g
        self.window: Deque[Keypoint3D] = deque(maxlen=spline_cfg.window)
        self.last_grid_index = -1
        self.latest_spline: Optional[KeypointSpline] = None

    def update(self, keypoint: Keypoint3D) -> List[ReleaseCandidate]:
        """Add a keypoint; return the release candidates found in the scanned interval

        The scanned interval trails the newest one by scan_lag frames.
        """
        if self.window and keypoint.timestamp <= self.window[-1].timestamp:
            return []
        self.window.append(keypoint)
        if len(self.window) < self.spline_cfg.window:
            return []

        spline = fit_spline(list(self.window), self.spline_cfg)
        self.latest_spline = spline
        lag = self.spline_cfg.scan_lag
        indices = grid_window(self.window[-2 - lag].timestamp, self.window[-1 - lag].timestamp,
                              self.spline_cfg.eval_grid_dt, self.last_grid_index)
        if indices.size == 0:
            return []
        self.last_grid_index = int(indices[-1])

        candidates = detect_release(spline, self.detector_cfg,
                                    indices * self.spline_cfg.eval_grid_dt, indices)
        if candidates:
            log_perception("Release candidates", {
                "joint": self.joint_id.value,
                "count": len(candidates),
                "first_t": candidates[0].t_release,
            })
        return candidates

    def predict(self, candidate: ReleaseCandidate) -> BallisticTrajectory:
        return predict_ballistic(candidate, self.g)
