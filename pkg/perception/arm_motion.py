"""
Synthetic throwing arm
Analytic C2 wrist motion (windup, acceleration, follow-through) and the noisy,
delayed camera stream it produces
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from perception.camera_geometry import CameraModel, GeometryError, Joint, PixelObservation, project


SHOULDER_HEIGHT = 1.45
REACH = 0.35
OVERHEAD = 0.25


@dataclass(frozen=True)
class ArmTiming:
    """Phase lengths of one throw"""
    windup: float = 0.4
    acceleration: float = 0.15
    follow_through: float = 0.15
    windup_amplitude: float = 0.3

    def __post_init__(self):
        if min(self.windup, self.acceleration, self.follow_through) <= 0:
            raise GeometryError("arm phase durations must be positive")
        if self.windup_amplitude < 0:
            raise GeometryError("windup amplitude must be >= 0")


class ArmMotionModel:
    """Right wrist moving along the throw direction; left wrist held still

    Displacement s(t) along the unit throw direction is a chain of
    polynomials in phase-local time, joined with matching position,
    velocity and acceleration, so the wrist path is C2 and its velocity at
    release equals the configured throw velocity.
    """

    def __init__(self, release_point: np.ndarray, release_velocity: np.ndarray,
                 release_time: float, timing: Optional[ArmTiming] = None):
        self.release_point = np.asarray(release_point, dtype=float).reshape(3)
        self.release_velocity = np.asarray(release_velocity, dtype=float).reshape(3)
        self.release_time = float(release_time)
        self.timing = timing or ArmTiming()
        speed = float(np.linalg.norm(self.release_velocity))
        self.speed = speed
        self.direction = self.release_velocity / speed if speed > 0 else np.array([1.0, 0.0, 0.0])

        lateral = np.cross(np.array([0.0, 0.0, 1.0]), self.direction)
        if np.linalg.norm(lateral) < 1e-9:
            lateral = np.array([0.0, 1.0, 0.0])
        self.left_wrist = self.release_point - 0.3 * lateral / np.linalg.norm(lateral) \
            - np.array([0.0, 0.0, 0.4])
        self._build_phases()

    def _build_phases(self):
        tm = self.timing
        self.t_windup = self.release_time - tm.acceleration - tm.windup
        self.t_accel = self.release_time - tm.acceleration
        self.t_rest = self.release_time + tm.follow_through
        self.peak_accel = 2.0 * self.speed / tm.acceleration

        # windup: smoothstep back by the amplitude
        sigma = Polynomial([0.0, 1.0 / tm.windup])
        windup = -tm.windup_amplitude * (10 * sigma ** 3 - 15 * sigma ** 4 + 6 * sigma ** 5)

        sigma = Polynomial([0.0, 1.0 / tm.acceleration])
        accel_a = self.peak_accel * (3 * sigma ** 2 - 2 * sigma ** 3)
        accel = accel_a.integ(k=0.0).integ(k=-tm.windup_amplitude)

        sigma = Polynomial([0.0, 1.0 / tm.follow_through])
        kappa = -30.0 * (self.speed / tm.follow_through + 0.5 * self.peak_accel)
        follow_a = (self.peak_accel * (1 - 3 * sigma ** 2 + 2 * sigma ** 3)
                    + kappa * sigma ** 2 * (1 - sigma) ** 2)
        follow = follow_a.integ(k=self.speed).integ(k=accel(tm.acceleration))

        self.phases: List[Tuple[float, float, Polynomial]] = [
            (self.t_windup, self.t_accel, windup),
            (self.t_accel, self.release_time, accel),
            (self.release_time, self.t_rest, follow),
        ]
        self.final_offset = float(follow(tm.follow_through))
        self.anchor = self.release_point - float(accel(tm.acceleration)) * self.direction

    def displacement(self, t: float) -> Tuple[float, float, float]:
        """s, s', s'' along the throw direction at time t"""
        if self.speed == 0.0 and self.timing.windup_amplitude == 0.0:
            return 0.0, 0.0, 0.0
        if t < self.t_windup:
            return 0.0, 0.0, 0.0
        if t >= self.t_rest:
            return self.final_offset, 0.0, 0.0
        for start, stop, poly in self.phases:
            if t < stop:
                u = t - start
                return float(poly(u)), float(poly.deriv(1)(u)), float(poly.deriv(2)(u))
        return self.final_offset, 0.0, 0.0

    def wrist_state(self, joint: Joint, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, velocity and acceleration of a wrist"""
        if joint is Joint.LEFT_WRIST:
            return self.left_wrist.copy(), np.zeros(3), np.zeros(3)
        s, ds, dds = self.displacement(t)
        return self.anchor + s * self.direction, ds * self.direction, dds * self.direction

    def threshold_crossing_time(self, threshold: float) -> Optional[float]:
        """First instant the acceleration phase exceeds `threshold`, None if it never does"""
        if self.peak_accel <= threshold:
            return None
        ramp = Polynomial([threshold / self.peak_accel, 0.0, -3.0, 2.0])
        roots = [r.real for r in ramp.roots() if abs(r.imag) < 1e-12 and 0.0 <= r.real <= 1.0]
        return self.t_accel + min(roots) * self.timing.acceleration


def release_point_for(attacker_ground: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Hand position at release: above the shoulder, reaching toward the target"""
    shoulder = np.asarray(attacker_ground, dtype=float) + np.array([0.0, 0.0, SHOULDER_HEIGHT])
    toward = np.asarray(target, dtype=float) - shoulder
    toward[2] = 0.0
    norm = np.linalg.norm(toward)
    heading = toward / norm if norm > 1e-9 else np.array([1.0, 0.0, 0.0])
    return shoulder + REACH * heading + np.array([0.0, 0.0, OVERHEAD])


@dataclass(frozen=True)
class StreamNoise:
    """Keypoint detector and depth sensor corruption"""
    pixel_sigma: float = 0.5
    depth_sigma: float = 0.02
    invalid_probability: float = 0.02
    patch_half_size: int = 2

    def __post_init__(self):
        if self.pixel_sigma < 0 or self.depth_sigma < 0:
            raise GeometryError("noise levels must be >= 0")
        if not 0 <= self.invalid_probability < 1:
            raise GeometryError("invalid_probability must lie in [0, 1)")


@dataclass(frozen=True)
class TimedObservation:
    """An observation and the instant it reaches the predictor"""
    delivery_time: float
    observation: PixelObservation
    source: int = 0


@dataclass
class KeypointStream:
    """All frames of a trial, ordered by delivery time"""
    frames: List[TimedObservation] = field(default_factory=list)
    frame_rate: float = 30.0
    latency: float = 0.0

    def per_joint(self) -> Dict[Tuple[int, Joint], List[TimedObservation]]:
        grouped: Dict[Tuple[int, Joint], List[TimedObservation]] = {}
        for frame in self.frames:
            grouped.setdefault((frame.source, frame.observation.joint_id), []).append(frame)
        return grouped


def frame_times(duration: float, frame_rate: float) -> np.ndarray:
    if frame_rate <= 0:
        raise GeometryError("frame_rate must be positive")
    n_frames = int(round(duration * frame_rate))
    return np.arange(n_frames) / frame_rate


def _observe(point: np.ndarray, t: float, joint: Joint, camera: CameraModel,
             noise: StreamNoise, rng: np.random.Generator) -> PixelObservation:
    side = 2 * noise.patch_half_size + 1
    pixel = project(point, camera)
    if pixel is None or not camera.in_image(pixel[0], pixel[1]):
        return PixelObservation(np.nan, np.nan, np.full((side, side), np.nan), t, joint, valid=False)
    u, v, depth = pixel
    patch = depth + rng.normal(0.0, noise.depth_sigma, (side, side)) if noise.depth_sigma > 0 \
        else np.full((side, side), depth)
    if noise.invalid_probability > 0:
        patch[rng.random((side, side)) < noise.invalid_probability] = np.nan
    patch[patch <= 0] = np.nan
    if noise.pixel_sigma > 0:
        u += rng.normal(0.0, noise.pixel_sigma)
        v += rng.normal(0.0, noise.pixel_sigma)
    return PixelObservation(u, v, patch, t, joint)


def generate_keypoint_stream(arms: List[ArmMotionModel], camera: CameraModel, duration: float,
                             frame_rate: float, latency: float, noise: StreamNoise,
                             rng: np.random.Generator,
                             joints: Tuple[Joint, ...] = (Joint.RIGHT_WRIST, Joint.LEFT_WRIST),
                             ) -> KeypointStream:
    """Both wrists of every arm, sampled at frame_rate and delivered `latency` late"""
    frames = []
    for t in frame_times(duration, frame_rate):
        for source, arm in enumerate(arms):
            for joint in joints:
                position, _, _ = arm.wrist_state(joint, float(t))
                observation = _observe(position, float(t), joint, camera, noise, rng)
                frames.append(TimedObservation(float(t) + latency, observation, source))
    return KeypointStream(frames, frame_rate, latency)
