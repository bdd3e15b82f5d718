"""
Camera Geometry for keypoint perception
Pinhole model, depth-patch consistency filtering and pixel/world conversion
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from logs.logger import log_perception


class GeometryError(ValueError):
    """Invalid camera model or observation"""


class DepthRangeError(GeometryError):
    """Depth outside the camera's usable range"""


class Joint(Enum):
    """Tracked body joints"""
    RIGHT_WRIST = "right_wrist"
    LEFT_WRIST = "left_wrist"


class RejectReason(Enum):
    """Why a depth patch was discarded"""
    ALL_INVALID = "all_invalid"
    TOO_FEW_SURVIVORS = "too_few_survivors"
    TEMPORAL_JUMP = "temporal_jump"


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the camera-to-world rigid transform"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    depth_min: float = 0.4
    depth_max: float = 6.0

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")
        if not (0 < self.depth_min < self.depth_max):
            raise GeometryError("depth range must satisfy 0 < depth_min < depth_max")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9):
            raise GeometryError("camera rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise GeometryError("camera rotation must have determinant +1")

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def in_image(self, u: float, v: float) -> bool:
        return 0 <= u < self.width and 0 <= v < self.height


@dataclass
class PixelObservation:
    """One keypoint detection with the depth samples around it"""
    u: float
    v: float
    depth_patch: np.ndarray  # NaN marks an invalid sample
    timestamp: float
    joint_id: Joint = Joint.RIGHT_WRIST
    valid: bool = True  # False when the joint left the frustum

    def __post_init__(self):
        self.depth_patch = np.asarray(self.depth_patch, dtype=float)
        if self.depth_patch.ndim != 2 or self.depth_patch.shape[0] != self.depth_patch.shape[1]:
            raise GeometryError("depth patch must be square")
        if self.depth_patch.shape[0] % 2 != 1:
            raise GeometryError("depth patch side must be odd")
        finite = np.isfinite(self.depth_patch)
        if np.any(self.depth_patch[finite] <= 0):
            raise GeometryError("depth samples must be positive or NaN")


@dataclass(frozen=True)
class DepthFilterConfig:
    """Spatial and temporal consistency thresholds"""
    window_half_size: int = 2
    outlier_k: float = 3.0
    min_valid_fraction: float = 0.5
    temporal_jump_max: float = 0.5
    memory_timeout: float = 0.2

    def __post_init__(self):
        if self.window_half_size < 0:
            raise GeometryError("window_half_size must be >= 0")
        if self.outlier_k <= 0:
            raise GeometryError("outlier_k must be positive")
        if not (0 < self.min_valid_fraction <= 1):
            raise GeometryError("min_valid_fraction must lie in (0, 1]")
        if self.temporal_jump_max <= 0:
            raise GeometryError("temporal_jump_max must be positive")
        if self.memory_timeout <= 0:
            raise GeometryError("memory_timeout must be positive")


@dataclass(frozen=True)
class DepthMemory:
    """Previously accepted depth of a stream

    Ignored once older than DepthFilterConfig.memory_timeout, so a sustained
    real depth change is accepted again after that long.
    """
    depth: float
    timestamp: float


@dataclass(frozen=True)
class DepthDecision:
    """Outcome of filter_depth: an accepted depth or a tagged rejection"""
    depth: Optional[float] = None
    reason: Optional[RejectReason] = None

    @property
    def accepted(self) -> bool:
        return self.reason is None


@dataclass(frozen=True)
class Keypoint3D:
    """A timestamped world-frame joint position"""
    position: np.ndarray
    timestamp: float
    joint_id: Joint = Joint.RIGHT_WRIST

    def __post_init__(self):
        position = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(position)) or not np.isfinite(self.timestamp):
            raise GeometryError("keypoint position and timestamp must be finite")
        object.__setattr__(self, "position", position)


def filter_depth(obs: PixelObservation, cfg: DepthFilterConfig,
                 prev: Optional[DepthMemory] = None) -> DepthDecision:
    """Median/MAD outlier rejection over the patch, then the temporal jump test"""
    side = 2 * cfg.window_half_size + 1
    if obs.depth_patch.shape != (side, side):
        raise GeometryError(f"depth patch must be {side}x{side}, got {obs.depth_patch.shape}")

    samples = obs.depth_patch.ravel()
    samples = samples[np.isfinite(samples) & (samples > 0)]
    if samples.size == 0:
        return DepthDecision(reason=RejectReason.ALL_INVALID)

    median = np.median(samples)
    deviation = np.abs(samples - median)
    mad = np.median(deviation)
    survivors = samples[deviation <= cfg.outlier_k * mad]
    if survivors.size < cfg.min_valid_fraction * side * side:
        return DepthDecision(reason=RejectReason.TOO_FEW_SURVIVORS)

    # Clipped so summation rounding never leaves the survivor range
    depth = float(np.clip(np.mean(survivors), survivors.min(), survivors.max()))
    fresh = prev is not None and obs.timestamp - prev.timestamp <= cfg.memory_timeout
    if fresh and abs(depth - prev.depth) > cfg.temporal_jump_max:
        return DepthDecision(reason=RejectReason.TEMPORAL_JUMP)
    return DepthDecision(depth=depth)


def backproject(obs: PixelObservation, depth: float, cam: CameraModel) -> Keypoint3D:
    """World position of a pixel at the given depth"""
    if not (cam.depth_min <= depth <= cam.depth_max):
        raise DepthRangeError(
            f"depth {depth:.3f} m outside [{cam.depth_min}, {cam.depth_max}]"
        )
    ray = np.array([(obs.u - cam.cx) / cam.fx, (obs.v - cam.cy) / cam.fy, 1.0])
    position = cam.rotation @ (depth * ray) + cam.translation
    return Keypoint3D(position=position, timestamp=obs.timestamp, joint_id=obs.joint_id)


def project(point: np.ndarray, cam: CameraModel) -> Optional[Tuple[float, float, float]]:
    """Pixel coordinates and depth of a world point, None when behind the camera"""
    p_cam = cam.rotation.T @ (np.asarray(point, dtype=float) - cam.translation)
    depth = p_cam[2]
    if depth <= 0:
        return None
    u = cam.fx * p_cam[0] / depth + cam.cx
    v = cam.fy * p_cam[1] / depth + cam.cy
    return float(u), float(v), float(depth)


def look_at_rotation(forward: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation for an optical axis along `forward`, image y pointing down"""
    z_axis = np.asarray(forward, dtype=float)
    z_axis = z_axis / np.linalg.norm(z_axis)
    up = np.array([0.0, 0.0, 1.0])
    x_axis = np.cross(z_axis, up)
    if np.linalg.norm(x_axis) < 1e-9:
        raise GeometryError("optical axis cannot be vertical")
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    return np.column_stack([x_axis, y_axis, z_axis])


class KeypointEstimator:
    """Turns one joint's observation stream into world keypoints

    Owns the previous-depth memory, so one instance per stream.
    """

    def __init__(self, camera: CameraModel, cfg: DepthFilterConfig):
        self.camera = camera
        self.cfg = cfg
        self.memory: Optional[DepthMemory] = None
        self.rejections = {reason: 0 for reason in RejectReason}
        self.out_of_range = 0

    def process(self, obs: PixelObservation) -> Optional[Keypoint3D]:
        """Filter, back-project and remember; None when the frame is dropped"""
        if not obs.valid:
            return None

        decision = filter_depth(obs, self.cfg, self.memory)
        if not decision.accepted:
            self.rejections[decision.reason] += 1
            log_perception("Frame rejected", {
                "joint": obs.joint_id.value,
                "timestamp": obs.timestamp,
                "reason": decision.reason.value,
            })
            return None

        try:
            keypoint = backproject(obs, decision.depth, self.camera)
        except DepthRangeError:
            self.out_of_range += 1
            return None

        self.memory = DepthMemory(decision.depth, obs.timestamp)
        return keypoint
