"""
Configuration Manager for threat-aware dodging scenarios
Handles scenario loading, validation, seed overrides and default dumping
"""
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional

import numpy as np
import tomli_w
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from logs.logger import log_info
from perception.camera_geometry import CameraModel, DepthFilterConfig, look_at_rotation
from perception.papt_predictor import ReleaseDetectorConfig, SplineConfig
from planner.cost_terms import PlannerConfig, StaticObstacle
from uncertainty.uncertainty_model import UncertaintyParams


Vector3 = Annotated[List[float], Field(min_length=3, max_length=3)]

OUTPUT_DIR_ENV = "THREAT_DODGE_OUTPUT_DIR"
DEFAULT_SCENARIO = Path(__file__).resolve().parent / "default_scenario.toml"


class ScenarioValidationError(ValueError):
    """Scenario file missing, unreadable or violating a field constraint"""

    def __init__(self, message: str, field_errors: Optional[List[str]] = None):
        self.field_errors = field_errors or []
        detail = "; ".join(self.field_errors)
        super().__init__(f"{message}: {detail}" if detail else message)


class Section(BaseModel):
    """Base for every scenario section: unknown keys are errors"""
    model_config = ConfigDict(extra="forbid")


class CameraConfig(Section):
    """Pinhole intrinsics; the camera sits at the UAV start looking along `forward`"""
    fx: float = Field(390.0, gt=0)
    fy: float = Field(390.0, gt=0)
    cx: float = 320.0
    cy: float = 240.0
    width: int = Field(640, gt=0)
    height: int = Field(480, gt=0)
    depth_min: float = Field(0.4, gt=0)
    depth_max: float = 6.0
    forward: Vector3 = [1.0, 0.0, 0.0]

    @model_validator(mode="after")
    def check_geometry(self):
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.depth_max <= self.depth_min:
            raise ValueError("depth_max must exceed depth_min")
        if abs(self.forward[2]) >= np.linalg.norm(self.forward) - 1e-9:
            raise ValueError("forward axis cannot be vertical")
        return self

    def to_model(self, position: List[float]) -> CameraModel:
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                           look_at_rotation(np.array(self.forward)), np.array(position),
                           self.depth_min, self.depth_max)


class DepthFilterSettings(Section):
    window_half_size: int = Field(2, ge=0)
    outlier_k: float = Field(3.0, gt=0)
    min_valid_fraction: float = Field(0.5, gt=0, le=1)
    temporal_jump_max: float = Field(0.5, gt=0)
    memory_timeout: float = Field(0.2, gt=0)

    def to_config(self) -> DepthFilterConfig:
        return DepthFilterConfig(**self.model_dump())


class PaptSettings(Section):
    """Spline window, smoothing factor, scan grid and release threshold"""
    window: int = Field(8, ge=4)
    smoothing: float = Field(1e-5, ge=0)
    eval_grid_dt: float = Field(0.005, gt=0)
    scan_lag: int = Field(1, ge=0)
    accel_threshold: float = Field(25.0, gt=0)

    @model_validator(mode="after")
    def check_scan_lag(self):
        if self.scan_lag > self.window - 2:
            raise ValueError("scan_lag must leave two frames of window behind the scanned interval")
        return self

    def spline_config(self) -> SplineConfig:
        return SplineConfig(self.window, self.smoothing, self.eval_grid_dt, self.scan_lag)

    def detector_config(self) -> ReleaseDetectorConfig:
        return ReleaseDetectorConfig(self.accel_threshold)


class UncertaintySettings(Section):
    alpha: float = Field(0.2, ge=0)
    beta: float = Field(0.1, ge=0)
    gamma: float = Field(0.05, gt=0)
    capacity: int = Field(64, ge=1)

    def to_params(self) -> UncertaintyParams:
        return UncertaintyParams(self.alpha, self.beta, self.gamma)


class WeightSettings(Section):
    smoothness: float = Field(10.0, ge=0)
    obstacle: float = Field(10.0, ge=0)
    time: float = Field(0.5, ge=0)
    feasibility: float = Field(10.0, ge=0)
    dodge: float = Field(20.0, ge=0)
    relvel: float = Field(5.8, ge=0)


class PlannerSettings(Section):
    weights: WeightSettings = Field(default_factory=WeightSettings)
    samples_per_segment: int = Field(8, ge=2)
    safety_radius: float = Field(0.4, gt=0)
    epsilon: float = Field(0.1, gt=0)
    v_max: float = Field(5.0, gt=0)
    a_max: float = Field(12.0, gt=0)
    segments: int = Field(4, ge=1)
    initial_duration: float = Field(4.0, gt=0)
    replan_period: float = Field(0.05, gt=0)
    max_iterations: int = Field(80, ge=1)
    gradient_tolerance: float = Field(1e-5, gt=0)

    def to_config(self) -> PlannerConfig:
        w = self.weights
        fields = self.model_dump(exclude={"weights"})
        return PlannerConfig(w_smoothness=w.smoothness, w_obstacle=w.obstacle, w_time=w.time,
                             w_feasibility=w.feasibility, w_dodge=w.dodge, w_relvel=w.relvel,
                             **fields)


class ObstacleSettings(Section):
    center: Vector3
    radius: float = Field(gt=0)

    def to_obstacle(self) -> StaticObstacle:
        return StaticObstacle(np.array(self.center), self.radius)


class SimulationSettings(Section):
    """Closed-loop integration and UAV tracking"""
    dt: float = Field(0.002, gt=0)
    settle_time: float = Field(1.0, ge=0)
    max_duration: float = Field(10.0, gt=0)
    tracker_kp: float = Field(30.0, gt=0)
    tracker_kd: float = Field(10.0, gt=0)
    tracker_lag: float = Field(0.03, gt=0)
    goal_tolerance: float = Field(0.2, gt=0)
    obstacles: List[ObstacleSettings] = Field(default_factory=list)


class NoiseSettings(Section):
    """Sensor stream: rate, delay and corruption"""
    frame_rate: float = Field(30.0, gt=0)
    perception_latency: float = Field(0.0264, ge=0)
    pixel_sigma: float = Field(0.5, ge=0)
    depth_sigma: float = Field(0.02, ge=0)
    invalid_probability: float = Field(0.02, ge=0, lt=1)


class ThrowSettings(Section):
    """One attacker: where they stand and how they throw"""
    attacker_position: Vector3 = [4.0, 0.0, 0.0]
    speed: float = Field(6.0, ge=0)
    elevation: float = Field(20.0, ge=-89, le=89)
    azimuth: float = 180.0
    release_time: float = Field(1.0, gt=0)
    windup_duration: float = Field(0.4, gt=0)
    aim_at_uav: bool = True


class UavSettings(Section):
    start: Vector3 = [0.0, 0.0, 1.5]
    goal: Vector3 = [0.0, 0.0, 1.5]


class ScenarioConfig(Section):
    """Main configuration model for one dodging scenario"""
    seed: int = Field(0, ge=0)
    z_ground: float = 0.0
    drag_coefficient: float = Field(0.02, ge=0)
    uav: UavSettings = Field(default_factory=UavSettings)
    throw: ThrowSettings = Field(default_factory=ThrowSettings)
    extra_attackers: List[ThrowSettings] = Field(default_factory=list)
    camera: CameraConfig = Field(default_factory=CameraConfig)
    depth_filter: DepthFilterSettings = Field(default_factory=DepthFilterSettings)
    papt: PaptSettings = Field(default_factory=PaptSettings)
    uncertainty: UncertaintySettings = Field(default_factory=UncertaintySettings)
    planner: PlannerSettings = Field(default_factory=PlannerSettings)
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)

    @model_validator(mode="after")
    def check_world(self):
        for throw in [self.throw] + self.extra_attackers:
            if throw.attacker_position[2] < self.z_ground:
                raise ValueError("attacker must stand on or above the ground")
        if self.uav.start[2] <= self.z_ground or self.uav.goal[2] <= self.z_ground:
            raise ValueError("UAV start and goal must be above the ground")
        return self

    def attackers(self) -> List[ThrowSettings]:
        return [self.throw] + list(self.extra_attackers)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.model_copy(update={"seed": seed})


def _field_errors(error: ValidationError) -> List[str]:
    return [
        f"{'.'.join(str(part) for part in item['loc']) or '<root>'}: {item['msg']}"
        for item in error.errors()
    ]


def validate_scenario(data: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ScenarioValidationError("invalid scenario", _field_errors(exc)) from exc


class ConfigManager:
    """Loads scenario files and resolves the output directory"""

    def __init__(self, config_dir: Optional[str] = None):
        self.config_dir = Path(config_dir) if config_dir else DEFAULT_SCENARIO.parent
        self.default_file = self.config_dir / DEFAULT_SCENARIO.name
        self._config: Optional[ScenarioConfig] = None

    def load_scenario(self, path: Optional[str] = None, seed: Optional[int] = None) -> ScenarioConfig:
        """Load and validate a TOML scenario; the bundled default when path is None"""
        file_path = Path(path) if path else self.default_file
        if not file_path.is_file():
            raise ScenarioValidationError(f"scenario file not found: {file_path}")
        try:
            with open(file_path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioValidationError(f"malformed scenario file {file_path}", [str(exc)]) from exc

        config = validate_scenario(data)
        if seed is not None:
            config = config.with_seed(seed)
        self._config = config
        log_info("Scenario loaded", {"path": str(file_path), "seed": config.seed})
        return config

    def get_config(self) -> ScenarioConfig:
        """Current scenario, the defaults when none was loaded"""
        if self._config is None:
            self._config = ScenarioConfig()
        return self._config

    def dump_defaults(self, path: str) -> Path:
        """Write every default to a TOML file"""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "wb") as f:
            tomli_w.dump(ScenarioConfig().model_dump(), f)
        return target

    @staticmethod
    def output_dir(cli_value: Optional[str] = None) -> Path:
        """--out wins, then THREAT_DODGE_OUTPUT_DIR (also read from .env), then ./output"""
        load_dotenv()
        if cli_value:
            return Path(cli_value)
        env_value = os.environ.get(OUTPUT_DIR_ENV)
        if env_value:
            return Path(env_value)
        return Path("output")


# Global config manager instance
config_manager = ConfigManager()


def get_config() -> ScenarioConfig:
    """Get the global configuration"""
    return config_manager.get_config()


def load_scenario(path: Optional[str] = None, seed: Optional[int] = None) -> ScenarioConfig:
    """Load a scenario through the global manager"""
    return config_manager.load_scenario(path, seed)
