"""
Cost terms of the dodging objective
Smoothness, time, feasibility, static obstacles, envelope proximity and relative velocity,
each returning its value with coefficient and duration partials
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from trajectory.minco import MincoTrajectory, SampleGrid, jerk_gram
from uncertainty.uncertainty_model import SurvivingSet, ThreatBatch


TERMS = ("smoothness", "obstacle", "time", "feasibility", "dodge", "relvel")


class PlannerConfigError(ValueError):
    """Invalid planner configuration"""


@dataclass(frozen=True)
class PlannerConfig:
    """Objective weights, sampling and solver settings"""
    w_smoothness: float = 10.0
    w_obstacle: float = 10.0
    w_time: float = 0.5
    w_feasibility: float = 10.0
    w_dodge: float = 20.0
    w_relvel: float = 5.8
    samples_per_segment: int = 8
    safety_radius: float = 0.4
    epsilon: float = 0.1
    v_max: float = 5.0
    a_max: float = 12.0
    segments: int = 4
    initial_duration: float = 4.0
    replan_period: float = 0.05
    max_iterations: int = 80
    gradient_tolerance: float = 1e-5

    def __post_init__(self):
        if min(self.weights().values()) < 0:
            raise PlannerConfigError("cost weights must be >= 0")
        if self.samples_per_segment < 2:
            raise PlannerConfigError("samples_per_segment must be >= 2")
        if self.safety_radius <= 0 or self.epsilon <= 0:
            raise PlannerConfigError("safety_radius and epsilon must be positive")
        if self.v_max <= 0 or self.a_max <= 0:
            raise PlannerConfigError("v_max and a_max must be positive")
        if self.segments < 1 or self.initial_duration <= 0 or self.replan_period <= 0:
            raise PlannerConfigError("segments, initial_duration and replan_period must be positive")
        if self.max_iterations < 1 or self.gradient_tolerance <= 0:
            raise PlannerConfigError("max_iterations and gradient_tolerance must be positive")

    def weights(self) -> Dict[str, float]:
        return {
            "smoothness": self.w_smoothness,
            "obstacle": self.w_obstacle,
            "time": self.w_time,
            "feasibility": self.w_feasibility,
            "dodge": self.w_dodge,
            "relvel": self.w_relvel,
        }


@dataclass(frozen=True)
class StaticObstacle:
    """Sphere obstacle"""
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0:
            raise PlannerConfigError("obstacle radius must be positive")


@dataclass
class PlanningContext:
    """Everything the objective needs besides the trajectory itself"""
    threats: ThreatBatch = field(default_factory=ThreatBatch.empty)
    t_plan: float = 0.0
    obstacles: List[StaticObstacle] = field(default_factory=list)


CostResult = Tuple[float, np.ndarray, np.ndarray]


def _zero(traj: MincoTrajectory) -> CostResult:
    return 0.0, np.zeros_like(traj.coeffs), np.zeros(traj.n_segments)


def _unit(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(vectors, axis=-1)
    return vectors / np.maximum(norm, 1e-12)[..., None], norm


def _as_batch(threats: Union[SurvivingSet, ThreatBatch], spatial: bool = True) -> ThreatBatch:
    if isinstance(threats, ThreatBatch):
        return threats
    return threats.as_batch(spatial)


def cost_smoothness(traj: MincoTrajectory) -> CostResult:
    """Closed-form jerk integral"""
    value = 0.0
    d_coeffs = np.zeros_like(traj.coeffs)
    d_durations = np.zeros(traj.n_segments)
    for i, duration in enumerate(traj.durations):
        gram = jerk_gram(duration)
        c = traj.coeffs[i]
        value += float(np.sum(c * (gram @ c)))
        d_coeffs[i] = 2.0 * gram @ c
        jerk_end = traj.eval_left(i, 3)
        d_durations[i] = float(jerk_end @ jerk_end)
    return value, d_coeffs, d_durations


def cost_time(durations: np.ndarray) -> Tuple[float, np.ndarray]:
    durations = np.asarray(durations, dtype=float)
    return float(durations.sum()), np.ones_like(durations)


def cost_feasibility(traj: MincoTrajectory, cfg: PlannerConfig,
                     grid: Optional[SampleGrid] = None) -> CostResult:
    """Cubic hinge on squared speed and acceleration over the sample grid"""
    grid = grid or traj.sample_grid(cfg.samples_per_segment)
    excess_v = np.maximum(0.0, np.einsum("mkd,mkd->mk", grid.velocity, grid.velocity) - cfg.v_max ** 2)
    accel_sq = np.einsum("mkd,mkd->mk", grid.acceleration, grid.acceleration)
    excess_a = np.maximum(0.0, accel_sq - cfg.a_max ** 2)
    value = float(np.sum(excess_v ** 3) + np.sum(excess_a ** 3))
    if value == 0.0:
        return _zero(traj)
    g_v = (6.0 * excess_v ** 2)[..., None] * grid.velocity
    g_a = (6.0 * excess_a ** 2)[..., None] * grid.acceleration
    d_coeffs, d_durations = traj.accumulate_sample_gradients(grid, np.zeros_like(g_v), g_v, g_a)
    return value, d_coeffs, d_durations


def cost_static(traj: MincoTrajectory, obstacles: Sequence[StaticObstacle], cfg: PlannerConfig,
                grid: Optional[SampleGrid] = None) -> CostResult:
    """Cubic hinge on penetration of inflated spheres"""
    if not obstacles:
        return _zero(traj)
    grid = grid or traj.sample_grid(cfg.samples_per_segment)
    centers = np.stack([ob.center for ob in obstacles])
    radii = np.array([ob.radius for ob in obstacles])

    offset = grid.position[:, :, None, :] - centers          # (M, K, O, 3)
    direction, distance = _unit(offset)
    depth = np.maximum(0.0, radii + cfg.safety_radius - distance)
    value = float(np.sum(depth ** 3))
    if value == 0.0:
        return _zero(traj)
    g_p = np.sum(-3.0 * (depth ** 2)[..., None] * direction, axis=2)
    d_coeffs, d_durations = traj.accumulate_sample_gradients(grid, g_p)
    return value, d_coeffs, d_durations


def _threat_geometry(grid: SampleGrid, batch: ThreatBatch, t_plan: float):
    """Per (m, k, l): elapsed time since release, in-flight mask and projectile state"""
    elapsed = grid.tau[:, :, None] + (t_plan - batch.t_release)[None, None, :]
    in_flight = (elapsed >= 0.0) & (elapsed <= batch.survival[None, None, :])
    safe = np.clip(elapsed, 0.0, None)
    p_pro, v_pro = batch.state(safe)
    return safe, in_flight, p_pro, v_pro


def cost_dodge(traj: MincoTrajectory, threats: Union[SurvivingSet, ThreatBatch], t_plan: float,
               cfg: PlannerConfig, grid: Optional[SampleGrid] = None) -> CostResult:
    """Squared hinge on penetration of every surviving envelope inflated by R_s"""
    batch = _as_batch(threats)
    if batch.size == 0:
        return _zero(traj)
    grid = grid or traj.sample_grid(cfg.samples_per_segment)
    elapsed, in_flight, p_pro, v_pro = _threat_geometry(grid, batch, t_plan)

    offset = grid.position[:, :, None, :] - p_pro
    direction, distance = _unit(offset)
    r, dr = batch.radius_and_rate(elapsed)
    depth = np.where(in_flight, np.maximum(0.0, r + cfg.safety_radius - distance), 0.0)
    value = float(np.sum(depth ** 2))
    if value == 0.0:
        return _zero(traj)

    g_p = np.sum(-2.0 * depth[..., None] * direction, axis=2)
    g_tau = np.sum(2.0 * depth * (dr + np.einsum("mkld,mkld->mkl", direction, v_pro)), axis=2)
    d_coeffs, d_durations = traj.accumulate_sample_gradients(grid, g_p, g_tau=g_tau)
    return value, d_coeffs, d_durations


def cost_relvel(traj: MincoTrajectory, threats: Union[SurvivingSet, ThreatBatch], t_plan: float,
                cfg: PlannerConfig, grid: Optional[SampleGrid] = None) -> CostResult:
    """Squared closing-speed projection (v_rel . d) / (|d| + eps) over in-flight samples"""
    batch = _as_batch(threats)
    if batch.size == 0:
        return _zero(traj)
    grid = grid or traj.sample_grid(cfg.samples_per_segment)
    elapsed, in_flight, p_pro, v_pro = _threat_geometry(grid, batch, t_plan)

    offset = grid.position[:, :, None, :] - p_pro
    v_rel = grid.velocity[:, :, None, :] - v_pro
    direction, distance = _unit(offset)
    denom = distance + cfg.epsilon
    closing = np.einsum("mkld,mkld->mkl", v_rel, offset)
    ratio = np.where(in_flight, closing / denom, 0.0)
    value = float(np.sum(ratio ** 2))
    if value == 0.0:
        return _zero(traj)

    weight = (2.0 * ratio)[..., None]
    g_p = np.sum(weight * (v_rel / denom[..., None]
                           - (closing / denom ** 2)[..., None] * direction), axis=2)
    g_v = np.sum(weight * offset / denom[..., None], axis=2)

    # d/d(elapsed): offset moves by -v_pro, v_rel by +g along z
    gravity_up = np.array([0.0, 0.0, batch.g])
    d_closing = offset @ gravity_up - np.einsum("mkld,mkld->mkl", v_rel, v_pro)
    d_distance = -np.einsum("mkld,mkld->mkl", direction, v_pro)
    d_ratio = d_closing / denom - closing * d_distance / denom ** 2
    g_tau = np.sum(2.0 * ratio * d_ratio, axis=2)

    d_coeffs, d_durations = traj.accumulate_sample_gradients(grid, g_p, g_v, g_tau=g_tau)
    return value, d_coeffs, d_durations


def term_cost(name: str, traj: MincoTrajectory, context: PlanningContext, cfg: PlannerConfig,
              grid: Optional[SampleGrid] = None) -> CostResult:
    """Unweighted value and partials of one named term"""
    if name == "smoothness":
        return cost_smoothness(traj)
    if name == "time":
        value, grad = cost_time(traj.durations)
        return value, np.zeros_like(traj.coeffs), grad
    grid = grid or traj.sample_grid(cfg.samples_per_segment)
    if name == "obstacle":
        return cost_static(traj, context.obstacles, cfg, grid)
    if name == "feasibility":
        return cost_feasibility(traj, cfg, grid)
    if name == "dodge":
        return cost_dodge(traj, context.threats, context.t_plan, cfg, grid)
    if name == "relvel":
        return cost_relvel(traj, context.threats, context.t_plan, cfg, grid)
    raise KeyError(f"unknown cost term '{name}'")


def evaluate_costs(traj: MincoTrajectory, context: PlanningContext,
                   cfg: PlannerConfig) -> Tuple[Dict[str, float], np.ndarray, np.ndarray]:
    """Unweighted term values plus the weighted coefficient and duration partials"""
    grid = traj.sample_grid(cfg.samples_per_segment)
    weights = cfg.weights()

    values = {}
    d_coeffs = np.zeros_like(traj.coeffs)
    d_durations = np.zeros(traj.n_segments)
    for name in TERMS:
        value, dc, dt = term_cost(name, traj, context, cfg, grid)
        values[name] = value
        if weights[name] != 0.0:
            d_coeffs += weights[name] * dc
            d_durations += weights[name] * dt
    return values, d_coeffs, d_durations


def weighted_total(values: Dict[str, float], cfg: PlannerConfig) -> float:
    weights = cfg.weights()
    return float(sum(weights[name] * values[name] for name in TERMS))
