"""
Closed-loop dodging trial
Keypoint stream -> perception -> surviving set -> replanner -> tracked UAV -> ground-truth projectile
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.config_manager import ScenarioConfig, ScenarioValidationError
from logs.logger import log_perception, log_trial, timed_operation
from perception.arm_motion import (
    ArmMotionModel, ArmTiming, KeypointStream, StreamNoise, TimedObservation,
    generate_keypoint_stream, release_point_for,
)
from perception.camera_geometry import CameraModel, Joint, KeypointEstimator
from perception.papt_predictor import BallisticError, PaptPredictor, ReleaseCandidate
from planner.replanner import PublishedPlan, Replanner, Strategy
from simulation.projectile import aim_throw, landing_time, step_ground_truth
from simulation.uav_tracker import TrackerGains, UavTracker
from uncertainty.uncertainty_model import SurvivingSet, SurvivingTrajectory, prune


COLLISION_DISTANCE = 0.4
LOG_EVERY_STEPS = 5


@dataclass
class Attacker:
    """One thrower: arm model plus the true release state of its projectile"""
    arm: ArmMotionModel
    release_time: float
    p0: np.ndarray
    v0: np.ndarray
    landing_time: float


@dataclass
class World:
    """Everything fixed before the loop starts"""
    camera: CameraModel
    attackers: List[Attacker]
    stream: KeypointStream
    end_time: float


def launch_velocity(throw, release_point: np.ndarray, target: np.ndarray, c_d: float) -> np.ndarray:
    if throw.speed == 0.0:
        return np.zeros(3)
    if throw.aim_at_uav:
        return aim_throw(release_point, target, throw.speed, c_d).velocity
    elevation, azimuth = np.deg2rad(throw.elevation), np.deg2rad(throw.azimuth)
    return throw.speed * np.array([np.cos(elevation) * np.cos(azimuth),
                                   np.cos(elevation) * np.sin(azimuth),
                                   np.sin(elevation)])


def build_world(scenario: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> World:
    """Arms, true release states and the sensor stream of a scenario"""
    rng = rng or np.random.default_rng(scenario.seed)
    target = np.array(scenario.uav.start)
    camera = scenario.camera.to_model(scenario.uav.start)

    attackers = []
    for throw in scenario.attackers():
        release_point = release_point_for(np.array(throw.attacker_position), target)
        try:
            velocity = launch_velocity(throw, release_point, target, scenario.drag_coefficient)
        except BallisticError as exc:
            raise ScenarioValidationError("throw cannot reach the UAV", [f"throw: {exc}"]) from exc
        arm = ArmMotionModel(release_point, velocity, throw.release_time,
                             ArmTiming(windup=throw.windup_duration))
        flight = landing_time(release_point, velocity, scenario.drag_coefficient, scenario.z_ground)
        attackers.append(Attacker(arm, throw.release_time, release_point, velocity,
                                  throw.release_time + flight))

    end_time = min(max(a.landing_time for a in attackers) + scenario.simulation.settle_time,
                   scenario.simulation.max_duration)
    noise = scenario.noise
    stream = generate_keypoint_stream(
        [a.arm for a in attackers], camera, end_time, noise.frame_rate, noise.perception_latency,
        StreamNoise(noise.pixel_sigma, noise.depth_sigma, noise.invalid_probability,
                    scenario.depth_filter.window_half_size),
        rng,
    )
    return World(camera, attackers, stream, end_time)


class PerceptionPipeline:
    """Depth filtering, back-projection and release detection for every wrist stream"""

    def __init__(self, scenario: ScenarioConfig, camera: CameraModel):
        self.scenario = scenario
        self.camera = camera
        self.params = scenario.uncertainty.to_params()
        self.estimators: Dict[Tuple[int, Joint], KeypointEstimator] = {}
        self.predictors: Dict[Tuple[int, Joint], PaptPredictor] = {}
        self.candidates: List[ReleaseCandidate] = []
        self.first_keypoint_time: Optional[float] = None
        self.first_candidate_time: Optional[float] = None

    def _stream(self, key: Tuple[int, Joint]):
        if key not in self.estimators:
            self.estimators[key] = KeypointEstimator(self.camera, self.scenario.depth_filter.to_config())
            self.predictors[key] = PaptPredictor(self.scenario.papt.spline_config(),
                                                 self.scenario.papt.detector_config(), key[1])
        return self.estimators[key], self.predictors[key]

    def deliver(self, frame: TimedObservation) -> List[SurvivingTrajectory]:
        """Process one delivered frame; new surviving trajectories from its candidates"""
        estimator, predictor = self._stream((frame.source, frame.observation.joint_id))
        keypoint = estimator.process(frame.observation)
        if keypoint is None:
            return []
        if self.first_keypoint_time is None:
            self.first_keypoint_time = frame.delivery_time

        arrivals = []
        for candidate in predictor.update(keypoint):
            self.candidates.append(candidate)
            if candidate.position[2] <= self.scenario.z_ground:
                continue
            arrivals.append(SurvivingTrajectory.from_ballistic(
                predictor.predict(candidate), self.params, self.scenario.z_ground))
        if arrivals and self.first_candidate_time is None:
            self.first_candidate_time = frame.delivery_time
            log_perception("First release candidate", {"t": frame.delivery_time,
                                                       "t_release": arrivals[0].t_release})
        return arrivals


class GroundTruthProjectile:
    """Drag flight of one thrown object, idle before release and after landing"""

    def __init__(self, attacker: Attacker, c_d: float, z_ground: float):
        self.attacker = attacker
        self.c_d = c_d
        self.z_ground = z_ground
        self.state: Optional[np.ndarray] = None
        self.t_state = attacker.release_time
        self.landed = False

    def in_flight(self) -> bool:
        return self.state is not None and not self.landed

    def advance_to(self, t: float):
        if self.landed or t < self.attacker.release_time:
            return
        if self.state is None:
            self.state = np.concatenate([self.attacker.p0, self.attacker.v0])
        h = t - self.t_state
        if h > 0:
            previous = self.state
            self.state = step_ground_truth(previous, h, self.c_d)
            self.t_state = t
            if self.state[2] <= self.z_ground < previous[2]:
                # stop at the ground crossing, not below it
                fraction = (previous[2] - self.z_ground) / (previous[2] - self.state[2])
                self.state = previous + fraction * (self.state - previous)
                self.state[2] = self.z_ground
                self.t_state = t - h + fraction * h
        if t >= self.attacker.landing_time or self.state[2] <= self.z_ground:
            self.landed = True

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]


def refine_minimum(times: np.ndarray, distances: np.ndarray) -> Tuple[float, float]:
    """Minimum distance with parabolic interpolation of squared distance around the best sample"""
    i = int(np.argmin(distances))
    if i == 0 or i == distances.size - 1:
        return float(distances[i]), float(times[i])
    y0, y1, y2 = distances[i - 1] ** 2, distances[i] ** 2, distances[i + 1] ** 2
    curvature = y0 - 2.0 * y1 + y2
    if curvature <= 0:
        return float(distances[i]), float(times[i])
    shift = 0.5 * (y0 - y2) / curvature
    y_min = y1 - 0.25 * (y0 - y2) * shift
    dt = times[i + 1] - times[i]
    return float(np.sqrt(max(y_min, 0.0))), float(times[i] + shift * dt)


@dataclass
class TrialResult:
    """Outcome of one closed-loop trial"""
    seed: int
    strategy: str
    d_min: float
    success: bool
    detection_time: Optional[float]
    first_plan_time: Optional[float]
    release_time: float
    landing_time: float
    goal_reached: bool
    timeline: List[Tuple[float, str]] = field(default_factory=list)
    closest_time: Optional[float] = None
    plan_count: int = 0
    optimizer_failures: int = 0
    dodge_plan_clear: bool = False
    descent_monotone: bool = True
    max_command_accel: float = 0.0
    trajectory_log: Optional[pd.DataFrame] = field(default=None, repr=False)
    cost_reports: List[Dict[str, object]] = field(default_factory=list, repr=False)
    stream: Optional[KeypointStream] = field(default=None, repr=False)

    def to_record(self) -> Dict[str, object]:
        """JSON-ready metrics row"""
        return {
            "seed": self.seed,
            "strategy": self.strategy,
            "d_min": self.d_min,
            "success": self.success,
            "detection_time": self.detection_time,
            "first_plan_time": self.first_plan_time,
            "release_time": self.release_time,
            "landing_time": self.landing_time,
            "goal_reached": self.goal_reached,
            "closest_time": self.closest_time,
            "plan_count": self.plan_count,
            "optimizer_failures": self.optimizer_failures,
            "dodge_plan_clear": self.dodge_plan_clear,
            "descent_monotone": self.descent_monotone,
            "max_command_accel": self.max_command_accel,
            "timeline": [[round(t, 6), name] for t, name in self.timeline],
        }


def _nearest_radius(surviving: SurvivingSet, t: float, point: np.ndarray) -> float:
    best, radius_value = np.inf, np.nan
    for member in surviving:
        elapsed = t - member.t_release
        if 0.0 <= elapsed <= member.survival:
            center, _ = member.ballistic.evaluate(elapsed)
            distance = float(np.linalg.norm(point - center))
            if distance < best:
                p = member.params
                best, radius_value = distance, p.alpha * elapsed ** 2 + p.beta * elapsed + p.gamma
    return radius_value


def _is_nonincreasing(costs: List[float]) -> bool:
    return all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(costs, costs[1:]))


def run_trial(scenario: ScenarioConfig, strategy: Union[Strategy, str] = Strategy.FULL,
              capture_log: bool = True, keep_stream: bool = False) -> TrialResult:
    """Run one deterministic closed-loop trial"""
    strategy = Strategy(strategy)
    with timed_operation("trial", {"seed": scenario.seed, "strategy": strategy.value}):
        world = build_world(scenario)
        return _simulate(scenario, world, strategy, capture_log, keep_stream)


def _simulate(scenario: ScenarioConfig, world: World, strategy: Strategy,
              capture_log: bool, keep_stream: bool) -> TrialResult:
    sim = scenario.simulation
    planner_cfg = scenario.planner.to_config()
    goal = np.array(scenario.uav.goal)
    obstacles = [ob.to_obstacle() for ob in sim.obstacles]

    perception = PerceptionPipeline(scenario, world.camera)
    replanner = Replanner(planner_cfg, goal, obstacles, strategy)
    tracker = UavTracker(np.array(scenario.uav.start),
                         TrackerGains(sim.tracker_kp, sim.tracker_kd, sim.tracker_lag, planner_cfg.a_max))
    projectiles = [GroundTruthProjectile(a, scenario.drag_coefficient, scenario.z_ground)
                   for a in world.attackers]
    surviving = SurvivingSet(scenario.uncertainty.capacity)

    frames = sorted(world.stream.frames,
                    key=lambda f: (f.delivery_time, f.source, f.observation.joint_id.value))
    frame_index = 0
    plan: Optional[PublishedPlan] = None
    replan_every = max(1, int(round(planner_cfg.replan_period / sim.dt)))
    n_steps = int(np.floor(world.end_time / sim.dt + 1e-9))

    distance_times: List[List[float]] = [[] for _ in projectiles]
    distances: List[List[float]] = [[] for _ in projectiles]
    log_rows = []
    dodge_plan_clear = False
    timeline: List[Tuple[float, str]] = []

    for step in range(n_steps + 1):
        t = step * sim.dt
        while frame_index < len(frames) and frames[frame_index].delivery_time <= t + 1e-12:
            for arrival in perception.deliver(frames[frame_index]):
                surviving.add(arrival)
            frame_index += 1
        surviving = prune(surviving, t)

        if step % replan_every == 0:
            published = replanner.step(t, tracker.state.as_boundary(), surviving)
            if plan is None or published.plan_id != plan.plan_id:
                plan = published
                if replanner.dodge_mode and plan.report.terms.get("dodge", 1.0) == 0.0:
                    dodge_plan_clear = True

        tracker.step(sim.dt, plan.reference(t, 0), plan.reference(t, 1), plan.reference(t, 2))
        uav_position = tracker.state.position

        nearest_projectile = np.full(3, np.nan)
        nearest_distance = np.inf
        for i, projectile in enumerate(projectiles):
            was_flying = projectile.in_flight()
            projectile.advance_to(t)
            if projectile.in_flight() or (was_flying and projectile.landed):
                distance = float(np.linalg.norm(uav_position - projectile.position))
                distance_times[i].append(t)
                distances[i].append(distance)
                if distance < nearest_distance:
                    nearest_distance, nearest_projectile = distance, projectile.position.copy()

        if capture_log and step % LOG_EVERY_STEPS == 0:
            log_rows.append({
                "t": t,
                "uav_x": uav_position[0], "uav_y": uav_position[1], "uav_z": uav_position[2],
                "projectile_x": nearest_projectile[0], "projectile_y": nearest_projectile[1],
                "projectile_z": nearest_projectile[2],
                "plan_id": plan.plan_id,
                "surviving_count": len(surviving),
                "R_of_nearest": _nearest_radius(surviving, t, uav_position),
            })

    d_min, closest_time = np.inf, None
    for times_i, dist_i in zip(distance_times, distances):
        if dist_i:
            value, when = refine_minimum(np.array(times_i), np.array(dist_i))
            if value < d_min:
                d_min, closest_time = value, when
    if not np.isfinite(d_min):
        d_min = float(np.linalg.norm(np.array(scenario.uav.start) - world.attackers[0].p0))

    goal_reached = bool(np.linalg.norm(tracker.state.position - goal) <= sim.goal_tolerance)
    release_time = min(a.release_time for a in world.attackers)
    landing = max(a.landing_time for a in world.attackers)

    if perception.first_keypoint_time is not None:
        timeline.append((perception.first_keypoint_time, "first_keypoint"))
    if perception.first_candidate_time is not None:
        timeline.append((perception.first_candidate_time, "first_candidate"))
    for a in world.attackers:
        timeline.append((a.release_time, "release"))
        timeline.append((a.landing_time, "landing"))
    if closest_time is not None:
        timeline.append((closest_time, "closest_approach"))
    timeline.extend(replanner.events)
    if goal_reached:
        timeline.append((world.end_time, "goal_reached"))
    timeline.sort(key=lambda event: event[0])

    first_plan_time = next((t for t, name in replanner.events if name == "dodge_triggered"), None)
    reports = [r.to_record() for r in replanner.reports]
    result = TrialResult(
        seed=scenario.seed,
        strategy=strategy.value,
        d_min=d_min,
        success=bool(d_min >= COLLISION_DISTANCE),
        detection_time=perception.first_candidate_time,
        first_plan_time=first_plan_time,
        release_time=release_time,
        landing_time=landing,
        goal_reached=goal_reached,
        timeline=timeline,
        closest_time=closest_time,
        plan_count=len(replanner.reports),
        optimizer_failures=replanner.failures,
        dodge_plan_clear=dodge_plan_clear,
        descent_monotone=all(_is_nonincreasing(r.iterate_costs) for r in replanner.reports),
        max_command_accel=tracker.max_command,
        trajectory_log=pd.DataFrame(log_rows) if capture_log else None,
        cost_reports=reports,
        stream=world.stream if keep_stream else None,
    )
    log_trial("Trial finished", result.to_record())
    return result
