"""
Ivory-shaped uncertainty model
Envelope radius, survival windows, the surviving-trajectory set and collision-risk queries
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from logs.logger import log_perception
from perception.papt_predictor import BallisticTrajectory, ballistic_eval


class UncertaintyError(ValueError):
    """Invalid uncertainty query or parameters"""


@dataclass(frozen=True)
class UncertaintyParams:
    """R(t) = alpha t^2 + beta t + gamma"""
    alpha: float = 0.2
    beta: float = 0.1
    gamma: float = 0.05

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise UncertaintyError("alpha and beta must be >= 0")
        if self.gamma <= 0:
            raise UncertaintyError("gamma must be positive")


def radius(params: UncertaintyParams, t):
    """Envelope radius t seconds after release"""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise UncertaintyError("time since release must be non-negative")
    value = params.alpha * t_arr ** 2 + params.beta * t_arr + params.gamma
    return float(value) if value.ndim == 0 else value


def survival_duration(traj: BallisticTrajectory, z_ground: float = 0.0) -> float:
    """Time from release until the arc descends through z_ground"""
    height = traj.p0[2] - z_ground
    if height <= 0:
        raise UncertaintyError("release point is not above the ground")
    vz = traj.v0[2]
    return float((vz + np.sqrt(vz ** 2 + 2.0 * traj.g * height)) / traj.g)


@dataclass(frozen=True)
class SurvivingTrajectory:
    """A predicted arc with its envelope and flight window"""
    ballistic: BallisticTrajectory
    survival: float
    params: UncertaintyParams = field(default_factory=UncertaintyParams)

    def __post_init__(self):
        if self.survival <= 0:
            raise UncertaintyError("survival duration must be positive")

    @classmethod
    def from_ballistic(cls, ballistic: BallisticTrajectory, params: UncertaintyParams,
                       z_ground: float = 0.0) -> "SurvivingTrajectory":
        return cls(ballistic, survival_duration(ballistic, z_ground), params)

    @property
    def t_release(self) -> float:
        return self.ballistic.t_release

    @property
    def t_death(self) -> float:
        return self.ballistic.t_release + self.survival

    def alive_at(self, t_now: float) -> bool:
        return t_now < self.t_death


def contains(st: SurvivingTrajectory, t: float, p: np.ndarray) -> bool:
    """Whether p lies in the envelope ball t seconds after release"""
    if t < 0 or t > st.survival:
        raise UncertaintyError(f"t={t:.4f} outside the flight window [0, {st.survival:.4f}]")
    center, _ = ballistic_eval(st.ballistic, t)
    offset = np.asarray(p, dtype=float) - center
    return bool(offset @ offset <= radius(st.params, t) ** 2)


@dataclass(frozen=True)
class ThreatBatch:
    """Column view of a surviving set, consumed by vectorised cost terms"""
    t_release: np.ndarray  # (L,)
    p0: np.ndarray         # (L, 3)
    v0: np.ndarray         # (L, 3)
    survival: np.ndarray   # (L,)
    alpha: np.ndarray      # (L,)
    beta: np.ndarray
    gamma: np.ndarray
    g: float = 9.81
    spatial: bool = True   # False forces R(t) = 0

    @property
    def size(self) -> int:
        return int(self.t_release.size)

    @classmethod
    def empty(cls) -> "ThreatBatch":
        zeros = np.zeros(0)
        return cls(zeros, np.zeros((0, 3)), np.zeros((0, 3)), zeros, zeros, zeros, zeros)

    def radius_and_rate(self, elapsed: np.ndarray):
        """R and dR/dt broadcast against elapsed (..., L)"""
        if not self.spatial:
            return np.zeros_like(elapsed), np.zeros_like(elapsed)
        r = self.alpha * elapsed ** 2 + self.beta * elapsed + self.gamma
        dr = 2.0 * self.alpha * elapsed + self.beta
        return r, dr

    def state(self, elapsed: np.ndarray):
        """Projectile position and velocity at elapsed (..., L)"""
        g_vec = np.array([0.0, 0.0, -self.g])
        e = elapsed[..., None]
        position = self.p0 + self.v0 * e + 0.5 * g_vec * e ** 2
        velocity = self.v0 + g_vec * e
        return position, velocity


class SurvivingSet:
    """Ordered set of live predicted arcs, oldest release first"""

    def __init__(self, capacity: int = 64, members: Optional[List[SurvivingTrajectory]] = None):
        if capacity < 1:
            raise UncertaintyError("capacity must be at least 1")
        self.capacity = capacity
        self.members: List[SurvivingTrajectory] = list(members or [])

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def add(self, st: SurvivingTrajectory):
        """Insert keeping release order; evict the oldest beyond capacity"""
        index = len(self.members)
        while index > 0 and self.members[index - 1].t_release > st.t_release:
            index -= 1
        self.members.insert(index, st)
        overflow = len(self.members) - self.capacity
        if overflow > 0:
            del self.members[:overflow]

    def copy(self) -> "SurvivingSet":
        return SurvivingSet(self.capacity, self.members)

    def most_recent(self) -> "SurvivingSet":
        """The single latest-released member (single-hypothesis view)"""
        return SurvivingSet(self.capacity, self.members[-1:])

    def with_params(self, params: UncertaintyParams) -> "SurvivingSet":
        return SurvivingSet(self.capacity, [replace(m, params=params) for m in self.members])

    def longest_remaining(self, t_now: float) -> float:
        """Time until the last member dies"""
        if not self.members:
            return 0.0
        return max(0.0, max(m.t_death for m in self.members) - t_now)

    def as_batch(self, spatial: bool = True) -> ThreatBatch:
        if not self.members:
            return ThreatBatch.empty()
        return ThreatBatch(
            t_release=np.array([m.t_release for m in self.members]),
            p0=np.stack([m.ballistic.p0 for m in self.members]),
            v0=np.stack([m.ballistic.v0 for m in self.members]),
            survival=np.array([m.survival for m in self.members]),
            alpha=np.array([m.params.alpha for m in self.members]),
            beta=np.array([m.params.beta for m in self.members]),
            gamma=np.array([m.params.gamma for m in self.members]),
            g=self.members[0].ballistic.g,
            spatial=spatial,
        )


def prune(surviving: SurvivingSet, t_now: float) -> SurvivingSet:
    """Drop dead arcs (t_now >= t_L + T_s) and enforce the capacity cap"""
    alive = [m for m in surviving.members if m.alive_at(t_now)]
    dropped = len(surviving.members) - len(alive)
    if dropped:
        log_perception("Pruned dead trajectories", {"dropped": dropped, "t_now": t_now})
    return SurvivingSet(surviving.capacity, alive[-surviving.capacity:])


def envelope_clearance(batch: ThreatBatch, times: np.ndarray, points: np.ndarray,
                       safety_radius: float) -> np.ndarray:
    """Signed clearance ||p - p_pro|| - (R + R_s) for every (time, member); NaN where not in flight

    times: (S,) absolute instants, points: (S, 3) positions at those instants.
    """
    times = np.asarray(times, dtype=float)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if batch.size == 0:
        return np.zeros((times.size, 0))
    elapsed = times[:, None] - batch.t_release[None, :]
    in_flight = (elapsed >= 0) & (elapsed <= batch.survival[None, :])
    safe_elapsed = np.clip(elapsed, 0.0, None)
    centers, _ = batch.state(safe_elapsed)
    r, _ = batch.radius_and_rate(safe_elapsed)
    distance = np.linalg.norm(points[:, None, :] - centers, axis=2)
    clearance = distance - (r + safety_radius)
    return np.where(in_flight, clearance, np.nan)


def risk_check(surviving: SurvivingSet, uav_position: np.ndarray, t_now: float,
               safety_radius: float, plan=None, samples_per_segment: int = 8,
               spatial: bool = True, hold_dt: Optional[float] = 0.01) -> bool:
    """True when the UAV or its published plan touches any inflated envelope

    `plan` is a published plan (trajectory plus plan time); its samples on
    the planner's tau grid are checked from t_now onward. After the plan
    ends (or with no plan) the UAV holds its last position until every
    member has landed; hold_dt=None checks the sampled instants only.
    """
    if len(surviving) == 0:
        return False
    batch = surviving.as_batch(spatial)

    times = [np.array([t_now])]
    points = [np.asarray(uav_position, dtype=float).reshape(1, 3)]
    hold_from, hold_point = t_now, points[0][0]
    if plan is not None:
        tau = plan.trajectory.sample_times(samples_per_segment).ravel()
        absolute = plan.t_plan + tau
        keep = absolute >= t_now
        if np.any(keep):
            times.append(absolute[keep])
            points.append(plan.trajectory.eval_many(tau[keep], 0))
        plan_end = plan.t_plan + plan.trajectory.total_duration
        hold_from = max(t_now, plan_end)
        hold_point = plan.trajectory.eval(plan.trajectory.total_duration, 0)

    last_death = float(np.max(batch.t_release + batch.survival))
    if hold_dt is not None and last_death > hold_from:
        hold_times = np.arange(hold_from, last_death + hold_dt, hold_dt)
        times.append(hold_times)
        points.append(np.repeat(hold_point[None, :], hold_times.size, axis=0))

    clearance = envelope_clearance(batch, np.concatenate(times), np.vstack(points), safety_radius)
    return bool(np.any(clearance[np.isfinite(clearance)] <= 0))
