"""
UAV tracking model
Point-mass UAV following the published plan with saturated feedback and lagged acceleration
"""
from dataclasses import dataclass, field

import numpy as np

from trajectory.minco import BoundaryState


@dataclass(frozen=True)
class TrackerGains:
    kp: float = 30.0
    kd: float = 10.0
    lag: float = 0.03  # acceleration time constant, s
    a_max: float = 12.0


@dataclass
class UavState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_boundary(self) -> BoundaryState:
        return BoundaryState(self.position.copy(), self.velocity.copy(), self.acceleration.copy())


def saturate(vector: np.ndarray, limit: float) -> np.ndarray:
    norm = np.linalg.norm(vector)
    return vector if norm <= limit else vector * (limit / norm)


class UavTracker:
    """Feedforward plus PD tracking, commanded acceleration clipped to a_max"""

    def __init__(self, start: np.ndarray, gains: TrackerGains = TrackerGains()):
        self.state = UavState(np.asarray(start, dtype=float).copy())
        self.gains = gains
        self.max_command = 0.0

    def command(self, p_ref: np.ndarray, v_ref: np.ndarray, a_ref: np.ndarray) -> np.ndarray:
        g = self.gains
        raw = a_ref + g.kp * (p_ref - self.state.position) + g.kd * (v_ref - self.state.velocity)
        a_cmd = saturate(raw, g.a_max)
        self.max_command = max(self.max_command, float(np.linalg.norm(a_cmd)))
        return a_cmd

    def step(self, dt: float, p_ref: np.ndarray, v_ref: np.ndarray, a_ref: np.ndarray) -> UavState:
        """Advance one step; the lag keeps |a| inside the saturation ball"""
        a_cmd = self.command(p_ref, v_ref, a_ref)
        s = self.state
        blend = 1.0 - np.exp(-dt / self.gains.lag)
        a_next = s.acceleration + blend * (a_cmd - s.acceleration)
        # Trapezoidal on acceleration, exact for a linear ramp over the step
        v_next = s.velocity + 0.5 * dt * (s.acceleration + a_next)
        p_next = s.position + dt * s.velocity + dt * dt * (s.acceleration / 3.0 + a_next / 6.0)
        self.state = UavState(p_next, v_next, a_next)
        return self.state
