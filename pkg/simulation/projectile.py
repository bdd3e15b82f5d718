"""
Ground-truth projectile dynamics
RK4 point-mass flight under gravity and quadratic drag, landing detection and throw aiming
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from perception.papt_predictor import GRAVITY, BallisticError


@dataclass(frozen=True)
class AimSolution:
    """Launch velocity that carries the projectile through a target point"""
    velocity: np.ndarray
    elevation_deg: float
    azimuth_deg: float
    time_to_target: float


def acceleration(velocity: np.ndarray, c_d: float, g: float = GRAVITY) -> np.ndarray:
    """dv/dt = (0, 0, -g) - c_d |v| v"""
    speed = np.linalg.norm(velocity)
    return np.array([0.0, 0.0, -g]) - c_d * speed * velocity


def step_ground_truth(state: np.ndarray, dt: float, c_d: float, g: float = GRAVITY) -> np.ndarray:
    """One RK4 step of the stacked state [p, v]"""
    if dt <= 0:
        raise BallisticError("integration step must be positive")
    state = np.asarray(state, dtype=float)

    def deriv(s):
        return np.concatenate([s[3:], acceleration(s[3:], c_d, g)])

    k1 = deriv(state)
    k2 = deriv(state + 0.5 * dt * k1)
    k3 = deriv(state + 0.5 * dt * k2)
    k4 = deriv(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(p0: np.ndarray, v0: np.ndarray, duration: float, dt: float, c_d: float,
              g: float = GRAVITY) -> Tuple[np.ndarray, np.ndarray]:
    """Times and stacked states from release over `duration` seconds"""
    n_steps = int(np.ceil(duration / dt - 1e-9))
    states = np.empty((n_steps + 1, 6))
    states[0] = np.concatenate([p0, v0])
    times = np.empty(n_steps + 1)
    times[0] = 0.0
    for i in range(n_steps):
        h = min(dt, duration - times[i])
        states[i + 1] = step_ground_truth(states[i], h, c_d, g)
        times[i + 1] = times[i] + h
    return times, states


def landing_time(p0: np.ndarray, v0: np.ndarray, c_d: float, z_ground: float = 0.0,
                 dt: float = 1e-3, g: float = GRAVITY, max_time: float = 30.0) -> float:
    """First time the drag trajectory descends through z_ground, linearly refined"""
    if p0[2] <= z_ground:
        raise BallisticError("release point is not above the ground")
    state = np.concatenate([p0, v0]).astype(float)
    t = 0.0
    while t < max_time:
        nxt = step_ground_truth(state, dt, c_d, g)
        if nxt[2] <= z_ground:
            fraction = (state[2] - z_ground) / (state[2] - nxt[2])
            return t + fraction * dt
        state, t = nxt, t + dt
    raise BallisticError("projectile did not land within the time limit")


def _height_miss(release: np.ndarray, target: np.ndarray, speed: float, elevation: float,
                 azimuth: float, c_d: float, g: float, dt: float) -> Tuple[float, float]:
    """Height above target when the horizontal range reaches the target's, and the time"""
    horizontal = np.array([np.cos(azimuth), np.sin(azimuth)])
    reach = float(np.linalg.norm(target[:2] - release[:2]))
    velocity = speed * np.array([np.cos(elevation) * horizontal[0],
                                 np.cos(elevation) * horizontal[1],
                                 np.sin(elevation)])
    state = np.concatenate([release, velocity])
    t = 0.0
    covered = 0.0
    while t < 10.0 and state[2] > target[2] - 20.0:
        nxt = step_ground_truth(state, dt, c_d, g)
        covered_next = float((nxt[:2] - release[:2]) @ horizontal)
        if covered_next >= reach:
            fraction = (reach - covered) / max(covered_next - covered, 1e-12)
            z = state[2] + fraction * (nxt[2] - state[2])
            return z - target[2], t + fraction * dt
        state, t, covered = nxt, t + dt, covered_next
    return -np.inf, np.inf


def aim_throw(release: np.ndarray, target: np.ndarray, speed: float, c_d: float,
              g: float = GRAVITY, dt: float = 2e-3) -> AimSolution:
    """Low-arc launch elevation (with drag) and azimuth passing through target"""
    release = np.asarray(release, dtype=float)
    target = np.asarray(target, dtype=float)
    if speed <= 0:
        raise BallisticError("aiming needs a positive throw speed")
    offset = target - release
    azimuth = float(np.arctan2(offset[1], offset[0]))

    def miss(elevation: float) -> float:
        value, _ = _height_miss(release, target, speed, elevation, azimuth, c_d, g, dt)
        return value if np.isfinite(value) else -1e3

    grid = np.deg2rad(np.arange(-60.0, 71.0, 2.0))
    values = np.array([miss(angle) for angle in grid])
    crossing: Optional[int] = None
    for i in range(grid.size - 1):
        if values[i] < 0.0 <= values[i + 1]:
            crossing = i
            break
    if crossing is not None:
        low, high = float(grid[crossing]), float(grid[crossing + 1])
    elif np.all(values < 0.0):
        # near maximum range the reachable band can fall between grid angles
        best = int(np.argmax(values))
        bounds = (float(grid[max(best - 1, 0)]), float(grid[min(best + 1, grid.size - 1)]))
        peak = minimize_scalar(lambda angle: -miss(angle), bounds=bounds, method="bounded",
                               options={"xatol": 1e-10})
        if -peak.fun < 0.0:
            raise BallisticError(f"target {np.round(target, 3).tolist()} out of reach at {speed:.2f} m/s")
        low, high = bounds[0], float(peak.x)
    else:
        raise BallisticError(f"target {np.round(target, 3).tolist()} out of reach at {speed:.2f} m/s")

    if miss(high) == 0.0 or miss(low) >= 0.0:
        elevation = high
    else:
        elevation = float(brentq(miss, low, high, xtol=1e-10))
    _, time_to_target = _height_miss(release, target, speed, elevation, azimuth, c_d, g, dt)
    velocity = speed * np.array([np.cos(elevation) * np.cos(azimuth),
                                 np.cos(elevation) * np.sin(azimuth),
                                 np.sin(elevation)])
    return AimSolution(velocity, float(np.rad2deg(elevation)), float(np.rad2deg(azimuth)),
                       float(time_to_target))


def _best_miss(release: np.ndarray, target: np.ndarray, speed: float, c_d: float, g: float,
               dt: float) -> float:
    """Largest height above target over launch elevations in [-10, 70] deg"""
    offset = target - release
    azimuth = float(np.arctan2(offset[1], offset[0]))

    def negative_miss(elevation: float) -> float:
        value, _ = _height_miss(release, target, speed, elevation, azimuth, c_d, g, dt)
        return -value if np.isfinite(value) else 1e3

    peak = minimize_scalar(negative_miss, bounds=(np.deg2rad(-10.0), np.deg2rad(70.0)), method="bounded",
                           options={"xatol": 1e-6})
    return float(-peak.fun)


_MIN_SPEED_CACHE: Dict[Tuple[float, ...], float] = {}


def minimum_aim_speed(release: np.ndarray, target: np.ndarray, c_d: float, g: float = GRAVITY,
                      dt: float = 2e-3, tol: float = 5e-3) -> float:
    """Slowest launch speed that still reaches target, found by bisection

    Starts from the drag-free minimum, which drag can only raise.
    """
    release = np.asarray(release, dtype=float)
    target = np.asarray(target, dtype=float)
    reach = float(np.linalg.norm(target[:2] - release[:2]))
    rise = float(target[2] - release[2])
    key = (round(reach, 9), round(rise, 9), c_d, g, dt, tol)
    if key in _MIN_SPEED_CACHE:
        return _MIN_SPEED_CACHE[key]

    low = float(np.sqrt(g * (rise + np.hypot(rise, reach))))
    high = max(1.2 * low, 0.5)
    while _best_miss(release, target, high, c_d, g, dt) < 0.0:
        low, high = high, 1.5 * high
        if high > 200.0:
            raise BallisticError(f"target {np.round(target, 3).tolist()} out of reach at any speed")
    while high - low > tol:
        middle = 0.5 * (low + high)
        if _best_miss(release, target, middle, c_d, g, dt) >= 0.0:
            high = middle
        else:
            low = middle
    _MIN_SPEED_CACHE[key] = high
    return high


def mechanical_energy(states: np.ndarray, g: float = GRAVITY) -> np.ndarray:
    """Specific energy |v|^2 / 2 + g z per state row"""
    states = np.atleast_2d(states)
    return 0.5 * np.sum(states[:, 3:] ** 2, axis=1) + g * states[:, 2]
