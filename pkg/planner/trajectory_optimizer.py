"""
Trajectory Optimizer for uncertainty-aware dodging
Minimises the weighted objective over waypoints and free duration variables with L-BFGS-B
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from logs.logger import log_planner, log_warning
from planner.cost_terms import (
    TERMS, PlannerConfig, PlanningContext, StaticObstacle, evaluate_costs, weighted_total,
)
from trajectory.minco import BoundaryState, MincoError, MincoTrajectory, construct, propagate_gradients
from uncertainty.uncertainty_model import ThreatBatch


class NonFiniteCostError(ArithmeticError):
    """Objective or gradient left the finite range"""


@dataclass
class CostReport:
    """Per-term costs and solver outcome of one optimisation"""
    terms: Dict[str, float] = field(default_factory=lambda: {name: 0.0 for name in TERMS})
    total: float = 0.0
    grad_norm_q: float = 0.0
    grad_norm_t: float = 0.0
    iterations: int = 0
    success: bool = True
    converged: bool = False
    message: str = ""
    iterate_costs: List[float] = field(default_factory=list)
    t_plan: float = 0.0
    dodge_mode: bool = False

    def to_record(self) -> Dict[str, object]:
        record = {f"J_{name}": value for name, value in self.terms.items()}
        record.update({
            "total": self.total,
            "grad_norm_q": self.grad_norm_q,
            "grad_norm_T": self.grad_norm_t,
            "iterations": self.iterations,
            "success": self.success,
            "converged": self.converged,
            "message": self.message,
            "t_plan": self.t_plan,
            "dodge_mode": self.dodge_mode,
        })
        return record


# Lower bound on every segment duration (s)
MIN_SEGMENT_DURATION = 0.02


def duration_map(free: np.ndarray) -> np.ndarray:
    """Smooth bijection R -> R_{>0}: quadratic above zero, reciprocal quadratic below"""
    free = np.asarray(free, dtype=float)
    upper = (0.5 * free + 1.0) * free + 1.0
    lower = 1.0 / np.maximum((0.5 * free - 1.0) * free + 1.0, 1e-300)
    return np.where(free > 0, upper, lower)


def duration_map_derivative(free: np.ndarray) -> np.ndarray:
    free = np.asarray(free, dtype=float)
    den = (0.5 * free - 1.0) * free + 1.0
    return np.where(free > 0, free + 1.0, (1.0 - free) / np.maximum(den * den, 1e-300))


def duration_map_inverse(duration: np.ndarray) -> np.ndarray:
    duration = np.asarray(duration, dtype=float)
    if np.any(duration <= 0):
        raise MincoError("durations must be positive")
    upper = np.sqrt(np.maximum(2.0 * duration - 1.0, 0.0)) - 1.0
    lower = 1.0 - np.sqrt(np.maximum(2.0 / duration - 1.0, 0.0))
    return np.where(duration > 1.0, upper, lower)


class TrajectoryObjective:
    """Weighted objective as a function of the stacked free vector [q, tau]"""

    def __init__(self, start: BoundaryState, end: BoundaryState, context: PlanningContext,
                 cfg: PlannerConfig, segments: int, floor: float = 0.0):
        self.start = start
        self.end = end
        self.context = context
        self.cfg = cfg
        self.segments = segments
        self.floor_per_segment = max(floor, 0.0) / segments + MIN_SEGMENT_DURATION
        self.n_waypoint_values = 3 * (segments - 1)
        self._cache: Dict[bytes, Tuple[float, np.ndarray, Dict[str, float]]] = {}

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        q = x[:self.n_waypoint_values].reshape(self.segments - 1, 3)
        durations = self.floor_per_segment + duration_map(x[self.n_waypoint_values:])
        return q, durations

    def clamp_durations(self, durations: np.ndarray) -> np.ndarray:
        """Durations raised to at least the per-segment floor plus 1 ms"""
        return np.maximum(np.asarray(durations, dtype=float), self.floor_per_segment + 1e-3)

    def pack(self, waypoints: np.ndarray, durations: np.ndarray) -> np.ndarray:
        free_part = self.clamp_durations(durations) - self.floor_per_segment
        return np.concatenate([np.asarray(waypoints, dtype=float).ravel(),
                               duration_map_inverse(free_part)])

    def trajectory(self, x: np.ndarray) -> MincoTrajectory:
        q, durations = self.split(x)
        return construct(q, durations, self.start, self.end)

    def evaluate(self, x: np.ndarray) -> Tuple[float, np.ndarray, Dict[str, float]]:
        key = x.tobytes()
        if key in self._cache:
            return self._cache[key]
        traj = self.trajectory(x)
        values, d_coeffs, d_durations = evaluate_costs(traj, self.context, self.cfg)
        total = weighted_total(values, self.cfg)
        d_q, d_t = propagate_gradients(traj, d_coeffs, d_durations)
        free = x[self.n_waypoint_values:]
        gradient = np.concatenate([d_q.ravel(), d_t * duration_map_derivative(free)])
        if not (np.isfinite(total) and np.all(np.isfinite(gradient))):
            raise NonFiniteCostError(f"objective not finite (total={total})")
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = (total, gradient, values)
        return total, gradient, values

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        total, gradient, _ = self.evaluate(x)
        return total, gradient


def initial_guess(start: BoundaryState, goal: np.ndarray, cfg: PlannerConfig,
                  floor: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Evenly spaced straight-line waypoints over the initial horizon"""
    segments = cfg.segments
    fractions = np.arange(1, segments)[:, None] / segments
    waypoints = start.position + fractions * (np.asarray(goal, dtype=float) - start.position)
    free_total = max(cfg.initial_duration - floor, 0.1 * cfg.initial_duration)
    durations = np.full(segments, (max(floor, 0.0) + free_total) / segments)
    return waypoints, durations


def optimize(initial_state: BoundaryState, goal: np.ndarray, threats: ThreatBatch,
             obstacles: Sequence[StaticObstacle], cfg: PlannerConfig,
             warm_start: Optional[MincoTrajectory] = None, t_plan: float = 0.0,
             floor: float = 0.0) -> Tuple[Optional[MincoTrajectory], CostReport]:
    """Minimise the weighted objective; the end state is the goal at rest

    Returns (None, report with success=False) when the objective becomes
    non-finite; the caller keeps its previous trajectory.
    """
    goal = np.asarray(goal, dtype=float).reshape(3)
    if not np.all(np.isfinite(goal)):
        raise MincoError("goal must be finite")
    end = BoundaryState.at_rest(goal)
    context = PlanningContext(threats=threats, t_plan=t_plan, obstacles=list(obstacles))

    if warm_start is not None and warm_start.n_segments == cfg.segments:
        waypoints, durations = warm_start.waypoints, warm_start.durations
    else:
        waypoints, durations = initial_guess(initial_state, goal, cfg, floor)

    objective = TrajectoryObjective(initial_state, end, context, cfg, cfg.segments, floor)
    start_durations = objective.clamp_durations(durations)
    if np.any(start_durations != durations):
        log_planner("Initial durations raised to the floor", {
            "t_plan": t_plan,
            "floor_per_segment": objective.floor_per_segment,
            "durations": np.asarray(durations).tolist(),
        })
    x0 = objective.pack(waypoints, start_durations)
    report = CostReport(t_plan=t_plan)

    try:
        f0, _, _ = objective.evaluate(x0)
        report.iterate_costs.append(f0)

        def record_iterate(xk):
            report.iterate_costs.append(objective.evaluate(xk)[0])

        result = minimize(
            objective, x0, jac=True, method="L-BFGS-B", callback=record_iterate,
            options={"maxiter": cfg.max_iterations, "gtol": cfg.gradient_tolerance, "ftol": 1e-12},
        )
        x_best = result.x
        f_best, gradient, values = objective.evaluate(x_best)
        if f_best > f0:
            x_best = x0
            f_best, gradient, values = objective.evaluate(x0)
        report.iterations = int(result.nit)
        report.converged = bool(result.success)
        report.message = str(result.message)
    except (NonFiniteCostError, MincoError, FloatingPointError) as exc:
        report.success = False
        report.message = str(exc)
        log_warning("Trajectory optimisation failed", {"t_plan": t_plan, "reason": str(exc)})
        return None, report

    n_q = objective.n_waypoint_values
    report.terms = values
    report.total = f_best
    report.grad_norm_q = float(np.linalg.norm(gradient[:n_q]))
    report.grad_norm_t = float(np.linalg.norm(gradient[n_q:]))
    log_planner("Optimisation finished", report.to_record())
    return objective.trajectory(x_best), report
