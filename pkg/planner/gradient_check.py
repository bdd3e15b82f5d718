"""
Finite-difference gradient checks
Random planning instances and per-term comparison of analytic against central-difference gradients
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from logs.logger import log_info
from perception.papt_predictor import BallisticTrajectory
from planner.cost_terms import (
    TERMS, PlannerConfig, PlanningContext, StaticObstacle, evaluate_costs, term_cost, weighted_total,
)
from trajectory.minco import BoundaryState, MincoTrajectory, construct, propagate_gradients
from uncertainty.uncertainty_model import SurvivingSet, SurvivingTrajectory, UncertaintyParams


@dataclass
class GradientInstance:
    """Waypoints, durations and everything the objective sees"""
    waypoints: np.ndarray
    durations: np.ndarray
    start: BoundaryState
    end: BoundaryState
    context: PlanningContext
    cfg: PlannerConfig = field(default_factory=PlannerConfig)

    def build(self, waypoints: np.ndarray, durations: np.ndarray) -> MincoTrajectory:
        return construct(waypoints, durations, self.start, self.end)


def random_instance(rng: np.random.Generator) -> GradientInstance:
    """Random trajectory with 1-8 threats aimed at it and a few spheres near it"""
    segments = int(rng.integers(2, 6))
    start = BoundaryState(np.array([0.0, 0.0, 1.5]) + rng.normal(0, 0.3, 3),
                          rng.normal(0, 1.0, 3), rng.normal(0, 1.0, 3))
    steps = rng.normal(0, 0.8, (segments, 3))
    path = start.position + np.cumsum(steps, axis=0)
    end = BoundaryState(path[-1], rng.normal(0, 0.5, 3), rng.normal(0, 0.5, 3))
    durations = rng.uniform(0.3, 1.2, segments)

    cfg = PlannerConfig(v_max=2.0, a_max=4.0, segments=segments)
    base = construct(path[:-1], durations, start, end)
    t_plan = float(rng.uniform(0.0, 0.3))

    surviving = SurvivingSet()
    for _ in range(int(rng.integers(1, 9))):
        t_release = t_plan - float(rng.uniform(0.0, 0.4))
        hit_tau = float(rng.uniform(0.1, 0.9)) * base.total_duration
        target = base.eval(hit_tau) + rng.normal(0, 0.3, 3)
        flight = hit_tau + t_plan - t_release
        p0 = target + np.array([rng.uniform(3, 5), rng.uniform(-1, 1), 0.0])
        p0[2] = target[2] + rng.uniform(0.2, 1.0) + 1.0
        g_vec = np.array([0.0, 0.0, -9.81])
        v0 = (target - p0 - 0.5 * g_vec * flight ** 2) / flight
        params = UncertaintyParams(rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.2))
        surviving.add(SurvivingTrajectory.from_ballistic(
            BallisticTrajectory(t_release, p0, v0), params, z_ground=-10.0))

    obstacles = []
    for _ in range(int(rng.integers(0, 4))):
        center = base.eval(float(rng.uniform(0, base.total_duration))) + rng.normal(0, 0.3, 3)
        obstacles.append(StaticObstacle(center, float(rng.uniform(0.1, 0.5))))

    context = PlanningContext(surviving.as_batch(), t_plan, obstacles)
    return GradientInstance(path[:-1].copy(), durations, start, end, context, cfg)


def _analytic(instance: GradientInstance, name: str, waypoints,
              durations) -> Tuple[float, np.ndarray, np.ndarray]:
    traj = instance.build(waypoints, durations)
    if name == "total":
        values, d_coeffs, d_durations = evaluate_costs(traj, instance.context, instance.cfg)
        value = weighted_total(values, instance.cfg)
    else:
        value, d_coeffs, d_durations = term_cost(name, traj, instance.context, instance.cfg)
    d_q, d_t = propagate_gradients(traj, d_coeffs, d_durations)
    return value, d_q, d_t


def finite_difference(func: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (func(x + step) - func(x - step)) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, eps: float = 1e-6) -> float:
    """Largest absolute difference over the larger of the two gradients' magnitudes (at least eps)"""
    scale = max(np.max(np.abs(numeric), initial=0.0), np.max(np.abs(analytic), initial=0.0), eps)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check_instance(instance: GradientInstance, h: float = 1e-6) -> Dict[str, Dict[str, float]]:
    """Max relative error over q and T for every term and the weighted total"""
    n_q = instance.waypoints.size
    x0 = np.concatenate([instance.waypoints.ravel(), instance.durations])
    errors = {}
    for name in TERMS + ("total",):
        def value_at(x, name=name):
            return _analytic(instance, name, x[:n_q].reshape(-1, 3), x[n_q:])[0]

        _, d_q, d_t = _analytic(instance, name, instance.waypoints, instance.durations)
        numeric = finite_difference(value_at, x0, h)
        errors[name] = {
            "q": relative_error(d_q.ravel(), numeric[:n_q]),
            "T": relative_error(d_t, numeric[n_q:]),
        }
    return errors


def run_gradient_check(n_instances: int = 100, seed: int = 0, h: float = 1e-6) -> pd.DataFrame:
    """Per-term worst relative error across random instances"""
    rng = np.random.default_rng(seed)
    rows: List[Dict[str, object]] = []
    for index in range(n_instances):
        for name, err in check_instance(random_instance(rng), h).items():
            rows.append({"instance": index, "term": name, "err_q": err["q"], "err_T": err["T"]})
    frame = pd.DataFrame(rows)
    table = frame.groupby("term", sort=False)[["err_q", "err_T"]].max()
    table["max_rel_error"] = table.max(axis=1)
    worst = float(table["max_rel_error"].max())
    log_info("Gradient check finished", {"instances": n_instances, "worst": worst})
    return table


def gradients_pass(table: pd.DataFrame, tolerance: float = 1e-5) -> bool:
    return bool((table["max_rel_error"] < tolerance).all())
