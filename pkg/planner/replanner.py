"""
Replanning cycle
Prunes the surviving set, checks collision risk, switches dodge mode and publishes plans
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from logs.logger import log_planner, log_warning
from planner.cost_terms import PlannerConfig, StaticObstacle
from planner.trajectory_optimizer import CostReport, optimize
from trajectory.minco import BoundaryState, MincoTrajectory
from uncertainty.uncertainty_model import SurvivingSet, ThreatBatch, prune, risk_check


class Strategy(Enum):
    """Dodging strategies compared in the ablation"""
    FULL = "full"
    NO_TEMPORAL = "no_temporal"  # only the most recent release hypothesis
    NO_SPATIAL = "no_spatial"    # envelope radius forced to zero
    FROZEN = "frozen"            # never dodges

    @property
    def spatial(self) -> bool:
        return self is not Strategy.NO_SPATIAL

    def view(self, surviving: SurvivingSet) -> SurvivingSet:
        """The part of the surviving set this strategy reasons about"""
        if self is Strategy.NO_TEMPORAL:
            return surviving.most_recent()
        if self is Strategy.FROZEN:
            return SurvivingSet(surviving.capacity)
        return surviving


@dataclass(frozen=True)
class PublishedPlan:
    """An immutable trajectory with the absolute time its tau = 0 maps to"""
    trajectory: MincoTrajectory
    t_plan: float
    plan_id: int
    report: CostReport

    def reference(self, t: float, order: int = 0) -> np.ndarray:
        """Plan derivative at absolute time t, holding the end state afterwards"""
        tau = min(max(t - self.t_plan, 0.0), self.trajectory.total_duration)
        return self.trajectory.eval(tau, order)

    @property
    def t_end(self) -> float:
        return self.t_plan + self.trajectory.total_duration


class Replanner:
    """Owns the published plan and the dodge-mode flag of one UAV"""

    def __init__(self, cfg: PlannerConfig, goal: np.ndarray,
                 obstacles: Sequence[StaticObstacle] = (), strategy: Strategy = Strategy.FULL):
        self.cfg = cfg
        self.goal = np.asarray(goal, dtype=float).reshape(3)
        self.obstacles = list(obstacles)
        self.strategy = strategy
        self.plan: Optional[PublishedPlan] = None
        self.dodge_mode = False
        self.events: List[Tuple[float, str]] = []
        self.reports: List[CostReport] = []
        self.failures = 0
        self._next_id = 0

    def _publish(self, trajectory: MincoTrajectory, t_now: float, report: CostReport) -> PublishedPlan:
        self.plan = PublishedPlan(trajectory, t_now, self._next_id, report)
        self._next_id += 1
        return self.plan

    def step(self, t_now: float, state: BoundaryState, surviving: SurvivingSet) -> PublishedPlan:
        """One replan cycle at t_now from the current UAV state"""
        view = self.strategy.view(prune(surviving, t_now))
        spatial = self.strategy.spatial

        was_dodging = self.dodge_mode
        if len(view) == 0:
            self.dodge_mode = False
        elif not self.dodge_mode:
            self.dodge_mode = risk_check(view, state.position, t_now, self.cfg.safety_radius,
                                         self.plan, self.cfg.samples_per_segment, spatial)
        if self.dodge_mode and not was_dodging:
            self.events.append((t_now, "dodge_triggered"))
            log_planner("Dodge mode on", {"t": t_now, "threats": len(view)})
        elif was_dodging and not self.dodge_mode:
            self.events.append((t_now, "dodge_cleared"))
            log_planner("Dodge mode off", {"t": t_now})

        # Warm start only from a plan made in the same mode
        warm = self.plan.trajectory if (self.plan is not None and was_dodging == self.dodge_mode) else None
        if self.dodge_mode:
            threats = view.as_batch(spatial)
            floor = min(view.longest_remaining(t_now), self.cfg.initial_duration)
        else:
            threats, floor = ThreatBatch.empty(), 0.0

        trajectory, report = optimize(state, self.goal, threats, self.obstacles, self.cfg,
                                      warm_start=warm, t_plan=t_now, floor=floor)
        report.dodge_mode = self.dodge_mode
        self.reports.append(report)
        if trajectory is None:
            self.failures += 1
            if self.plan is None:
                # Nothing to fall back to: hover where we are
                hover, hover_report = optimize(state, state.position, ThreatBatch.empty(), (),
                                               self.cfg, t_plan=t_now)
                if hover is None:
                    raise RuntimeError("planner cannot produce an initial trajectory")
                return self._publish(hover, t_now, hover_report)
            log_warning("Keeping previous plan", {"t": t_now, "plan_id": self.plan.plan_id})
            return self.plan
        return self._publish(trajectory, t_now, report)


def replan_loop(state_source: Callable[[float], BoundaryState],
                surviving_source: Callable[[float], SurvivingSet],
                goal: np.ndarray, cfg: PlannerConfig, t_start: float, t_end: float,
                obstacles: Sequence[StaticObstacle] = (),
                strategy: Strategy = Strategy.FULL) -> Iterator[PublishedPlan]:
    """Yield the published plan every replan_period between t_start and t_end"""
    replanner = Replanner(cfg, goal, obstacles, strategy)
    n_cycles = int(np.floor((t_end - t_start) / cfg.replan_period + 1e-9)) + 1
    for i in range(n_cycles):
        t_now = t_start + i * cfg.replan_period
        yield replanner.step(t_now, state_source(t_now), surviving_source(t_now))
