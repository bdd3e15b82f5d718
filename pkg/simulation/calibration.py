"""
Uncertainty calibration
Collects ground-truth residuals around detection-time predictions and searches the
smallest containing envelope
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.config_manager import ScenarioConfig
from logs.logger import log_info, log_warning
from perception.papt_predictor import BallisticTrajectory, ballistic_eval
from simulation.montecarlo import ablation_cell, cell_scenario, trial_seed
from simulation.projectile import integrate
from simulation.trial_runner import PerceptionPipeline, build_world
from uncertainty.uncertainty_model import UncertaintyParams, survival_duration


RESIDUAL_DT = 0.01
GAMMA_GRID = tuple(np.round(np.arange(0.01, 0.51, 0.01), 4))
BETA_GRID = tuple(np.round(np.arange(0.0, 1.01, 0.05), 4))
ALPHA_GRID = tuple(np.round(np.arange(0.0, 2.01, 0.05), 4))


@dataclass
class ResidualSamples:
    """Elapsed time since the predicted release and distance to the predicted center"""
    elapsed: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trials_used: int = 0
    trials_missed: int = 0

    def extend(self, other: "ResidualSamples") -> "ResidualSamples":
        return ResidualSamples(np.concatenate([self.elapsed, other.elapsed]),
                               np.concatenate([self.residual, other.residual]),
                               self.trials_used + other.trials_used,
                               self.trials_missed + other.trials_missed)


@dataclass
class CalibrationResult:
    params: UncertaintyParams
    achieved: float
    reached: bool
    target: float
    samples: int


def containment_fraction(samples: ResidualSamples, params: UncertaintyParams) -> float:
    if samples.residual.size == 0:
        return 0.0
    e = samples.elapsed
    radius = params.alpha * e ** 2 + params.beta * e + params.gamma
    return float(np.mean(samples.residual <= radius))


def trial_residuals(scenario: ScenarioConfig, oracle_release: bool = False) -> ResidualSamples:
    """Open-loop residuals of one throw against its detection-time prediction"""
    world = build_world(scenario)
    attacker = world.attackers[0]

    if oracle_release:
        prediction = BallisticTrajectory(attacker.release_time, attacker.p0, attacker.v0)
    else:
        perception = PerceptionPipeline(scenario, world.camera)
        for frame in sorted(world.stream.frames, key=lambda f: f.delivery_time):
            if frame.source == 0:
                perception.deliver(frame)
        candidates = [c for c in perception.candidates if c.position[2] > scenario.z_ground]
        if not candidates:
            return ResidualSamples(trials_missed=1)
        best = min(candidates, key=lambda c: abs(c.t_release - attacker.release_time))
        prediction = BallisticTrajectory(best.t_release, best.position, best.velocity)

    flight = attacker.landing_time - attacker.release_time
    times, states = integrate(attacker.p0, attacker.v0, flight, RESIDUAL_DT, scenario.drag_coefficient)
    absolute = attacker.release_time + times
    elapsed = absolute - prediction.t_release
    airborne = prediction.p0[2] > scenario.z_ground
    horizon = survival_duration(prediction, scenario.z_ground) if airborne else 0.0
    keep = (elapsed >= 0.0) & (elapsed <= horizon)
    if not np.any(keep):
        return ResidualSamples(trials_missed=1)
    centers, _ = ballistic_eval(prediction, elapsed[keep])
    residual = np.linalg.norm(states[keep, :3] - centers, axis=1)
    return ResidualSamples(elapsed[keep], residual, trials_used=1)


def calibration_batch(template: ScenarioConfig, trials: int, master_seed: int) -> List[ScenarioConfig]:
    """Seeded diverse throws sharing the template's drag and noise"""
    return [cell_scenario(template, ablation_cell(master_seed, i), trial_seed(master_seed, 1, i))
            for i in range(trials)]


def _residual_job(job: Tuple[dict, bool]) -> ResidualSamples:
    data, oracle = job
    return trial_residuals(ScenarioConfig.model_validate(data), oracle)


def collect_residuals(scenarios: Sequence[ScenarioConfig], oracle_release: bool = False,
                      n_jobs: int = 1) -> ResidualSamples:
    jobs = [(s.model_dump(), oracle_release) for s in scenarios]
    if n_jobs <= 1:
        parts = [_residual_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_residual_job, jobs))
    total = ResidualSamples()
    for part in parts:
        total = total.extend(part)
    return total


def search_params(samples: ResidualSamples, target: float,
                  gammas: Sequence[float] = GAMMA_GRID, betas: Sequence[float] = BETA_GRID,
                  alphas: Sequence[float] = ALPHA_GRID) -> CalibrationResult:
    """First (gamma, beta, alpha) in lexicographic grid order reaching the target fraction"""
    if not 0 < target <= 1:
        raise ValueError("target containment must lie in (0, 1]")
    e = samples.elapsed
    best_fraction, best_params = -1.0, None
    alpha_arr = np.asarray(alphas, dtype=float)
    for gamma in gammas:
        for beta in betas:
            base = beta * e + gamma
            # (A, S) containment for every alpha at once
            contained = samples.residual[None, :] <= base[None, :] + alpha_arr[:, None] * e[None, :] ** 2
            fractions = contained.mean(axis=1) if e.size else np.zeros(alpha_arr.size)
            hits = np.flatnonzero(fractions >= target)
            if hits.size:
                i = int(hits[0])
                params = UncertaintyParams(float(alpha_arr[i]), float(beta), float(gamma))
                return CalibrationResult(params, float(fractions[i]), True, target, int(e.size))
            i = int(np.argmax(fractions))
            if fractions[i] > best_fraction:
                best_fraction = float(fractions[i])
                best_params = UncertaintyParams(float(alpha_arr[i]), float(beta), float(gamma))
    return CalibrationResult(best_params, best_fraction, False, target, int(e.size))


def calibrate_uncertainty(template: ScenarioConfig, trials: int = 200, target: float = 0.99,
                          oracle_release: bool = False, n_jobs: int = 1,
                          master_seed: Optional[int] = None) -> CalibrationResult:
    """Smallest envelope parameters containing the ground truth on the target share of samples"""
    master = template.seed if master_seed is None else master_seed
    samples = collect_residuals(calibration_batch(template, trials, master), oracle_release, n_jobs)
    result = search_params(samples, target)
    payload = {
        "alpha": result.params.alpha, "beta": result.params.beta, "gamma": result.params.gamma,
        "achieved": result.achieved, "samples": result.samples,
        "trials_used": samples.trials_used, "trials_missed": samples.trials_missed,
    }
    if result.reached:
        log_info("Calibration reached target", payload)
    else:
        log_warning("Calibration target unreachable on grid", payload)
    return result
