"""
Monte-Carlo sweeps
Table-style cell grids, reproducible per-trial seeds, parallel execution and success-rate aggregation
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.config_manager import ScenarioConfig
from logs.logger import log_info
from planner.replanner import Strategy
from perception.arm_motion import release_point_for
from simulation.projectile import minimum_aim_speed
from simulation.trial_runner import run_trial


class SpeedBand(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    EXTREME = "extreme"


# Average throw speed (m/s) per attacker distance and band
TABLE_SPEEDS: Dict[float, Dict[SpeedBand, float]] = {
    3.0: {SpeedBand.LOW: 3.16, SpeedBand.MEDIUM: 4.08, SpeedBand.HIGH: 5.27, SpeedBand.EXTREME: 6.10},
    4.0: {SpeedBand.LOW: 4.83, SpeedBand.MEDIUM: 6.19, SpeedBand.HIGH: 7.30, SpeedBand.EXTREME: 8.27},
    5.0: {SpeedBand.LOW: 6.45, SpeedBand.MEDIUM: 7.42, SpeedBand.HIGH: 9.01, SpeedBand.EXTREME: 10.18},
    6.0: {SpeedBand.LOW: 8.92, SpeedBand.MEDIUM: 10.42, SpeedBand.HIGH: 11.96, SpeedBand.EXTREME: 13.29},
}
BAND_HALF_WIDTH = 0.4
# Aimed throws launch at least this much above the slowest speed that reaches the UAV (m/s)
REACH_MARGIN = 0.05
TABLE_DISTANCES = (3.0, 4.0, 5.0, 6.0)
TABLE_ANGLES = (-30.0, 0.0, 30.0)


@dataclass(frozen=True)
class Cell:
    """Attacker distance (m), bearing from the camera axis (deg) and speed band"""
    distance: float
    angle: float
    band: SpeedBand

    @property
    def label(self) -> str:
        return f"{self.distance:g}m/{self.angle:+g}deg/{self.band.value}"


def table_cells(distances: Iterable[float] = TABLE_DISTANCES, angles: Iterable[float] = TABLE_ANGLES,
                bands: Iterable[SpeedBand] = tuple(SpeedBand)) -> List[Cell]:
    return [Cell(d, a, b) for d in distances for a in angles for b in bands]


def trial_seed(master_seed: int, cell_index: int, trial_index: int) -> int:
    """Independent reproducible seed from (master, cell, trial)"""
    return int(np.random.SeedSequence([master_seed, cell_index, trial_index]).generate_state(1)[0])


def band_speed(cell: Cell, seed: int) -> float:
    """Uniform draw inside the cell's band around the nearest tabulated distance"""
    nearest = min(TABLE_SPEEDS, key=lambda d: abs(d - cell.distance))
    center = TABLE_SPEEDS[nearest][cell.band]
    rng = np.random.default_rng([seed, 1])
    return float(rng.uniform(center - BAND_HALF_WIDTH, center + BAND_HALF_WIDTH))


def cell_scenario(template: ScenarioConfig, cell: Cell, seed: int) -> ScenarioConfig:
    """Template with the attacker placed and its throw speed drawn for this cell

    Band speeds below what can reach the UAV are raised to just above that minimum.
    """
    start = np.array(template.uav.start)
    bearing = np.deg2rad(cell.angle)
    forward = np.array(template.camera.forward, dtype=float)
    heading = np.arctan2(forward[1], forward[0]) + bearing
    position = [float(start[0] + cell.distance * np.cos(heading)),
                float(start[1] + cell.distance * np.sin(heading)),
                float(template.z_ground)]
    release = release_point_for(np.array(position), start)
    floor = minimum_aim_speed(release, start, template.drag_coefficient) + REACH_MARGIN
    throw = template.throw.model_copy(update={
        "attacker_position": position,
        "speed": max(band_speed(cell, seed), floor),
        "aim_at_uav": True,
    })
    return template.model_copy(update={"seed": seed, "throw": throw})


@dataclass
class MonteCarloReport:
    """Per-trial rows plus success rate and mean d_min, overall and per cell"""
    trials: pd.DataFrame
    strategy: str = Strategy.FULL.value

    @property
    def trial_count(self) -> int:
        return int(len(self.trials))

    @property
    def success_rate(self) -> float:
        if self.trials.empty:
            return 0.0
        return 100.0 * int(self.trials["success"].sum()) / len(self.trials)

    @property
    def mean_d_min(self) -> float:
        return float(self.trials["d_min"].mean()) if not self.trials.empty else float("nan")

    def per_cell(self) -> pd.DataFrame:
        grouped = self.trials.groupby(["distance", "angle", "band"], sort=True)
        table = grouped.agg(trials=("success", "size"), successes=("success", "sum"),
                            mean_d_min=("d_min", "mean"))
        table["SR"] = 100.0 * table["successes"] / table["trials"]
        return table.reset_index()

    def summary(self) -> Dict[str, object]:
        return {
            "strategy": self.strategy,
            "trials": self.trial_count,
            "SR": self.success_rate,
            "mean_d_min": self.mean_d_min,
        }


def _run_cell_trial(job: Tuple[dict, str, int, int, dict]) -> dict:
    """Worker: one trial from a serialised scenario"""
    scenario_data, strategy, cell_index, trial_index, cell_fields = job
    scenario = ScenarioConfig.model_validate(scenario_data)
    result = run_trial(scenario, Strategy(strategy), capture_log=False)
    record = result.to_record()
    record.update(cell_fields)
    record.update({"cell_index": cell_index, "trial_index": trial_index})
    return record


def _execute(jobs: List[Tuple[dict, str, int, int, dict]], n_jobs: int) -> List[dict]:
    if n_jobs <= 1:
        return [_run_cell_trial(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_cell_trial, jobs, chunksize=1))


def _to_frame(records: List[dict]) -> pd.DataFrame:
    frame = pd.DataFrame(records)
    if not frame.empty:
        frame = frame.sort_values(["cell_index", "trial_index"], kind="stable").reset_index(drop=True)
    return frame


def run_montecarlo(template: ScenarioConfig, cells: Sequence[Cell], trials_per_cell: int,
                   strategy: Strategy = Strategy.FULL, n_jobs: int = 1,
                   master_seed: Optional[int] = None) -> MonteCarloReport:
    """Every cell x trial, seeded from (master, cell, trial)"""
    if trials_per_cell < 1:
        raise ValueError("need at least one trial per cell")
    master = template.seed if master_seed is None else master_seed
    jobs = []
    for cell_index, cell in enumerate(cells):
        for trial_index in range(trials_per_cell):
            seed = trial_seed(master, cell_index, trial_index)
            scenario = cell_scenario(template, cell, seed)
            fields = {"distance": cell.distance, "angle": cell.angle, "band": cell.band.value,
                      "cell": cell.label}
            jobs.append((scenario.model_dump(), strategy.value, cell_index, trial_index, fields))

    log_info("Monte-Carlo sweep", {"cells": len(cells), "trials_per_cell": trials_per_cell,
                                   "strategy": strategy.value, "jobs": n_jobs})
    report = MonteCarloReport(_to_frame(_execute(jobs, n_jobs)), strategy.value)
    log_info("Monte-Carlo sweep finished", report.summary())
    return report


ABLATION_DISTANCES = (3.0, 4.0, 5.0)
ABLATION_BANDS = (SpeedBand.LOW, SpeedBand.MEDIUM, SpeedBand.HIGH)


def ablation_cell(master_seed: int, trial_index: int) -> Cell:
    """Diverse batch: each trial draws its own distance, bearing and band"""
    rng = np.random.default_rng([master_seed, trial_index, 7])
    return Cell(float(rng.choice(ABLATION_DISTANCES)), float(rng.choice(TABLE_ANGLES)),
                ABLATION_BANDS[int(rng.integers(len(ABLATION_BANDS)))])


@dataclass
class AblationReport:
    reports: Dict[str, MonteCarloReport] = field(default_factory=dict)

    def comparison(self) -> pd.DataFrame:
        """Mean d_min and SR per strategy"""
        rows = [report.summary() for report in self.reports.values()]
        return pd.DataFrame(rows, columns=["strategy", "trials", "mean_d_min", "SR"])


def run_ablation(template: ScenarioConfig, trials: int = 30, n_jobs: int = 1,
                 strategies: Sequence[Strategy] = (Strategy.FULL, Strategy.NO_SPATIAL, Strategy.NO_TEMPORAL),
                 master_seed: Optional[int] = None) -> AblationReport:
    """Same seeded trials under every strategy"""
    if trials < 1:
        raise ValueError("need at least one trial")
    master = template.seed if master_seed is None else master_seed
    ablation = AblationReport()
    for strategy in strategies:
        jobs = []
        for trial_index in range(trials):
            cell = ablation_cell(master, trial_index)
            seed = trial_seed(master, 0, trial_index)
            scenario = cell_scenario(template, cell, seed)
            fields = {"distance": cell.distance, "angle": cell.angle, "band": cell.band.value,
                      "cell": cell.label}
            jobs.append((scenario.model_dump(), strategy.value, 0, trial_index, fields))
        ablation.reports[strategy.value] = MonteCarloReport(_to_frame(_execute(jobs, n_jobs)),
                                                            strategy.value)
    log_info("Ablation finished", {"table": ablation.comparison().to_dict(orient="records")})
    return ablation
