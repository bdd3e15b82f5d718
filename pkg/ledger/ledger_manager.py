"""
Ledger Manager for trial artifacts
Writes metrics, trajectory logs, cost reports and summaries atomically under one output directory
"""
import json
import math
import os
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, IO, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from logs.logger import log_error, log_info

SCHEMA_VERSION = 1


class ArtifactType(Enum):
    """Files a command can leave behind"""
    METRICS = "metrics.jsonl"
    TRAJECTORY = "trajectory.csv"
    COST_REPORTS = "cost_reports.jsonl"
    SUMMARY_JSON = "summary.json"
    SUMMARY_TEXT = "summary.txt"


class LedgerError(OSError):
    """An artifact could not be written or read back"""


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class MetricsSummary:
    """Aggregate recomputed from metric rows alone"""
    trials: int
    successes: int
    success_rate: float
    mean_d_min: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {"trials": self.trials, "successes": self.successes,
                "SR": self.success_rate, "mean_d_min": self.mean_d_min}


def summarize_metrics(records: Iterable[Dict[str, Any]]) -> MetricsSummary:
    rows = list(records)
    successes = sum(1 for r in rows if r.get("success"))
    d_values = [r["d_min"] for r in rows if r.get("d_min") is not None]
    return MetricsSummary(
        trials=len(rows),
        successes=successes,
        success_rate=100.0 * successes / len(rows) if rows else 0.0,
        mean_d_min=float(np.mean(d_values)) if d_values else None,
    )


class LedgerManager:
    """Artifact writer bound to an output directory"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    def _atomic_write(self, name: str, writer: Callable[[IO[str]], None]) -> Path:
        """Write to a sibling temp file, then rename over the target"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / name
        fd, tmp_name = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.out_dir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                writer(f)
            os.replace(tmp_name, target)
        except Exception as e:
            if os.path.exists(tmp_name):
                os.remove(tmp_name)
            log_error(f"Failed to write {target}", e)
            raise LedgerError(f"could not write {target}: {e}") from e
        return target

    def write_jsonl(self, name: str, records: Iterable[Dict[str, Any]]) -> Path:
        rows = [to_jsonable({"schema_version": SCHEMA_VERSION, **record}) for record in records]

        def writer(f):
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")

        return self._atomic_write(name, writer)

    def write_metrics(self, records: Iterable[Dict[str, Any]]) -> Path:
        """One JSON object per trial"""
        path = self.write_jsonl(ArtifactType.METRICS.value, records)
        log_info("Metrics written", {"path": str(path)})
        return path

    def write_cost_reports(self, reports: Iterable[Dict[str, Any]]) -> Path:
        return self.write_jsonl(ArtifactType.COST_REPORTS.value, reports)

    def write_table(self, name: str, table: pd.DataFrame) -> Path:
        return self._atomic_write(name, lambda f: table.to_csv(f, index=False))

    def write_trajectory(self, log: pd.DataFrame) -> Path:
        return self.write_table(ArtifactType.TRAJECTORY.value, log)

    def write_summary(self, summary: Dict[str, Any], lines: Optional[List[str]] = None) -> Dict[str, Path]:
        """Machine-readable summary.json and human-readable summary.txt"""
        payload = to_jsonable({"schema_version": SCHEMA_VERSION, **summary})
        text = lines if lines is not None else [f"{key}: {value}" for key, value in payload.items()]
        return {
            "json": self._atomic_write(ArtifactType.SUMMARY_JSON.value,
                                       lambda f: json.dump(payload, f, indent=2, sort_keys=True)),
            "text": self._atomic_write(ArtifactType.SUMMARY_TEXT.value,
                                       lambda f: f.write("\n".join(text) + "\n")),
        }

    def read_jsonl(self, name: str) -> List[Dict[str, Any]]:
        path = self.out_dir / name
        try:
            with open(path, "r", encoding="utf-8") as f:
                return [json.loads(line) for line in f if line.strip()]
        except (OSError, json.JSONDecodeError) as e:
            raise LedgerError(f"could not read {path}: {e}") from e

    def read_metrics(self) -> List[Dict[str, Any]]:
        return self.read_jsonl(ArtifactType.METRICS.value)
