"""
Keypoint stream recording
JSON-lines capture of sensor streams and perception-only replay
"""
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from config.config_manager import ScenarioConfig
from logs.logger import log_info
from perception.arm_motion import KeypointStream, TimedObservation
from perception.camera_geometry import Joint, PixelObservation
from perception.papt_predictor import ReleaseCandidate
from simulation.trial_runner import PerceptionPipeline
from uncertainty.uncertainty_model import SurvivingTrajectory

STREAM_SCHEMA_VERSION = 1


class RecordingError(ValueError):
    """A stream file that cannot be read back"""


def _finite_or_none(values: np.ndarray) -> list:
    return [[None if not np.isfinite(x) else float(x) for x in row] for row in values]


def _frame_record(frame: TimedObservation) -> dict:
    obs = frame.observation
    return {
        "delivery_time": frame.delivery_time,
        "source": frame.source,
        "timestamp": obs.timestamp,
        "joint": obs.joint_id.value,
        "u": None if not np.isfinite(obs.u) else float(obs.u),
        "v": None if not np.isfinite(obs.v) else float(obs.v),
        "valid": obs.valid,
        "depth_patch": _finite_or_none(obs.depth_patch),
    }


def _frame_from_record(record: dict) -> TimedObservation:
    patch = np.array([[np.nan if x is None else x for x in row] for row in record["depth_patch"]],
                     dtype=float)
    observation = PixelObservation(
        np.nan if record["u"] is None else record["u"],
        np.nan if record["v"] is None else record["v"],
        patch, record["timestamp"], Joint(record["joint"]), record["valid"],
    )
    return TimedObservation(record["delivery_time"], observation, record["source"])


def record_stream(stream: KeypointStream, path: Union[str, Path]) -> Path:
    """Write a header line then one line per frame; replaces the file atomically"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        header = {"schema_version": STREAM_SCHEMA_VERSION, "frame_rate": stream.frame_rate,
                  "latency": stream.latency, "frames": len(stream.frames)}
        f.write(json.dumps(header) + "\n")
        for frame in stream.frames:
            f.write(json.dumps(_frame_record(frame)) + "\n")
    os.replace(tmp, target)
    log_info("Stream recorded", {"path": str(target), "frames": len(stream.frames)})
    return target


def load_stream(path: Union[str, Path]) -> KeypointStream:
    source = Path(path)
    if not source.is_file():
        raise RecordingError(f"stream file not found: {source}")
    with open(source, "r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise RecordingError(f"empty stream file: {source}")
    try:
        header = json.loads(lines[0])
        if header.get("schema_version") != STREAM_SCHEMA_VERSION:
            raise RecordingError(f"unsupported stream schema: {header.get('schema_version')}")
        frames = [_frame_from_record(json.loads(line)) for line in lines[1:]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise RecordingError(f"malformed stream file {source}: {exc}") from exc
    return KeypointStream(frames, header["frame_rate"], header["latency"])


@dataclass
class ReplayResult:
    candidates: List[ReleaseCandidate] = field(default_factory=list)
    surviving: List[SurvivingTrajectory] = field(default_factory=list)
    first_candidate_time: Optional[float] = None


def replay(scenario: ScenarioConfig, stream: KeypointStream) -> ReplayResult:
    """Run perception alone over a recorded stream, in delivery order"""
    pipeline = PerceptionPipeline(scenario, scenario.camera.to_model(scenario.uav.start))
    result = ReplayResult()
    for frame in sorted(stream.frames, key=lambda f: f.delivery_time):
        result.surviving.extend(pipeline.deliver(frame))
    result.candidates = list(pipeline.candidates)
    result.first_candidate_time = pipeline.first_candidate_time
    log_info("Replay finished", {"frames": len(stream.frames), "candidates": len(result.candidates)})
    return result
