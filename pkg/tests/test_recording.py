"""
Tests for keypoint stream capture and perception-only replay
"""
import json

import numpy as np
import pytest

from simulation.recording import RecordingError, STREAM_SCHEMA_VERSION, load_stream, record_stream, replay
from simulation.trial_runner import build_world


def test_recorded_stream_reads_back(scenario, tmp_path):
    stream = build_world(scenario).stream
    path = record_stream(stream, tmp_path / "stream.jsonl")
    loaded = load_stream(path)

    assert len(loaded.frames) == len(stream.frames)
    assert loaded.frame_rate == stream.frame_rate
    assert loaded.latency == pytest.approx(stream.latency)
    for original, copy in zip(stream.frames[:40], loaded.frames[:40]):
        assert copy.delivery_time == original.delivery_time
        assert copy.observation.joint_id is original.observation.joint_id
        assert copy.observation.valid == original.observation.valid
        np.testing.assert_array_equal(np.isnan(copy.observation.depth_patch),
                                      np.isnan(original.observation.depth_patch))
    assert not list(tmp_path.glob("*.tmp"))


def test_header_carries_schema_version(scenario, tmp_path):
    path = record_stream(build_world(scenario).stream, tmp_path / "s.jsonl")
    header = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert header["schema_version"] == STREAM_SCHEMA_VERSION
    assert header["frames"] > 0


def test_unreadable_streams(tmp_path):
    with pytest.raises(RecordingError):
        load_stream(tmp_path / "missing.jsonl")

    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(RecordingError):
        load_stream(empty)

    future = tmp_path / "future.jsonl"
    future.write_text(json.dumps({"schema_version": 99, "frame_rate": 30, "latency": 0}) + "\n",
                      encoding="utf-8")
    with pytest.raises(RecordingError):
        load_stream(future)

    broken = tmp_path / "broken.jsonl"
    broken.write_text(json.dumps({"schema_version": STREAM_SCHEMA_VERSION, "frame_rate": 30,
                                  "latency": 0}) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(RecordingError):
        load_stream(broken)


def test_replay_detects_the_throw(quiet_scenario, tmp_path):
    world = build_world(quiet_scenario)
    path = record_stream(world.stream, tmp_path / "stream.jsonl")
    result = replay(quiet_scenario, load_stream(path))
    assert result.candidates
    assert result.surviving
    assert result.first_candidate_time is not None
    release = world.attackers[0].release_time
    assert min(c.t_release for c in result.candidates) <= release
