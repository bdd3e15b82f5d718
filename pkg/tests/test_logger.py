"""
Tests for the structured logging channels
"""
import json
import logging
from pathlib import Path

from logs.logger import CHANNELS, ThreatDodgeLogger, timed_operation


def _flush(logger: ThreatDodgeLogger):
    for channel_logger in logger.loggers.values():
        for handler in channel_logger.handlers:
            handler.flush()


def test_channels_start_with_console_only():
    logger = ThreatDodgeLogger()
    assert set(logger.loggers) == set(CHANNELS)
    for channel_logger in logger.loggers.values():
        assert len(channel_logger.handlers) == 1
        assert not channel_logger.propagate


def test_file_handlers_write_json(tmp_path):
    logger = ThreatDodgeLogger(str(tmp_path), verbosity=2)
    logger.log_trial("Trial finished", {"seed": 3, "success": True})
    logger.log_planner("Optimisation finished", {"total": 1.5})
    _flush(logger)

    lines = (tmp_path / "trial.log").read_text(encoding="utf-8").splitlines()
    record = json.loads(lines[-1])
    assert record["message"] == "Trial finished"
    assert record["data"] == {"seed": 3, "success": True}
    assert (tmp_path / "planner.log").read_text(encoding="utf-8").strip()


def test_debug_channels_are_quiet_by_default(tmp_path):
    logger = ThreatDodgeLogger(str(tmp_path), verbosity=0)
    logger.log_perception("Candidate", {"t": 1.0})
    _flush(logger)
    assert (tmp_path / "perception.log").read_text(encoding="utf-8") == ""


def test_reconfigure_replaces_file_handlers(tmp_path):
    logger = ThreatDodgeLogger(str(tmp_path / "a"))
    logger.configure(str(tmp_path / "b"))
    handlers = logger.loggers["main"].handlers
    files = [h for h in handlers if isinstance(h, logging.handlers.RotatingFileHandler)]
    assert len(files) == 1
    assert files[0].baseFilename.endswith("main.log")
    assert Path(files[0].baseFilename).parent == tmp_path / "b"


def test_errors_carry_exception_text(tmp_path):
    logger = ThreatDodgeLogger(str(tmp_path))
    try:
        raise ValueError("bad depth")
    except ValueError as exc:
        logger.log_error("Command failed", exc)
    _flush(logger)
    record = json.loads((tmp_path / "error.log").read_text(encoding="utf-8").splitlines()[-1])
    assert "bad depth" in record["message"]


def test_timed_operation_returns_context():
    with timed_operation("noop", {"k": 1}) as op:
        pass
    assert op.operation == "noop"
    assert op.start > 0.0
