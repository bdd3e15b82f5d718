"""
Logging system for the threat-aware dodging stack
Channels for perception, planning and trial events, with structured JSON files
"""
import logging
import logging.handlers
import time
from pathlib import Path
from datetime import datetime
from typing import Optional, Dict, Any
import json

import psutil
from pythonjsonlogger import jsonlogger


CHANNELS = ("main", "error", "planner", "perception", "trial")


class ThreatDodgeLogger:
    """Named loggers for every pipeline stage, console first, files on demand"""

    def __init__(self, log_dir: Optional[str] = None, verbosity: int = 0):
        self.log_dir: Optional[Path] = None
        self.verbosity = verbosity
        self.loggers: Dict[str, logging.Logger] = {}
        self._setup_loggers()
        if log_dir is not None:
            self.configure(log_dir, verbosity)

    def _setup_loggers(self):
        """Create one logger per channel with a console handler"""
        for channel in CHANNELS:
            level = logging.ERROR if channel == "error" else logging.DEBUG
            self.loggers[channel] = self._create_logger(f"threat_dodge.{channel}", level)

    def _console_level(self) -> int:
        if self.verbosity >= 2:
            return logging.DEBUG
        if self.verbosity == 1:
            return logging.INFO
        return logging.WARNING

    def _create_logger(self, name: str, level: int) -> logging.Logger:
        """Create a logger with a console handler"""
        logger = logging.getLogger(name)
        logger.setLevel(level)
        logger.propagate = False

        # Clear existing handlers
        logger.handlers.clear()

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(
            logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        )
        console_handler.setLevel(self._console_level())
        logger.addHandler(console_handler)
        return logger

    def configure(self, log_dir: str, verbosity: int = 0):
        """Attach rotating JSON file handlers under log_dir"""
        self.verbosity = verbosity
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        formatter = jsonlogger.JsonFormatter(
            '%(asctime)s %(name)s %(levelname)s %(message)s'
        )
        for channel, logger in self.loggers.items():
            for handler in list(logger.handlers):
                if isinstance(handler, logging.handlers.RotatingFileHandler):
                    logger.removeHandler(handler)
                    handler.close()
                else:
                    handler.setLevel(self._console_level())

            file_handler = logging.handlers.RotatingFileHandler(
                self.log_dir / f"{channel}.log",
                maxBytes=10*1024*1024,  # 10MB
                backupCount=5,
                encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            file_handler.setLevel(logging.DEBUG if verbosity >= 2 else logging.INFO)
            logger.addHandler(file_handler)

    def _emit(self, channel: str, level: int, message: str,
              extra_data: Optional[Dict[str, Any]] = None, exc_info: bool = False):
        logger = self.loggers[channel]
        # Skip serialising payloads no handler will accept
        if level < min((h.level for h in logger.handlers), default=logging.NOTSET):
            return
        extra = {"data": json.loads(json.dumps(extra_data, default=str))} if extra_data else None
        if extra_data and self.log_dir is None:
            message = f"{message} | Data: {json.dumps(extra_data, default=str)}"
        logger.log(level, message, extra=extra, exc_info=exc_info)

    def log_info(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log info message"""
        self._emit("main", logging.INFO, message, extra_data)

    def log_warning(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log warning message"""
        self._emit("main", logging.WARNING, message, extra_data)

    def log_error(self, message: str, exception: Optional[Exception] = None,
                  extra_data: Optional[Dict[str, Any]] = None):
        """Log error message"""
        if exception:
            self._emit("error", logging.ERROR, f"{message} | Exception: {exception}",
                       extra_data, exc_info=True)
        else:
            self._emit("error", logging.ERROR, message, extra_data)

    def log_planner(self, message: str, report: Optional[Dict[str, Any]] = None):
        """Log planner cycle activity"""
        self._emit("planner", logging.DEBUG, message, report)

    def log_perception(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log perception events (rejections, candidates)"""
        self._emit("perception", logging.DEBUG, message, extra_data)

    def log_trial(self, message: str, result: Optional[Dict[str, Any]] = None):
        """Log a finished trial"""
        self._emit("trial", logging.INFO, message, result)

    def log_performance(self, operation: str, execution_time: float,
                        extra_data: Optional[Dict[str, Any]] = None):
        """Log wall time and resident memory of an operation"""
        perf_data = {
            "operation": operation,
            "execution_time_ms": round(execution_time * 1000, 2),
            "memory_usage_mb": round(psutil.Process().memory_info().rss / 1024 / 1024, 2),
            "timestamp": datetime.now().isoformat()
        }
        if extra_data:
            perf_data.update(extra_data)
        self._emit("main", logging.INFO, "Performance", perf_data)


# Global logger instance
dodge_logger = ThreatDodgeLogger()


# Convenience functions
def configure_logging(log_dir: str, verbosity: int = 0):
    """Attach file handlers to the global logger"""
    dodge_logger.configure(log_dir, verbosity)


def log_info(message: str, extra_data: Optional[Dict[str, Any]] = None):
    """Log info message"""
    dodge_logger.log_info(message, extra_data)


def log_warning(message: str, extra_data: Optional[Dict[str, Any]] = None):
    """Log warning message"""
    dodge_logger.log_warning(message, extra_data)


def log_error(message: str, exception: Optional[Exception] = None,
              extra_data: Optional[Dict[str, Any]] = None):
    """Log error message"""
    dodge_logger.log_error(message, exception, extra_data)


def log_planner(message: str, report: Optional[Dict[str, Any]] = None):
    """Log planner activity"""
    dodge_logger.log_planner(message, report)


def log_perception(message: str, extra_data: Optional[Dict[str, Any]] = None):
    """Log perception activity"""
    dodge_logger.log_perception(message, extra_data)


def log_trial(message: str, result: Optional[Dict[str, Any]] = None):
    """Log trial outcome"""
    dodge_logger.log_trial(message, result)


def log_performance(operation: str, execution_time: float,
                    extra_data: Optional[Dict[str, Any]] = None):
    """Log performance metrics"""
    dodge_logger.log_performance(operation, execution_time, extra_data)


class timed_operation:
    """Context manager that logs the wall time of a block"""

    def __init__(self, operation: str, extra_data: Optional[Dict[str, Any]] = None):
        self.operation = operation
        self.extra_data = extra_data
        self.start = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        log_performance(self.operation, time.perf_counter() - self.start, self.extra_data)
        return False
