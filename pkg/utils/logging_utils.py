# utils/logging_utils.py
import dataclasses
import json
import logging
import os
from enum import Enum
from typing import Any

FILE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s (%(threadName)s) - %(message)s"
CONSOLE_FORMAT = "%(levelname)s %(name)s: %(message)s"
OWNED = "_relibev_owned"


def _level(name: str, default: int) -> int:
    value = getattr(logging, name.upper(), None) if name else None
    return value if isinstance(value, int) else default


def setup_logging() -> str:
    """Configure logging with env-driven levels and file path; returns the log file.
    Env vars:
      - LOG_LEVEL: DEBUG|INFO|WARNING|ERROR|CRITICAL (default INFO)
      - LOG_CONSOLE_LEVEL: level for the console only (default LOG_LEVEL)
      - LOG_FILE: Path to log file (default 'relibev.log')
    File records name the emitting thread; the console uses a short format.
    """
    level = _level(os.getenv("LOG_LEVEL", "INFO"), logging.INFO)
    console_level = _level(os.getenv("LOG_CONSOLE_LEVEL", ""), level)

    log_file = os.getenv("LOG_FILE", "relibev.log")
    log_dir = os.path.dirname(log_file)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)

    root = logging.getLogger()
    root.setLevel(min(level, console_level))

    # Reset handlers to avoid duplicates; the ones an earlier call opened are closed
    for handler in list(root.handlers):
        root.removeHandler(handler)
        if getattr(handler, OWNED, False):
            handler.close()

    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(level)
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT))

    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(console_level)
    stream_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))

    for handler in (file_handler, stream_handler):
        setattr(handler, OWNED, True)

    root.addHandler(file_handler)
    root.addHandler(stream_handler)
    return log_file


def _jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, Enum):
        return obj.value
    return obj


def log_dict(obj: Any) -> str:
    """Helper function to pretty print dataclasses/dictionaries for logging"""
    if dataclasses.is_dataclass(obj) or isinstance(obj, dict):
        return json.dumps(_jsonable(obj), indent=2, sort_keys=True, default=str)
    if hasattr(obj, "__dict__"):
        return json.dumps(obj.__dict__, indent=2, default=str)
    return str(obj)
