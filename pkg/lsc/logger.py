"""
Run logging for the decomposition toolkit.

JSON-lines format with daily log rotation.
"""

import json
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from . import __version__
from .config import get_config_hash


def get_log_path(base_dir: str = "logs") -> str:
    """Get log file path for today."""
    os.makedirs(base_dir, exist_ok=True)
    date_str = datetime.now().strftime("%Y-%m-%d")
    return os.path.join(base_dir, f"runs_{date_str}.jsonl")


def _round_floats(value: Any, digits: int = 6) -> Any:
    if isinstance(value, float):
        return round(value, digits)
    if isinstance(value, dict):
        return {k: _round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v, digits) for v in value]
    return value


def format_run_log(
    command: str,
    parameters: Dict[str, Any],
    summary: Dict[str, Any],
    exit_code: int = 0,
    duration_sec: Optional[float] = None,
) -> Dict[str, Any]:
    """Format one CLI run for logging."""
    return {
        "package_version": __version__,
        "config_hash": get_config_hash(),
        "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "command": command,
        "parameters": _round_floats(parameters),
        "summary": _round_floats(summary),
        "exit_code": exit_code,
        "duration_sec": None if duration_sec is None else round(duration_sec, 3),
    }


def log_run(
    command: str,
    parameters: Dict[str, Any],
    summary: Dict[str, Any],
    exit_code: int = 0,
    duration_sec: Optional[float] = None,
    log_dir: str = "logs",
) -> str:
    """
    Append a run record to the JSON-lines log file.

    Creates new file for each day (daily rotation). Returns the file path.
    """
    entry = format_run_log(command, parameters, summary, exit_code, duration_sec)
    log_path = get_log_path(log_dir)

    with open(log_path, "a", encoding="utf-8") as f:
        f.write(json.dumps(entry, default=str) + "\n")
    return log_path


def read_runs(log_path: str) -> List[Dict]:
    """Read all runs from a log file, skipping malformed lines."""
    runs = []

    if not os.path.exists(log_path):
        return runs

    with open(log_path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                try:
                    runs.append(json.loads(line))
                except json.JSONDecodeError:
                    continue

    return runs


def get_recent_runs(
    command: Optional[str] = None,
    limit: int = 100,
    log_dir: str = "logs"
) -> List[Dict]:
    """
    Get today's runs, optionally filtered by command.

    Returns most recent runs first.
    """
    runs = read_runs(get_log_path(log_dir))

    if command:
        runs = [r for r in runs if r.get("command") == command]

    runs.sort(key=lambda r: r.get("timestamp", ""), reverse=True)

    return runs[:limit]
