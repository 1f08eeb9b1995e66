"""
Unit tests for logger.py.

Run records, daily JSON-lines files and reading them back.
"""

import json

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from lsc import __version__
from lsc.logger import format_run_log, get_log_path, get_recent_runs, log_run, read_runs


class TestFormatRunLog:
    """Tests for format_run_log."""

    def test_log_format_matches_schema(self):
        """Test that every required field is present and JSON serializable."""
        entry = format_run_log("detect", {"seed": 0}, {"outliers": 4}, 0, 1.23456)

        required_fields = [
            "package_version", "config_hash", "timestamp", "command",
            "parameters", "summary", "exit_code", "duration_sec",
        ]
        for field in required_fields:
            assert field in entry, f"Missing field: {field}"

        assert entry["package_version"] == __version__
        assert len(entry["config_hash"]) == 8
        assert entry["timestamp"].endswith("Z")
        assert entry["duration_sec"] == 1.235
        assert json.dumps(entry) is not None

    def test_floats_rounded(self):
        """Test nested floats are rounded to six digits."""
        entry = format_run_log("sweep", {"rho": 0.0123456789}, {"rates": [0.333333333, 1.0], "m": {"x": 2.0000001}})
        assert entry["parameters"]["rho"] == 0.012346
        assert entry["summary"]["rates"] == [0.333333, 1.0]
        assert entry["summary"]["m"]["x"] == 2.0

    def test_error_run(self):
        """Test a failed run keeps its exit code and no duration."""
        entry = format_run_log("verify", {}, {"error": "InfeasibleError"}, exit_code=2)
        assert entry["exit_code"] == 2
        assert entry["duration_sec"] is None


class TestLogRun:
    """Tests for writing and reading run logs."""

    def test_daily_file_name(self, tmp_path):
        """Test the log file is runs_<date>.jsonl inside the directory."""
        path = get_log_path(str(tmp_path / "logs"))
        name = os.path.basename(path)
        assert name.startswith("runs_") and name.endswith(".jsonl")
        assert os.path.isdir(tmp_path / "logs")

    def test_appends_lines(self, tmp_path):
        """Test each run appends one JSON line."""
        log_dir = str(tmp_path)
        path = log_run("generate", {"n1": 10}, {"outliers": 0}, log_dir=log_dir)
        log_run("detect", {"n1": 10}, {"outliers": 2}, log_dir=log_dir)
        runs = read_runs(path)
        assert [r["command"] for r in runs] == ["generate", "detect"]

    def test_skips_malformed_lines(self, tmp_path):
        """Test corrupt and blank lines are ignored."""
        path = log_run("generate", {}, {}, log_dir=str(tmp_path))
        with open(path, "a", encoding="utf-8") as f:
            f.write("{not json\n\n")
        log_run("detect", {}, {}, log_dir=str(tmp_path))
        assert len(read_runs(path)) == 2

    def test_missing_file(self, tmp_path):
        """Test a missing log reads as empty."""
        assert read_runs(str(tmp_path / "none.jsonl")) == []

    def test_recent_runs_filter_and_limit(self, tmp_path):
        """Test command filtering, newest-first order and the limit."""
        log_dir = str(tmp_path)
        for i in range(3):
            log_run("sweep", {"trial": i}, {}, log_dir=log_dir)
        log_run("detect", {}, {}, log_dir=log_dir)

        sweeps = get_recent_runs("sweep", log_dir=log_dir)
        assert len(sweeps) == 3
        assert all(r["command"] == "sweep" for r in sweeps)
        stamps = [r["timestamp"] for r in sweeps]
        assert stamps == sorted(stamps, reverse=True)
        assert len(get_recent_runs(limit=2, log_dir=log_dir)) == 2
