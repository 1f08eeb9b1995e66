"""
Integration tests for the lsc command line.

Runs main() end to end on a small generated instance and checks the files
each subcommand writes and the exit codes it reports.
"""

import json

import pytest

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from lsc.config import CONFIG
from lsc.l1_solvers import SolverConfig
from lsc.logger import get_recent_runs
from lsc.main import CERTIFICATE_HEADER, VERIFY_CHECKS, build_parser, cmd_sparse_table, main, sa_config, solver_config
from lsc.mat_core import read_matrix_csv


MODEL_ARGS = [
    "--n1", "50", "--n2", "40", "--rank", "2", "--rho", "0.01",
    "--k", "4", "--leading", "--seed", "1",
]


def run(*argv):
    return main([*argv, "--no-log"])


@pytest.fixture(scope="module")
def instance_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("instance")
    assert run("generate", *MODEL_ARGS, "--out", str(out)) == 0
    return out


class TestGenerate:
    """Tests for the generate command."""

    def test_writes_instance(self, instance_dir):
        """Test the four matrices and the metadata are written."""
        for name in ("D.csv", "L.csv", "S.csv", "C.csv", "meta.json"):
            assert (instance_dir / name).exists(), f"Missing file: {name}"
        assert read_matrix_csv(instance_dir / "D.csv").shape == (50, 40)
        meta = json.loads((instance_dir / "meta.json").read_text(encoding="utf-8"))
        assert meta["num_outliers_k"] == 4


class TestDecompose:
    """Tests for the decompose command."""

    def test_sa(self, instance_dir, tmp_path):
        """Test the two-stage method finds the leading outliers."""
        assert run("decompose", "sa", "--instance", str(instance_dir), "--out", str(tmp_path)) == 0
        outliers = json.loads((tmp_path / "outliers.json").read_text(encoding="utf-8"))
        assert outliers["outlier_indices"] == [0, 1, 2, 3]
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["method"] == "sa"
        assert report["outliers_exact"] is True
        assert report["log_recovery_error"] < -3

    def test_pcp(self, instance_dir, tmp_path):
        """Test plain PCP writes both parts and no column part."""
        assert run("decompose", "pcp", "--instance", str(instance_dir), "--out", str(tmp_path)) == 0
        assert read_matrix_csv(tmp_path / "L.csv").shape == (50, 40)
        assert (tmp_path / "S.csv").exists()
        assert not (tmp_path / "C.csv").exists()

    def test_pcp_outlier_variant(self, instance_dir, tmp_path):
        """Test the three-block program also writes C.csv."""
        assert run("decompose", "pcp-l12", "--instance", str(instance_dir), "--out", str(tmp_path)) == 0
        assert read_matrix_csv(tmp_path / "C.csv").shape == (50, 40)

    def test_randomized(self, instance_dir, tmp_path):
        """Test the sketched method with explicit sample sizes."""
        code = run("decompose", "randomized", "--instance", str(instance_dir),
                   "--m1", "30", "--m2", "30", "--out", str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert len(report["sampled_columns"]) == 30

    def test_input_flag_with_overrides(self, instance_dir, tmp_path):
        """Test --input with threshold and solver flags writes the certificates."""
        code = run("decompose", "sa", "--input", str(instance_dir), "--mag-threshold", "0.1",
                   "--frac-threshold", "0.4", "--tol", "1e-7", "--max-iters", "3000", "--out", str(tmp_path))
        assert code == 0
        lines = (tmp_path / "certificates.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(CERTIFICATE_HEADER)
        assert len(lines) == 41
        outliers = json.loads((tmp_path / "outliers.json").read_text(encoding="utf-8"))
        assert outliers["outlier_indices"] == [0, 1, 2, 3]

    def test_randomized_writes_basis_and_diagnostics(self, instance_dir, tmp_path):
        """Test the sketched method writes U_hat.csv and its sampling diagnostics."""
        code = run("decompose", "randomized", "--input", str(instance_dir),
                   "--m1", "30", "--m2", "30", "--out", str(tmp_path))
        assert code == 0
        diagnostics = json.loads((tmp_path / "diagnostics.json").read_text(encoding="utf-8"))
        assert diagnostics["m1"] == 30 and diagnostics["m2"] == 30
        assert diagnostics["resamples"] == 0
        assert read_matrix_csv(tmp_path / "U_hat.csv").shape == (50, diagnostics["rank"])

    def test_randomized_needs_sizes(self, instance_dir, tmp_path):
        """Test a missing --m1/--m2 exits with 2."""
        assert run("decompose", "randomized", "--instance", str(instance_dir), "--out", str(tmp_path)) == 2

    def test_missing_instance(self, tmp_path):
        """Test a path that does not exist exits with 2."""
        assert run("decompose", "sa", "--instance", str(tmp_path / "nope.csv"), "--out", str(tmp_path)) == 2

    def test_plain_csv_input(self, instance_dir, tmp_path):
        """Test a bare D.csv is accepted without ground truth."""
        code = run("decompose", "sa", "--instance", str(instance_dir / "D.csv"), "--out", str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert "outliers_exact" not in report


class TestDetect:
    """Tests for the detect command."""

    def test_certificates_file(self, instance_dir, tmp_path):
        """Test one certificate row per column and the flagged set."""
        assert run("detect", "--instance", str(instance_dir), "--out", str(tmp_path)) == 0
        lines = (tmp_path / "certificates.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "column_index,dominant_count,dominant_fraction,is_outlier,converged"
        assert len(lines) == 41
        flagged = [int(line.split(",")[0]) for line in lines[1:] if line.split(",")[3] == "1"]
        assert flagged == [0, 1, 2, 3]
        outliers = json.loads((tmp_path / "outliers.json").read_text(encoding="utf-8"))
        assert abs(outliers["lambda"] - 1 / 50 ** 0.5) < 1e-12

    def test_magnitude_threshold_flag(self, instance_dir, tmp_path):
        """Test a magnitude threshold near one leaves nothing flagged."""
        code = run("detect", "--input", str(instance_dir), "--mag-threshold", "0.99", "--out", str(tmp_path))
        assert code == 0
        outliers = json.loads((tmp_path / "outliers.json").read_text(encoding="utf-8"))
        assert outliers["outlier_indices"] == []

    def test_global_flags_before_subcommand(self, instance_dir, tmp_path):
        """Test --out and --no-log are accepted ahead of the subcommand."""
        code = main(["--no-log", "--out", str(tmp_path), "detect", "--instance", str(instance_dir)])
        assert code == 0
        assert (tmp_path / "certificates.csv").exists()


class TestVerify:
    """Tests for the verify command."""

    def test_column_check(self, instance_dir, tmp_path):
        """Test the column report is written as JSON."""
        assert run("verify", "column", "--instance", str(instance_dir), "--col", "10", "--out", str(tmp_path)) == 0
        payload = json.loads((tmp_path / "column.json").read_text(encoding="utf-8"))
        assert "holds" in payload and "certification" in payload

    def test_nullspace_check(self, instance_dir, tmp_path):
        """Test the nullspace report uses the exact two-dimensional infimum."""
        assert run("verify", "nullspace", "--instance", str(instance_dir), "--col", "10", "--out", str(tmp_path)) == 0
        payload = json.loads((tmp_path / "nullspace.json").read_text(encoding="utf-8"))
        assert payload["infimum_method"] == "exact_lowdim"

    def test_check_aliases(self, instance_dir, tmp_path):
        """Test lemma1 and theorem2 run the column and nullspace checks."""
        assert run("verify", "lemma1", "--input", str(instance_dir), "--col", "10", "--out", str(tmp_path)) == 0
        assert (tmp_path / "column.json").exists()
        assert run("verify", "theorem2", "--input", str(instance_dir), "--col", "10", "--out", str(tmp_path)) == 0
        assert (tmp_path / "nullspace.json").exists()

    def test_outlier_column_rejected(self, instance_dir, tmp_path):
        """Test an outlier column exits with 2."""
        assert run("verify", "column", "--instance", str(instance_dir), "--col", "0", "--out", str(tmp_path)) == 2

    def test_needs_ground_truth(self, instance_dir, tmp_path):
        """Test a bare D.csv has nothing to verify against."""
        code = run("verify", "column", "--instance", str(instance_dir / "D.csv"), "--col", "10", "--out", str(tmp_path))
        assert code == 2


class TestExperiments:
    """Tests for sweep, profile and calibrate."""

    def test_sweep(self, tmp_path):
        """Test a one-cell sweep writes the CSV and its spec."""
        code = run("sweep", "--axis1", "rho", "--values1", "0", "--n1", "30", "--n2", "20",
                   "--rank", "2", "--trials", "1", "--out", str(tmp_path))
        assert code == 0
        lines = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "axis1,axis2,success_rate,mean_metric,trials"
        assert len(lines) == 2

    def test_sketch_rule_alias(self, tmp_path):
        """Test the eq17 rule name runs a sketched sweep."""
        code = run("sweep", "--axis1", "rho", "--values1", "0", "--n1", "30", "--n2", "20", "--rank", "2",
                   "--method", "randomized", "--m1", "10", "--m2", "10", "--rule", "eq17",
                   "--trials", "1", "--out", str(tmp_path))
        assert code == 0
        assert (tmp_path / "sweep.csv").exists()

    def test_bad_rule(self, tmp_path):
        """Test an unknown success rule exits with 2."""
        code = run("sweep", "--axis1", "rho", "--values1", "0", "--n1", "30", "--n2", "20",
                   "--rank", "2", "--rule", "always", "--out", str(tmp_path))
        assert code == 2

    def test_profile_from_instance(self, instance_dir, tmp_path):
        """Test the profile of an outlier column is written in rank order."""
        assert run("profile", "--instance", str(instance_dir), "--col", "0", "--out", str(tmp_path)) == 0
        lines = (tmp_path / "profile.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "rank,value"
        assert len(lines) == 51
        assert float(lines[1].split(",")[1]) == 1.0

    def test_calibrate(self, instance_dir):
        """Test calibration on a generated instance succeeds."""
        assert run("calibrate", "--instance", str(instance_dir)) == 0


class TestParser:
    """Tests for flag wiring."""

    def test_solver_and_threshold_flags(self):
        """Test --tol, --max-iters and both thresholds reach the solver settings."""
        args = build_parser(CONFIG).parse_args([
            "decompose", "sa", "--input", "inst", "--tol", "1e-6", "--max-iters", "50",
            "--mag-threshold", "0.2", "--frac-threshold", "0.5",
        ])
        assert args.instance == "inst"
        cfg = sa_config(args, CONFIG)
        assert cfg.solver.max_iters == 50
        assert cfg.solver.abs_tol == 1e-6
        assert cfg.mag_threshold == 0.2
        assert cfg.outlier_fraction_threshold == 0.5

    def test_defaults_come_from_config(self):
        """Test omitted flags keep the configured solver settings."""
        args = build_parser(CONFIG).parse_args(["detect", "--instance", "inst"])
        assert solver_config(args, CONFIG) == SolverConfig.from_config(CONFIG)

    def test_table_alias(self):
        """Test table1 dispatches to the sparse-table handler."""
        args = build_parser(CONFIG).parse_args(["table1", "--ranks", "2,5"])
        assert args.handler is cmd_sparse_table
        assert args.ranks == [2, 5]

    def test_verify_aliases(self):
        """Test every accepted check name maps to a known check."""
        assert set(VERIFY_CHECKS.values()) == {"column", "nullspace"}
        assert VERIFY_CHECKS["lemma1"] == "column"
        assert VERIFY_CHECKS["theorem2"] == "nullspace"



class TestRunLog:
    """Tests for CLI run logging."""

    def test_run_is_logged(self, instance_dir, tmp_path):
        """Test a run without --no-log appends a record to the configured directory."""
        log_dir = tmp_path / "logs"
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"log_dir": str(log_dir)}), encoding="utf-8")

        code = main(["detect", "--instance", str(instance_dir), "--out", str(tmp_path / "out"),
                     "--config", str(config_path)])
        assert code == 0
        runs = get_recent_runs("detect", log_dir=str(log_dir))
        assert len(runs) == 1
        assert runs[0]["exit_code"] == 0
        assert runs[0]["summary"]["outliers"] == 4

    def test_error_is_logged(self, tmp_path):
        """Test a failing run records its exit code and error type."""
        log_dir = tmp_path / "logs"
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"log_dir": str(log_dir)}), encoding="utf-8")

        code = main(["calibrate", "--instance", str(tmp_path / "missing"), "--config", str(config_path)])
        assert code == 2
        runs = get_recent_runs("calibrate", log_dir=str(log_dir))
        assert runs[0]["summary"]["error"] == "InvalidInputError"
