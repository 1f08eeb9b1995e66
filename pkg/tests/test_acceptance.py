"""
Acceptance-scale tests.

Detection accuracy, the phase-transition region, the contrast with plain PCP,
the sparse-recovery table, the sketched pipeline at two sizes and agreement of
the l1 representation with the oracle wherever the conditions hold.
All of them are slow; deselect with -m "not slow".
"""

from dataclasses import replace

import numpy as np
import pytest

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from lsc.bench import SparseTableParams, SweepSpec, run_sparse_table, run_sweep
from lsc.errors import ResampleNeededError
from lsc.l1_solvers import oracle_solve, sparse_rep_solve
from lsc.mat_core import orth_basis, subspace_recovery_error
from lsc.pcp import pcp_decompose
from lsc.randomized import SketchConfig, randomized_decompose, sketch_success
from lsc.sa import SaConfig, detect_outliers, sa_decompose
from lsc.synth import ModelParams, generate_instance
from lsc.theory import column_conditions, sample_row_model


pytestmark = pytest.mark.slow


def gaussian_outliers(params: ModelParams) -> ModelParams:
    """Outlier norms sqrt(N1 / r) times the RMS inlier norm, the ratio of Gaussian-entry outliers to rank-r inliers."""
    return replace(params, outlier_scale=float(np.sqrt(params.n1 / params.rank_r)))


def sa_log_error(instance) -> float:
    result = sa_decompose(instance.d, SaConfig(), jobs=0)
    return subspace_recovery_error(instance.true_basis(), result.basis())


def pcp_log_error(instance) -> float:
    result = pcp_decompose(instance.d, 1.0 / np.sqrt(instance.d.shape[0]))
    basis = orth_basis(result.low_rank)[:, : instance.params.rank_r]
    return subspace_recovery_error(instance.true_basis(), basis)


def sketch_rate(n: int, seeds=range(10)) -> float:
    wins = 0
    for seed in seeds:
        inst = generate_instance(ModelParams(n1=n, n2=n, rank_r=5, rho=0.02, num_outliers_k=n // 2, seed=seed))
        try:
            res = randomized_decompose(inst.d, SketchConfig(m1=150, m2=50, seed=seed), jobs=0)
        except ResampleNeededError:
            continue
        wins += sketch_success(res, inst.true_basis(), inst.outlier_indices, 5)
    return wins / len(seeds)


class TestDetection:
    """Outlier detection at 100x200."""

    def test_exact_on_nine_of_ten_seeds(self):
        """Test the 20 outliers are found with no false positives on at least 9 of 10 seeds."""
        exact = 0
        for seed in range(10):
            inst = generate_instance(ModelParams(n1=100, n2=200, rank_r=5, rho=0.01, num_outliers_k=20, seed=seed))
            report = detect_outliers(inst.d, SaConfig(), jobs=0)
            exact += report.outlier_indices == inst.outlier_indices
        assert exact >= 9


class TestPhaseTransition:
    """Success region of the two-stage method at 120x120 with 60 outliers."""

    @pytest.fixture(scope="class")
    def sweep(self):
        fixed = ModelParams(n1=120, n2=120, rank_r=2, num_outliers_k=60)
        spec = SweepSpec(axis1="rank_r", values1=[2, 6, 10], axis2="rho", values2=[0.01, 0.04, 0.07],
                         fixed=fixed, trials=10)
        return run_sweep(spec, SaConfig(), jobs=0)

    def test_low_corruption_cells_succeed(self, sweep):
        """Test every cell with rho <= 0.04 succeeds at rate 0.8 or more."""
        low = [c for c in sweep.cells if c.value2 <= 0.04]
        assert len(low) == 6
        assert all(c.success_rate >= 0.8 for c in low)

    def test_rate_non_increasing_in_rho(self, sweep):
        """Test the success rate never rises with rho at fixed rank."""
        for r in (2, 6, 10):
            rates = [c.success_rate for c in sweep.cells if c.value1 == r]
            assert all(a >= b for a, b in zip(rates, rates[1:]))


class TestPcpContrast:
    """Plain PCP against the two-stage method when outliers are present."""

    def test_moderate_outlier_count(self):
        """Test 25 outliers in 150x250 break PCP but not the two-stage method."""
        inst = generate_instance(gaussian_outliers(
            ModelParams(n1=150, n2=250, rank_r=5, rho=0.01, num_outliers_k=25, seed=0)
        ))
        assert sa_log_error(inst) < -3
        assert pcp_log_error(inst) > -1

    def test_half_outliers_with_corruption(self):
        """Test 200 of 400 outlying columns at rho=0.02: PCP fails while detection succeeds on 8 of 10 seeds."""
        contrasts = 0
        for seed in range(10):
            inst = generate_instance(gaussian_outliers(
                ModelParams(n1=100, n2=400, rank_r=5, rho=0.02, num_outliers_k=200, seed=seed)
            ))
            contrasts += pcp_log_error(inst) > -1 and sa_log_error(inst) < -3
        assert contrasts >= 8


class TestSparseTable:
    """Sparse-part recovery of the three-block program at the default size."""

    def test_errors_grow_with_rank(self):
        """Test errors strictly increase over r = 2, 5, 10, 15, exceed 0.2 at r = 10, and controls stay below 0.05."""
        rows = run_sparse_table(SparseTableParams())
        assert [r.r for r in rows] == [2, 5, 10, 15]
        assert all(r.error is None for r in rows)
        errors = [r.sparse_error for r in rows]
        assert all(a < b for a, b in zip(errors, errors[1:]))
        assert rows[2].sparse_error > 0.2
        assert all(r.control_error < 0.05 for r in rows)


class TestSketchedPipeline:
    """Sketched decomposition with m1=150, m2=50."""

    def test_size_independent_success(self):
        """Test success on 8 of 10 seeds at 500x500 and a 250x250 rate within 0.2 of it."""
        large = sketch_rate(500)
        small = sketch_rate(250)
        assert large >= 0.8
        assert abs(small - large) <= 0.2


class TestOracleAgreement:
    """The l1 representation against the oracle program."""

    def test_holding_instances_match_oracle(self):
        """Test every instance meeting the column conditions is solved exactly by l1."""
        rng = np.random.default_rng(2024)
        holding = 0
        for seed in range(50):
            n1 = int(rng.choice([200, 300, 400]))
            r_b = int(rng.integers(2, 4))
            n = int(rng.integers(r_b + 2, 9))
            rho = float(rng.choice([0.002, 0.005]))
            B, S = sample_row_model(n1, n, r_b, rho=rho, seed=seed)
            if not column_conditions(B, S, 0).holds:
                continue
            holding += 1
            z_oracle = oracle_solve(B, S, np.eye(n)[0]).solution
            z_l1 = sparse_rep_solve(B + S, 0, 1e-6).solution
            assert np.max(np.abs(z_l1 - z_oracle)) <= 1e-5 * max(1.0, np.max(np.abs(z_oracle)))
        assert holding > 0
