"""
Unit tests for theory.py.

Support sets, permeance bounds and infima, and both condition checkers,
including the end-to-end check that a certified column is recovered by l1.
"""

import numpy as np
import pytest

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from lsc.errors import InfeasibleError, InvalidInputError, UnsupportedRegimeError
from lsc.l1_solvers import nullspace_solve, oracle_solve, sparse_rep_solve
from lsc.theory import (
    CERTIFIED,
    EXACT_LOWDIM,
    NOT_CERTIFIED,
    PROBABILISTIC_BOUND,
    SAMPLED,
    ConditionReport,
    alpha_vector,
    column_conditions,
    empirical_permeance,
    nullspace_conditions,
    permeance_infimum,
    permeance_lower_bound,
    row_norm_tail,
    row_space_bases,
    sample_row_model,
    support_sets,
    xi_bound,
)


def grid_infimum(G, weights, points=200000):
    theta = np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)
    dirs = np.vstack([np.cos(theta), np.sin(theta)])
    return float(np.min(weights @ np.abs(G @ dirs)))


class TestBounds:
    """Tests for the closed-form bounds."""

    def test_xi_reference_value(self):
        """Test (100, 0, 4, 0) gives sqrt(2/pi) * 50 - 20."""
        xi = xi_bound(100, 0, 4, 0.0)
        assert abs(xi - (np.sqrt(2 / np.pi) * 50 - 20)) < 1e-12
        assert abs(xi - 19.8947) < 1e-3

    def test_xi_without_corrupted_rows(self):
        """Test n_s = 0 reduces to the permeance bound over all rows."""
        for n1, r_b, t1 in ((400, 3, 1.5), (50, 2, 0.0), (1000, 8, 3.0)):
            assert xi_bound(n1, 0, r_b, t1) == permeance_lower_bound(n1, r_b, t1)

    def test_xi_can_be_negative(self):
        """Test few clean rows give a vacuous negative bound."""
        assert xi_bound(10, 2, 4, 2.0) < 0

    def test_xi_n_s_range(self):
        """Test n_s above N1 is rejected."""
        with pytest.raises(InvalidInputError):
            xi_bound(10, 11, 3, 1.0)

    def test_rank_one_refused(self):
        """Test r = 1 raises UnsupportedRegimeError."""
        with pytest.raises(UnsupportedRegimeError):
            permeance_lower_bound(100, 1, 1.0)

    def test_row_norm_tail(self):
        """Test the tail formula at r=2, t=2 and its domain."""
        assert abs(row_norm_tail(2, 2.0) - np.exp(-(4.0 - np.log(4.0) - 1.0))) < 1e-15
        assert row_norm_tail(6, 2.0) < row_norm_tail(2, 2.0)
        with pytest.raises(InvalidInputError):
            row_norm_tail(3, 1.0)


class TestSupportSets:
    """Tests for support_sets and alpha_vector."""

    def test_classification(self):
        """Test zero rows, orthogonal rows and the counts."""
        S = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, -1.0], [0.0, 2.0]])
        sets = support_sets(S, [1.0, 1.0])
        assert sets.zero_row_set == (0,)
        assert sets.z_orthogonal_set == (0, 2)
        assert sets.n_s == 3
        assert sets.n_s_prime == 1

    def test_zero_rows_always_orthogonal(self):
        """Test a zero S puts every row in both sets."""
        sets = support_sets(np.zeros((3, 2)), [1.0, 0.0])
        assert sets.zero_row_set == sets.z_orthogonal_set == (0, 1, 2)
        assert sets.n_s == 0

    def test_alpha(self):
        """Test alpha sums signed rows of A and skips orthogonal rows."""
        A = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        S = np.array([[1.0, 0.0], [0.0, -1.0], [1.0, -1.0]])
        assert np.allclose(alpha_vector(A, S, [1.0, 1.0]), [-2.0, -2.0])

    def test_alpha_odd_in_z(self):
        """Test negating z_star negates alpha."""
        rng = np.random.default_rng(3)
        A = rng.standard_normal((20, 4))
        S = rng.standard_normal((20, 4)) * (rng.random((20, 4)) < 0.3)
        z = rng.standard_normal(4)
        assert np.allclose(alpha_vector(A, S, -z), -alpha_vector(A, S, z))

    def test_alpha_zero_when_s_zero(self):
        """Test alpha vanishes for S = 0."""
        assert not np.any(alpha_vector(np.ones((4, 2)), np.zeros((4, 2)), [1.0, 0.5]))


class TestRowSpaceBases:
    """Tests for row_space_bases."""

    def test_complementary(self):
        """Test R_b and P_b are orthonormal complements with B P_b = 0."""
        rng = np.random.default_rng(0)
        B = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
        R, P = row_space_bases(B)
        assert R.shape == (4, 2) and P.shape == (4, 2)
        Q = np.hstack([R, P])
        assert np.max(np.abs(Q.T @ Q - np.eye(4))) < 1e-10
        assert np.max(np.abs(B @ P)) < 1e-10


class TestPermeanceInfimum:
    """Tests for permeance_infimum."""

    def test_dim_one(self):
        """Test the one-dimensional infimum is sum w |g|."""
        value, method = permeance_infimum([[2.0], [-3.0]], [1.0, 2.0])
        assert value == 8.0
        assert method == EXACT_LOWDIM

    def test_dim_two_matches_grid(self):
        """Test the circle infimum against a dense angle grid."""
        G = np.random.default_rng(1).standard_normal((7, 2))
        w = np.ones(7)
        value, method = permeance_infimum(G, w)
        grid = grid_infimum(G, w)
        assert method == EXACT_LOWDIM
        assert value <= grid + 1e-12
        assert value >= grid - 1e-3

    def test_dim_two_with_negative_weights(self):
        """Test arc interiors are searched when weights are negative."""
        G = np.random.default_rng(2).standard_normal((9, 2))
        w = np.array([1.0] * 6 + [-2.0] * 3)
        value, _ = permeance_infimum(G, w)
        grid = grid_infimum(G, w)
        assert value <= grid + 1e-12
        assert value >= grid - 1e-3

    def test_sampled_is_reproducible(self):
        """Test the sampled estimate depends only on the seed, not on jobs."""
        G = np.random.default_rng(3).standard_normal((30, 3))
        a, method = permeance_infimum(G, None, num_dirs=4000, seed=5, jobs=1)
        b, _ = permeance_infimum(G, None, num_dirs=4000, seed=5, jobs=2)
        assert method == SAMPLED
        assert a == b
        assert 0.0 <= a <= float(np.abs(G[:, 0]).sum())

    def test_empty_rows(self):
        """Test zero rows contribute nothing."""
        value, _ = permeance_infimum(np.zeros((3, 2)))
        assert value == 0.0

    def test_bound_below_empirical(self):
        """Test the probabilistic bound sits below the measured statistic."""
        value, _ = empirical_permeance(200, 3, num_dirs=2000, seed=0)
        assert value > permeance_lower_bound(200, 3, 2.0)


class TestConditionReport:
    """Tests for ConditionReport serialization."""

    def test_non_finite_becomes_string(self):
        """Test an infinite coherence ratio is written as text."""
        report = ConditionReport(
            xi=None, lhs_first=1.0, rhs_first=0.5, lhs_second=float("inf"), rhs_second=0.5,
            coherence_ratio=float("inf"), alpha_norm=0.0, holds=True,
            infimum_method=EXACT_LOWDIM, certification=CERTIFIED, n_s=0, n_s_prime=0, kappa=0.0,
        )
        data = report.to_dict()
        assert data["coherence_ratio"] == "inf"
        assert data["lhs_first"] == 1.0
        assert data["xi"] is None


class TestNullspaceConditions:
    """Tests for nullspace_conditions."""

    def test_holds_and_l1_matches_oracle(self):
        """Test a certified instance is solved exactly by the l1 program."""
        B, S = sample_row_model(200, 4, 2, rho=0.02, seed=3)
        v = np.eye(4)[0]
        report = nullspace_conditions(B, S, v)
        assert report.infimum_method == EXACT_LOWDIM
        assert report.holds
        assert report.certification == CERTIFIED
        z_oracle = oracle_solve(B, S, v).solution
        z_l1 = nullspace_solve(B + S, v).solution
        assert np.max(np.abs(z_l1 - z_oracle)) <= 1e-5 * max(1.0, np.max(np.abs(z_oracle)))

    def test_zero_b(self):
        """Test B = 0 has no row space to measure."""
        with pytest.raises(UnsupportedRegimeError):
            nullspace_conditions(np.zeros((4, 3)), np.zeros((4, 3)), [1.0, 0.0, 0.0])

    def test_v_in_row_space(self):
        """Test v orthogonal to null(B) is infeasible."""
        B = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        with pytest.raises(InfeasibleError):
            nullspace_conditions(B, np.zeros_like(B), [1.0, 0.0, 0.0])

    def test_infeasible_z_star(self):
        """Test a z_star violating B z = 0 is rejected."""
        B, S = sample_row_model(50, 4, 2, rho=0.0, seed=4)
        with pytest.raises(InvalidInputError):
            nullspace_conditions(B, S, np.eye(4)[0], z_star=[1.0, 1.0, 1.0, 1.0])

    def test_sampled_regime_label(self):
        """Test a three-dimensional row space is estimated by sampling."""
        B, S = sample_row_model(100, 5, 3, rho=0.0, seed=5)
        report = nullspace_conditions(B, S, np.eye(5)[1], num_dirs=2000)
        assert report.infimum_method == SAMPLED
        if report.holds:
            assert report.certification == "certified up to sampling"


class TestColumnConditions:
    """Tests for column_conditions."""

    def test_clean_rows_hold(self):
        """Test S = 0 reduces the right-hand sides to zero."""
        B, S = sample_row_model(400, 8, 3, rho=0.0, seed=6)
        report = column_conditions(B, S, 2)
        assert report.n_s == 0 and report.n_s_prime == 0
        assert report.rhs_first == 0.0 and report.rhs_second == 0.0
        assert abs(report.xi - xi_bound(400, 0, 3, 2.0)) < 1e-12
        assert report.holds
        assert report.infimum_method == PROBABILISTIC_BOUND
        assert report.certification == CERTIFIED
        expected = 1.0 - np.exp(-2.0) - row_norm_tail(3, 2.0)
        assert abs(report.probability_bound - expected) < 1e-12

    def test_too_few_rows_not_certified(self):
        """Test a negative xi fails the first inequality."""
        B, S = sample_row_model(12, 4, 2, rho=0.1, seed=7)
        report = column_conditions(B, S, 0)
        assert not report.holds
        assert report.certification == NOT_CERTIFIED

    def test_rank_one_refused(self):
        """Test rank(B) = 1 raises UnsupportedRegimeError."""
        B = np.outer(np.arange(1.0, 6.0), [1.0, 2.0, 3.0])
        with pytest.raises(UnsupportedRegimeError):
            column_conditions(B, np.zeros_like(B), 0)

    def test_t2_domain(self):
        """Test t2 <= 1 is rejected."""
        B, S = sample_row_model(40, 4, 2, rho=0.0, seed=8)
        with pytest.raises(InvalidInputError):
            column_conditions(B, S, 0, t2=1.0)


class TestSampleRowModel:
    """Tests for sample_row_model."""

    def test_unit_rows_and_rank(self):
        """Test rows of B are unit vectors spanning r_b dimensions."""
        B, S = sample_row_model(30, 6, 3, rho=0.2, kappa=0.5, seed=9)
        assert np.allclose(np.linalg.norm(B, axis=1), 1.0)
        assert np.linalg.matrix_rank(B) == 3
        assert np.max(np.abs(S)) <= 0.5

