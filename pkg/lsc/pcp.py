"""
Convex decompositions by the augmented Lagrangian method.

pcp_decompose solves principal component pursuit

    minimize ||L||_* + lam ||S||_1   subject to  L + S = M

and pcp_outlier_decompose adds a column-sparse part

    minimize ||L||_* + lam ||S||_1 + gamma ||C||_{1,2}   subject to  L + S + C = D.

Both alternate singular value thresholding, soft thresholding and (for C)
column shrinkage, with residual balancing on the penalty mu.

median_subspace is the column-robust baseline: it resists whole-column
outliers but not element-wise corruption.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import InvalidInputError
from .l1_solvers import SolverConfig
from .mat_core import (
    REPORT_TOL,
    DenseMatrix,
    as_matrix,
    column_shrink,
    matrix_norm,
    numerical_rank,
    shrink,
    sv_threshold,
)


log = logging.getLogger(__name__)

Param = Union[float, str]

BALANCE_RATIO = 10.0
MU_FACTOR = 2.0


@dataclass
class PcpResult:
    """Recovered parts with solver diagnostics."""
    low_rank: DenseMatrix
    sparse: DenseMatrix
    column_part: DenseMatrix
    iterations: int
    converged: bool
    constraint_residual: float
    lam: float
    gamma: Optional[float] = None

    def rank(self) -> int:
        return reported_rank(self.low_rank)

    def sparse_nnz(self) -> int:
        return reported_nnz(self.sparse)


def reported_rank(a: ArrayLike) -> int:
    """Rank counting singular values above 1e-6 of the largest."""
    A = np.asarray(a, dtype=np.float64)
    if not np.any(A):
        return 0
    return numerical_rank(A, tol=REPORT_TOL)


def reported_nnz(a: ArrayLike) -> int:
    """Entries above 1e-6 of the largest magnitude."""
    A = np.abs(np.asarray(a, dtype=np.float64))
    peak = A.max() if A.size else 0.0
    if peak == 0:
        return 0
    return int(np.count_nonzero(A > REPORT_TOL * peak))


def pcp_objective(
    low_rank: ArrayLike,
    sparse: ArrayLike,
    lam: float,
    column_part: Optional[ArrayLike] = None,
    gamma: float = 0.0,
) -> float:
    """||L||_* + lam ||S||_1 (+ gamma ||C||_{1,2})."""
    value = matrix_norm(low_rank, "nuclear") + lam * matrix_norm(sparse, "l1")
    if column_part is not None and gamma:
        value += gamma * matrix_norm(column_part, "l12")
    return value


def default_lambda(shape) -> float:
    """1 / sqrt(max dimension)."""
    return 1.0 / np.sqrt(max(shape))


def default_gamma(shape) -> float:
    """3 / (sqrt(N1) log N2)."""
    n1, n2 = shape
    if n2 < 2:
        raise InvalidInputError("automatic gamma needs at least two columns")
    return 3.0 / (np.sqrt(n1) * np.log(n2))


def _resolve(value: Param, fallback: float, name: str) -> float:
    if isinstance(value, str):
        if value != "auto":
            raise InvalidInputError(f"{name} must be a positive number or 'auto', got {value!r}")
        return float(fallback)
    if value <= 0:
        raise InvalidInputError(f"{name} must be positive, got {value}")
    return float(value)


def _alm(D: DenseMatrix, lam: float, gamma: Optional[float], cfg: SolverConfig) -> PcpResult:
    """Shared Gauss-Seidel ALM loop; gamma=None keeps the column part at zero."""
    cfg.validate()
    n1, n2 = D.shape
    norm_d = np.linalg.norm(D, "fro")
    zeros = np.zeros_like(D)
    if norm_d == 0:
        return PcpResult(zeros, zeros.copy(), zeros.copy(), 0, True, 0.0, lam, gamma)

    mu = n1 * n2 / (4.0 * np.abs(D).sum())
    L = zeros.copy()
    S = zeros.copy()
    C = zeros.copy()
    Y = zeros.copy()
    primal = np.inf
    converged = False

    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        L = sv_threshold(D - S - C + Y / mu, 1.0 / mu)
        S_old, C_old = S, C
        S = shrink(D - L - C + Y / mu, lam / mu)
        if gamma is not None:
            C = column_shrink(D - L - S + Y / mu, gamma / mu)

        R = D - L - S - C
        Y = Y + mu * R
        primal = np.linalg.norm(R, "fro") / norm_d
        dual = mu * np.linalg.norm((S - S_old) + (C - C_old), "fro") / norm_d
        if primal < cfg.abs_tol and dual < cfg.rel_tol:
            converged = True
            break

        if primal > BALANCE_RATIO * dual:
            mu *= MU_FACTOR
        elif dual > BALANCE_RATIO * primal:
            mu /= MU_FACTOR

    if not converged:
        log.warning(
            "Decomposition stopped at max_iters=%d with constraint residual %.2e",
            cfg.max_iters, primal,
        )
    return PcpResult(
        low_rank=L,
        sparse=S,
        column_part=C,
        iterations=iteration,
        converged=converged,
        constraint_residual=float(primal),
        lam=lam,
        gamma=gamma,
    )


def pcp_decompose(m: ArrayLike, lam: Param = "auto", cfg: Optional[SolverConfig] = None) -> PcpResult:
    """
    Principal component pursuit.

    lam='auto' uses 1/sqrt(max dimension). Stops when the relative
    constraint residual drops below cfg.abs_tol and the relative dual
    change below cfg.rel_tol; non-convergence is flagged, not raised.
    """
    cfg = cfg or SolverConfig.from_config()
    M = as_matrix(m, "M")
    lam_value = _resolve(lam, default_lambda(M.shape), "lambda")
    return _alm(M, lam_value, None, cfg)


def pcp_outlier_decompose(
    d: ArrayLike,
    lam: Param = "auto",
    gamma: Param = "auto",
    cfg: Optional[SolverConfig] = None,
) -> PcpResult:
    """
    Low-rank + sparse + column-sparse decomposition.

    lam='auto' uses 1/sqrt(N1); gamma='auto' uses 3/(sqrt(N1) log N2).
    """
    cfg = cfg or SolverConfig.from_config()
    D = as_matrix(d, "D")
    lam_value = _resolve(lam, 1.0 / np.sqrt(D.shape[0]), "lambda")
    gamma_value = _resolve(gamma, default_gamma(D.shape) if gamma == "auto" else 0.0, "gamma")
    return _alm(D, lam_value, gamma_value, cfg)


@dataclass
class MedianSubspaceResult:
    """Basis found by the median-subspace iteration."""
    basis: DenseMatrix
    iterations: int
    converged: bool


def median_subspace(
    d: ArrayLike,
    rank: int,
    max_iters: int = 100,
    tol: float = 1e-10,
    delta: float = 1e-10,
) -> MedianSubspaceResult:
    """
    Column-robust subspace estimate.

    Iteratively reweighted PCA with column weights 1/max(dist, delta), where
    dist is the distance of each column to the current subspace. Starts from
    the top-rank left singular vectors.
    """
    D = as_matrix(d, "D")
    if not 1 <= rank <= min(D.shape):
        raise InvalidInputError(f"rank must lie in [1, {min(D.shape)}], got {rank}")

    U = np.linalg.svd(D, full_matrices=False)[0][:, :rank]
    converged = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        dist = np.linalg.norm(D - U @ (U.T @ D), axis=0)
        weights = 1.0 / np.maximum(dist, delta)
        U_new = np.linalg.svd(D * np.sqrt(weights), full_matrices=False)[0][:, :rank]
        change = np.linalg.norm(U_new @ U_new.T - U @ U.T, "fro")
        U = U_new
        if change < tol:
            converged = True
            break

    return MedianSubspaceResult(basis=U, iterations=iteration, converged=converged)
