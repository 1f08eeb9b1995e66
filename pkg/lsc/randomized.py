"""
Sketched decomposition.

1. Sample m1 columns, detect outliers among them and run PCP on the rest;
   the low-rank part gives an orthonormal basis U_hat of the column space.
2. Sample m2 rows and fit every column of D onto U_hat restricted to those
   rows by least absolute deviations, giving Q_hat.
3. Columns whose sketched residual D[rows] - U_hat[rows] Q_hat is not
   sparse are outliers.
4. L_hat = U_hat Q_hat and S_hat = D - L_hat, both zeroed on the outliers.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike

from .config import CONFIG
from .errors import InvalidInputError, ResampleNeededError
from .l1_solvers import SolverConfig, lad_solve
from .mat_core import REPORT_TOL, DenseMatrix, as_matrix, orth_basis, projection_residual
from .pcp import PcpResult, pcp_decompose
from .sa import (
    DetectionReport,
    SaConfig,
    SparsityCertificate,
    clean_residual,
    detect_outliers,
    sparsity_certificate,
)
from .synth import mix64
from .workers import parallel_map


log = logging.getLogger(__name__)

COLUMN_STREAM = 0
ROW_STREAM = 1
SKETCH_TOL = 1e-3


@dataclass
class SketchConfig:
    """Sketch sizes, seed and detection settings."""
    m1: int
    m2: int
    seed: int = 0
    sa: SaConfig = field(default_factory=SaConfig)
    sparse_col_threshold: float = 0.4
    rank_hint: Optional[int] = None

    def validate(self, shape: Tuple[int, int]) -> None:
        n1, n2 = shape
        if not 1 <= self.m1 <= n2:
            raise InvalidInputError(f"m1 must lie in [1, {n2}], got {self.m1}")
        if not 1 <= self.m2 <= n1:
            raise InvalidInputError(f"m2 must lie in [1, {n1}], got {self.m2}")
        if not 0.0 < self.sparse_col_threshold < 1.0:
            raise InvalidInputError("sparse_col_threshold must lie in (0, 1)")
        if self.rank_hint is not None and self.rank_hint < 1:
            raise InvalidInputError(f"rank_hint must be positive, got {self.rank_hint}")
        self.sa.validate()

    @classmethod
    def from_config(cls, m1: int, m2: int, seed: Optional[int] = None,
                    config: Optional[Dict[str, Any]] = None) -> SketchConfig:
        """Build from the merged configuration dict."""
        config = CONFIG if config is None else config
        return cls(
            m1=m1,
            m2=m2,
            seed=int(config["seed"] if seed is None else seed),
            sa=SaConfig.from_config(config),
            sparse_col_threshold=float(config["sparse_col_threshold"]),
        )

    def stream(self, index: int) -> np.random.Generator:
        return np.random.default_rng(mix64(self.seed, index))


@dataclass
class ColumnSpaceReport:
    """Diagnostics of the column-space stage."""
    sampled_columns: np.ndarray
    detection: DetectionReport
    sampled_outliers: Tuple[int, ...]
    pcp: PcpResult
    rank: int


@dataclass
class RandomizedResult:
    """Sketched decomposition with its diagnostics."""
    basis_u_hat: DenseMatrix
    q_hat: DenseMatrix
    outlier_indices: Tuple[int, ...]
    low_rank: DenseMatrix
    sparse: DenseMatrix
    column_space: ColumnSpaceReport
    sampled_rows: np.ndarray
    residual_certificates: Tuple[SparsityCertificate, ...]
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return int(self.basis_u_hat.shape[1])

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "rank": self.rank,
            "sampled_columns": [int(j) for j in self.column_space.sampled_columns],
            "sampled_rows": [int(i) for i in self.sampled_rows],
            "sampled_outliers": list(self.column_space.sampled_outliers),
            "pcp_iterations": self.column_space.pcp.iterations,
            "pcp_converged": self.column_space.pcp.converged,
            "timings": {k: round(v, 4) for k, v in self.timings.items()},
        }


def sample_columns(d: ArrayLike, m1: int, rng: np.random.Generator) -> Tuple[DenseMatrix, np.ndarray]:
    """Uniform column sample without replacement; indices returned sorted."""
    D = as_matrix(d, "D")
    if not 1 <= m1 <= D.shape[1]:
        raise InvalidInputError(f"m1 must lie in [1, {D.shape[1]}], got {m1}")
    idx = np.sort(rng.choice(D.shape[1], size=m1, replace=False))
    return D[:, idx], idx


def sample_rows(d: ArrayLike, m2: int, rng: np.random.Generator) -> Tuple[DenseMatrix, np.ndarray]:
    """Uniform row sample without replacement; indices returned sorted."""
    D = as_matrix(d, "D")
    if not 1 <= m2 <= D.shape[0]:
        raise InvalidInputError(f"m2 must lie in [1, {D.shape[0]}], got {m2}")
    idx = np.sort(rng.choice(D.shape[0], size=m2, replace=False))
    return D[idx, :], idx


def learn_column_space(
    d: ArrayLike, cfg: SketchConfig, jobs: Optional[int] = 1
) -> Tuple[DenseMatrix, ColumnSpaceReport]:
    """
    Column-space stage on a sampled sub-matrix.

    Raises ResampleNeededError (carrying the seed) when every sampled
    column is flagged.
    """
    D = as_matrix(d, "D")
    cfg.validate(D.shape)
    if cfg.m1 < 2:
        raise InvalidInputError("column-space learning needs m1 >= 2")

    D_phi1, sampled = sample_columns(D, cfg.m1, cfg.stream(COLUMN_STREAM))
    report = detect_outliers(D_phi1, cfg.sa, jobs)
    inliers = list(report.inlier_indices)
    if not inliers:
        raise ResampleNeededError(
            f"all {cfg.m1} sampled columns were flagged as outliers", seed=cfg.seed
        )

    n1 = D.shape[0]
    result = pcp_decompose(D_phi1[:, inliers], 1.0 / np.sqrt(n1), cfg.sa.solver)
    if cfg.rank_hint is not None:
        U, _, _ = np.linalg.svd(result.low_rank, full_matrices=False)
        U_hat = U[:, : min(cfg.rank_hint, U.shape[1])]
    else:
        U_hat = orth_basis(result.low_rank, tol=REPORT_TOL)

    column_report = ColumnSpaceReport(
        sampled_columns=sampled,
        detection=report,
        sampled_outliers=tuple(int(sampled[j]) for j in report.outlier_indices),
        pcp=result,
        rank=int(U_hat.shape[1]),
    )
    log.info("Column space: %d sampled, %d flagged, rank %d",
             cfg.m1, len(report.outlier_indices), column_report.rank)
    return U_hat, column_report


def _fit_column(task) -> np.ndarray:
    X, y, solver = task
    return lad_solve(X, y, solver).solution


def learn_representation(
    d: ArrayLike, u_hat: ArrayLike, cfg: SketchConfig, jobs: Optional[int] = 1
) -> Tuple[DenseMatrix, DenseMatrix, np.ndarray]:
    """
    Fit every column onto U_hat from m2 sampled rows.

    Returns (Q_hat, H, sampled_rows) where H = D[rows] - U_hat[rows] Q_hat
    is the sketched residual with rounding noise zeroed.
    """
    D = as_matrix(d, "D")
    U_hat = np.asarray(u_hat, dtype=np.float64)
    cfg.validate(D.shape)
    r_hat = U_hat.shape[1]
    if r_hat == 0:
        raise InvalidInputError("U_hat has no columns")
    if cfg.m2 < r_hat:
        raise InvalidInputError(f"m2 = {cfg.m2} is below the basis rank {r_hat}")

    D_phi2, rows = sample_rows(D, cfg.m2, cfg.stream(ROW_STREAM))
    X = U_hat[rows, :]
    tasks = [(X, D_phi2[:, i], cfg.sa.solver) for i in range(D.shape[1])]
    Q_hat = np.column_stack(parallel_map(_fit_column, tasks, jobs))
    H = clean_residual(D_phi2 - X @ Q_hat, float(np.max(np.abs(D))))
    return Q_hat, H, rows


def randomized_decompose(d: ArrayLike, cfg: SketchConfig, jobs: Optional[int] = 1) -> RandomizedResult:
    """Full sketched pipeline; outlier columns are zero in both returned parts."""
    D = as_matrix(d, "D")
    cfg.validate(D.shape)

    t0 = time.perf_counter()
    U_hat, column_report = learn_column_space(D, cfg, jobs)
    t1 = time.perf_counter()
    Q_hat, H, rows = learn_representation(D, U_hat, cfg, jobs)
    t2 = time.perf_counter()

    certificates = tuple(
        sparsity_certificate(H[:, i], i, cfg.sa, fraction_threshold=cfg.sparse_col_threshold)
        for i in range(D.shape[1])
    )
    outliers = tuple(c.column_index for c in certificates if c.is_outlier)

    L_hat = U_hat @ Q_hat
    S_hat = D - L_hat
    L_hat[:, list(outliers)] = 0.0
    S_hat[:, list(outliers)] = 0.0
    t3 = time.perf_counter()

    return RandomizedResult(
        basis_u_hat=U_hat,
        q_hat=Q_hat,
        outlier_indices=outliers,
        low_rank=L_hat,
        sparse=S_hat,
        column_space=column_report,
        sampled_rows=rows,
        residual_certificates=certificates,
        timings={"column_space": t1 - t0, "representation": t2 - t1, "assemble": t3 - t2},
    )


def sketch_success(
    result: RandomizedResult,
    u_true: ArrayLike,
    outlier_indices,
    rank: int,
    tol: float = SKETCH_TOL,
) -> bool:
    """Trial success: exact rank, exact outlier set, and ||(I - U U^T) U_hat||_F <= tol."""
    if result.rank != rank:
        return False
    if set(result.outlier_indices) != set(int(j) for j in outlier_indices):
        return False
    return projection_residual(u_true, result.basis_u_hat) <= tol
