"""
Sparse-approximation outlier detection and decomposition.

Each column is represented by the others through sparse_rep_solve. An
inlier's residual D z is sparse (it only carries the sparse corruption); an
outlier cannot be cancelled and leaves a dense residual. The residual is
normalized by its largest entry and a column is flagged when more than
frac_threshold of its entries exceed mag_threshold. The inliers are then
split into low-rank and sparse parts by principal component pursuit.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike

from .config import CONFIG
from .errors import DegenerateResultError, InvalidInputError
from .l1_solvers import SolverConfig, sparse_rep_solve
from .mat_core import DenseMatrix, as_matrix, as_vector, orth_basis
from .pcp import PcpResult, pcp_decompose
from .synth import Instance
from .workers import parallel_map


log = logging.getLogger(__name__)

LAMBDA_GRID: Tuple[float, ...] = (0.05, 0.1, 0.2, 0.5, 1.0)

# Residual entries at or below this fraction of max|D| count as exact zeros
RESIDUAL_ZERO_TOL = 1e-8


@dataclass
class SaConfig:
    """Detection thresholds and solver settings."""
    lam: Optional[float] = None          # None = lambda_scale / sqrt(N1)
    mag_threshold: float = 0.1
    outlier_fraction_threshold: float = 0.4
    solver: SolverConfig = field(default_factory=SolverConfig)
    lambda_scale: float = 1.0

    def validate(self) -> None:
        for name in ("mag_threshold", "outlier_fraction_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InvalidInputError(f"{name} must lie in (0, 1), got {value}")
        if self.lam is not None and self.lam < 0:
            raise InvalidInputError(f"lambda must be non-negative, got {self.lam}")
        if self.lambda_scale <= 0:
            raise InvalidInputError(f"lambda_scale must be positive, got {self.lambda_scale}")
        self.solver.validate()

    def resolve_lambda(self, n1: int) -> float:
        if self.lam is not None:
            return float(self.lam)
        return self.lambda_scale / np.sqrt(n1)

    @classmethod
    def from_config(cls, config: Optional[Dict[str, Any]] = None) -> SaConfig:
        """Build from the merged configuration dict."""
        config = CONFIG if config is None else config
        return cls(
            lam=config.get("lambda"),
            mag_threshold=float(config["mag_threshold"]),
            outlier_fraction_threshold=float(config["frac_threshold"]),
            solver=SolverConfig.from_config(config),
            lambda_scale=float(config["lambda_scale"]),
        )


@dataclass
class SparsityCertificate:
    """Normalized residual of one column and its classification."""
    column_index: int
    normalized_residual: np.ndarray
    dominant_count: int
    dominant_fraction: float
    is_outlier: bool
    converged: bool = True


@dataclass
class DetectionReport:
    """All certificates, ordered by column index, and the flagged set."""
    certificates: List[SparsityCertificate]
    outlier_indices: Tuple[int, ...]
    lam: float

    @property
    def dominant_counts(self) -> np.ndarray:
        return np.array([c.dominant_count for c in self.certificates], dtype=int)

    @property
    def fractions(self) -> np.ndarray:
        return np.array([c.dominant_fraction for c in self.certificates])

    def fractions_over(self, denominator: int) -> np.ndarray:
        """Dominant counts divided by another length (e.g. N2)."""
        return self.dominant_counts / float(denominator)

    @property
    def non_converged(self) -> Tuple[int, ...]:
        return tuple(c.column_index for c in self.certificates if not c.converged)

    @property
    def inlier_indices(self) -> Tuple[int, ...]:
        flagged = set(self.outlier_indices)
        return tuple(c.column_index for c in self.certificates if c.column_index not in flagged)


@dataclass
class Decomposition:
    """Recovered low-rank and sparse parts with the detected outliers."""
    low_rank: DenseMatrix
    sparse: DenseMatrix
    outlier_indices: Tuple[int, ...]
    detection: DetectionReport
    pcp: PcpResult
    timings: Dict[str, float] = field(default_factory=dict)

    def basis(self, tol: float = 1e-6) -> DenseMatrix:
        """Orthonormal basis of the recovered column space."""
        return orth_basis(self.low_rank, tol=tol)


def sparsity_certificate(
    residual: ArrayLike,
    col_index: int,
    cfg: Optional[SaConfig] = None,
    fraction_threshold: Optional[float] = None,
) -> SparsityCertificate:
    """
    Classify a column from its representation residual.

    fraction_threshold overrides cfg.outlier_fraction_threshold (the
    sketched pipeline uses its own).
    """
    cfg = cfg or SaConfig()
    r = np.abs(as_vector(residual, "residual"))
    threshold = cfg.outlier_fraction_threshold if fraction_threshold is None else fraction_threshold
    peak = float(r.max()) if r.size else 0.0
    if peak == 0.0:
        return SparsityCertificate(col_index, np.zeros_like(r), 0, 0.0, False)

    h = r / peak
    count = int(np.count_nonzero(h > cfg.mag_threshold))
    fraction = count / r.size
    return SparsityCertificate(
        column_index=col_index,
        normalized_residual=h,
        dominant_count=count,
        dominant_fraction=fraction,
        is_outlier=fraction > threshold,
    )


def clean_residual(residual: np.ndarray, scale: float) -> np.ndarray:
    """Zero the entries of a residual that are rounding noise relative to scale."""
    out = np.array(residual, dtype=np.float64)
    out[np.abs(out) <= RESIDUAL_ZERO_TOL * scale] = 0.0
    return out


def column_residual(
    d: ArrayLike, col_index: int, lam: float, cfg: Optional[SolverConfig] = None
) -> Tuple[np.ndarray, bool]:
    """Residual D z* of the sparse representation of one column, with the convergence flag."""
    D = as_matrix(d, "D")
    outcome = sparse_rep_solve(D, col_index, lam, cfg)
    residual = clean_residual(D @ outcome.solution, float(np.max(np.abs(D))))
    return residual, outcome.converged


def _certify_column(task) -> SparsityCertificate:
    D, col_index, lam, cfg = task
    residual, converged = column_residual(D, col_index, lam, cfg.solver)
    cert = sparsity_certificate(residual, col_index, cfg)
    return replace(cert, converged=converged)


def detect_outliers(d: ArrayLike, cfg: Optional[SaConfig] = None, jobs: Optional[int] = 1) -> DetectionReport:
    """
    Certify every column and collect the flagged ones.

    Columns are solved as a parallel map; certificates come back ordered by
    column index. Non-converged columns are still classified from the last
    iterate and listed in the report.
    """
    cfg = cfg or SaConfig.from_config()
    cfg.validate()
    D = as_matrix(d, "D")
    n1, n2 = D.shape
    if n2 < 2:
        raise InvalidInputError("outlier detection needs at least two columns")

    lam = cfg.resolve_lambda(n1)
    tasks = [(D, i, lam, cfg) for i in range(n2)]
    certificates = parallel_map(_certify_column, tasks, jobs)

    report = DetectionReport(
        certificates=certificates,
        outlier_indices=tuple(c.column_index for c in certificates if c.is_outlier),
        lam=lam,
    )
    if report.non_converged:
        log.warning(
            "%d of %d column solves hit max_iters; classified from the last iterate",
            len(report.non_converged), n2,
        )
    log.info("Flagged %d of %d columns as outliers (lambda=%.4g)", len(report.outlier_indices), n2, lam)
    return report


def embed_columns(part: DenseMatrix, columns: Sequence[int], n2: int) -> DenseMatrix:
    """Place part's columns at the given positions of an N1 x n2 zero frame."""
    frame = np.zeros((part.shape[0], n2))
    frame[:, list(columns)] = part
    return frame


def sa_decompose(d: ArrayLike, cfg: Optional[SaConfig] = None, jobs: Optional[int] = 1) -> Decomposition:
    """
    Detect outliers, then split the remaining columns by PCP with lambda = 1/sqrt(N1).

    Outlier columns are zero in both returned parts.
    """
    cfg = cfg or SaConfig.from_config()
    D = as_matrix(d, "D")
    n1, n2 = D.shape

    start = time.perf_counter()
    report = detect_outliers(D, cfg, jobs)
    detected = time.perf_counter()

    inliers = report.inlier_indices
    if not inliers:
        raise DegenerateResultError("every column was flagged as an outlier")

    result = pcp_decompose(D[:, list(inliers)], 1.0 / np.sqrt(n1), cfg.solver)
    finished = time.perf_counter()

    return Decomposition(
        low_rank=embed_columns(result.low_rank, inliers, n2),
        sparse=embed_columns(result.sparse, inliers, n2),
        outlier_indices=report.outlier_indices,
        detection=report,
        pcp=result,
        timings={"detect": detected - start, "pcp": finished - detected},
    )


def calibrate_lambda(
    instance: Instance,
    cfg: Optional[SaConfig] = None,
    grid: Sequence[float] = LAMBDA_GRID,
    jobs: Optional[int] = 1,
) -> Tuple[float, Dict[float, float]]:
    """
    Pick lambda = g / sqrt(N1) from grid on a held-out instance.

    The margin of a grid point is the smallest outlier dominant fraction
    minus the largest inlier one (with no outliers, the fraction threshold
    stands in for the first term). Returns the best lambda and the margin
    of every grid factor.
    """
    cfg = cfg or SaConfig.from_config()
    n1 = instance.d.shape[0]
    outliers = list(instance.outlier_indices)
    inliers = list(instance.inlier_indices)
    margins: Dict[float, float] = {}

    for factor in grid:
        trial_cfg = replace(cfg, lam=factor / np.sqrt(n1))
        fractions = detect_outliers(instance.d, trial_cfg, jobs).fractions
        upper = fractions[outliers].min() if outliers else cfg.outlier_fraction_threshold
        lower = fractions[inliers].max() if inliers else 0.0
        margins[factor] = float(upper - lower)
        log.debug("lambda factor %.3g: margin %.4f", factor, margins[factor])

    best = max(grid, key=lambda g: (margins[g], -abs(g - 1.0)))
    return best / np.sqrt(n1), margins
