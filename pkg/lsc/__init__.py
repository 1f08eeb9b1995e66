"""L + S + C matrix decomposition: outlier detection, robust subspace recovery and recovery-condition checks."""

__version__ = "1.0.0"

from .config import CONFIG
from .errors import (
    DegenerateInputError,
    DegenerateResultError,
    InfeasibleError,
    InvalidInputError,
    LscError,
    ResampleNeededError,
    UnsupportedRegimeError,
)
from .l1_solvers import SolveOutcome, SolverConfig, l0_bruteforce, lad_solve, nullspace_solve, oracle_solve, sparse_rep_solve
from .pcp import PcpResult, median_subspace, pcp_decompose, pcp_outlier_decompose
from .randomized import RandomizedResult, SketchConfig, randomized_decompose
from .sa import Decomposition, DetectionReport, SaConfig, detect_outliers, sa_decompose
from .synth import Instance, ModelParams, generate_instance
from .theory import ConditionReport, column_conditions, nullspace_conditions

__all__ = [
    "CONFIG",
    "ConditionReport",
    "Decomposition",
    "DegenerateInputError",
    "DegenerateResultError",
    "DetectionReport",
    "InfeasibleError",
    "Instance",
    "InvalidInputError",
    "LscError",
    "ModelParams",
    "PcpResult",
    "RandomizedResult",
    "ResampleNeededError",
    "SaConfig",
    "SketchConfig",
    "SolveOutcome",
    "SolverConfig",
    "UnsupportedRegimeError",
    "detect_outliers",
    "generate_instance",
    "l0_bruteforce",
    "lad_solve",
    "column_conditions",
    "median_subspace",
    "nullspace_solve",
    "oracle_solve",
    "pcp_decompose",
    "pcp_outlier_decompose",
    "randomized_decompose",
    "sa_decompose",
    "sparse_rep_solve",
    "nullspace_conditions",
]
