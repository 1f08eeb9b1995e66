"""
Synthetic instances D = L + S + C with full ground truth.

L = U Q with standard-normal factors (or a union of independent subspaces),
S is Bernoulli(rho) supported with uniform values, and the outlier columns
of C are random directions scaled to the RMS column norm of L.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import InvalidInputError
from .mat_core import DenseMatrix, read_matrix_csv, svd_thin, write_matrix_csv


MASK64 = (1 << 64) - 1

MATRIX_FILES = {"d": "D.csv", "l": "L.csv", "s": "S.csv", "c": "C.csv"}
META_FILE = "meta.json"


def mix64(base_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed from (base_seed, index) with a splitmix64 finalizer."""
    z = (int(base_seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass
class ModelParams:
    """Parameters of one generated instance."""
    n1: int
    n2: int
    rank_r: int
    rho: float = 0.0
    num_outliers_k: int = 0
    sparse_amplitude: float = 1.0
    num_clusters: int = 1
    seed: int = 0
    outliers_leading: bool = False   # Outliers in the first K columns
    outlier_scale: float = 1.0       # Outlier norm relative to the RMS column norm of L

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> ModelParams:
        """Create from dictionary, ignoring unknown keys."""
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @property
    def num_inliers(self) -> int:
        return self.n2 - self.num_outliers_k

    def validate(self) -> None:
        """Raise InvalidInputError for infeasible parameters."""
        if self.n1 < 1 or self.n2 < 1:
            raise InvalidInputError(f"matrix size must be positive, got {self.n1}x{self.n2}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidInputError(f"rho must lie in [0, 1), got {self.rho}")
        if not 0 <= self.num_outliers_k <= self.n2:
            raise InvalidInputError(f"K must lie in [0, {self.n2}], got {self.num_outliers_k}")
        if self.rank_r < 1:
            raise InvalidInputError(f"rank must be at least 1, got {self.rank_r}")
        if self.sparse_amplitude <= 0 or self.outlier_scale <= 0:
            raise InvalidInputError("sparse_amplitude and outlier_scale must be positive")
        if self.num_clusters < 1:
            raise InvalidInputError("num_clusters must be at least 1")
        if self.num_inliers > 0:
            if self.rank_r > min(self.n1, self.num_inliers):
                raise InvalidInputError(
                    f"rank {self.rank_r} exceeds min(n1, n2 - K) = {min(self.n1, self.num_inliers)}"
                )
            if self.num_clusters > 1:
                if self.rank_r % self.num_clusters:
                    raise InvalidInputError(
                        f"num_clusters {self.num_clusters} must divide rank {self.rank_r}"
                    )
                smallest = self.num_inliers // self.num_clusters
                if smallest < self.rank_r // self.num_clusters:
                    raise InvalidInputError("too few inlier columns per cluster for its dimension")


@dataclass(frozen=True)
class Instance:
    """A generated problem: D with its ground-truth factors."""
    d: DenseMatrix
    l: DenseMatrix
    s: DenseMatrix
    c: DenseMatrix
    outlier_indices: Tuple[int, ...]
    params: ModelParams

    @property
    def inlier_indices(self) -> Tuple[int, ...]:
        outliers = set(self.outlier_indices)
        return tuple(j for j in range(self.d.shape[1]) if j not in outliers)

    def true_basis(self) -> DenseMatrix:
        """Orthonormal basis of col(L)."""
        return svd_thin(self.l).left_basis[:, : self.params.rank_r]


def sample_unit_sphere(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere in R^dim."""
    if dim < 1:
        raise InvalidInputError(f"dimension must be positive, got {dim}")
    while True:
        g = rng.standard_normal(dim)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


def _low_rank_part(params: ModelParams, rng: np.random.Generator) -> DenseMatrix:
    n_in = params.num_inliers
    if params.num_clusters == 1:
        U = rng.standard_normal((params.n1, params.rank_r))
        Q = rng.standard_normal((params.rank_r, n_in))
        return U @ Q
    dim = params.rank_r // params.num_clusters
    blocks = []
    for cols in np.array_split(np.arange(n_in), params.num_clusters):
        U = rng.standard_normal((params.n1, dim))
        Q = rng.standard_normal((dim, cols.size))
        blocks.append(U @ Q)
    return np.hstack(blocks)


def generate_instance(params: ModelParams) -> Instance:
    """Generate a synthetic instance; identical params give a bitwise-identical instance."""
    params.validate()
    rng = np.random.default_rng(params.seed & MASK64)
    n1, n2, K = params.n1, params.n2, params.num_outliers_k

    if params.outliers_leading:
        outliers = np.arange(K)
    else:
        outliers = np.sort(rng.choice(n2, size=K, replace=False))
    inliers = np.setdiff1d(np.arange(n2), outliers)

    L = np.zeros((n1, n2))
    if inliers.size:
        L[:, inliers] = _low_rank_part(params, rng)

    a = params.sparse_amplitude
    support = rng.random((n1, n2)) < params.rho
    values = rng.uniform(-a, a, size=(n1, n2))
    S = np.where(support, values, 0.0)
    S[:, outliers] = 0.0

    C = np.zeros((n1, n2))
    if inliers.size:
        rms = float(np.sqrt(np.mean(np.sum(L[:, inliers] ** 2, axis=0))))
    else:
        rms = float(np.sqrt(n1))
    for j in outliers:
        C[:, j] = params.outlier_scale * rms * sample_unit_sphere(n1, rng)

    D = L + S + C
    for arr in (D, L, S, C):
        arr.setflags(write=False)

    return Instance(
        d=D,
        l=L,
        s=S,
        c=C,
        outlier_indices=tuple(int(j) for j in outliers),
        params=params,
    )


def save_instance(instance: Instance, directory: Union[str, Path]) -> Path:
    """Write D.csv, L.csv, S.csv, C.csv and meta.json into directory."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for attr, name in MATRIX_FILES.items():
        write_matrix_csv(out / name, getattr(instance, attr))
    meta = instance.params.to_dict()
    meta["outlier_indices"] = list(instance.outlier_indices)
    with open(out / META_FILE, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    return out


def load_instance(directory: Union[str, Path]) -> Instance:
    """Read an instance directory written by save_instance."""
    src = Path(directory)
    meta_path = src / META_FILE
    if not meta_path.exists():
        raise InvalidInputError(f"{src} is not an instance directory (no {META_FILE})")
    with open(meta_path, "r", encoding="utf-8") as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"malformed {meta_path}: {e}") from e
    mats = {attr: read_matrix_csv(src / name) for attr, name in MATRIX_FILES.items()}
    return Instance(
        outlier_indices=tuple(int(j) for j in meta.get("outlier_indices", [])),
        params=ModelParams.from_dict(meta),
        **mats,
    )
