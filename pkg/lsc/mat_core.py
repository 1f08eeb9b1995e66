"""
Dense linear-algebra kernel.

Thin SVD, soft and singular-value thresholding, the norms used by the
decomposition programs, subspace distance metrics and the CSV matrix format.
Matrices are plain float64 numpy arrays; as_matrix() is the validating
constructor every public entry point goes through.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError


DenseMatrix = NDArray[np.float64]

RANK_TOL = 1e-10
REPORT_TOL = 1e-6
LOG_ERROR_FLOOR = -16.0
ORTHONORMAL_TOL = 1e-6

NORM_KINDS = ("l1", "fro", "spectral", "l12", "nuclear")


def as_matrix(a: ArrayLike, name: str = "matrix") -> DenseMatrix:
    """Validate and convert to a non-empty, finite, 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def as_vector(a: ArrayLike, name: str = "vector") -> NDArray[np.float64]:
    """Validate and convert to a finite 1-D float64 array."""
    arr = np.asarray(a, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class ThinSvd:
    """Compact SVD truncated at the numerical rank."""
    left_basis: DenseMatrix
    singular_values: NDArray[np.float64]
    right_basis: DenseMatrix

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])

    def reconstruct(self) -> DenseMatrix:
        return (self.left_basis * self.singular_values) @ self.right_basis.T


def svd_thin(a: ArrayLike) -> ThinSvd:
    """
    Compact SVD keeping triplets with sigma > RANK_TOL * sigma_max.

    A zero matrix gives rank 0 with empty bases.
    """
    A = as_matrix(a)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] > 0:
        k = int(np.count_nonzero(s > RANK_TOL * s[0]))
    else:
        k = 0
    return ThinSvd(
        left_basis=U[:, :k],
        singular_values=s[:k],
        right_basis=Vt[:k, :].T,
    )


def shrink(x, tau: float):
    """
    Soft threshold sign(x) * max(|x| - tau, 0).

    Scalars return a float; arrays are thresholded elementwise.
    """
    if tau < 0:
        raise InvalidInputError(f"shrink threshold must be non-negative, got {tau}")
    if np.isscalar(x):
        return float(np.sign(x) * max(abs(x) - tau, 0.0))
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def sv_threshold(a: ArrayLike, tau: float) -> DenseMatrix:
    """Proximal operator of tau * nuclear norm."""
    if tau < 0:
        raise InvalidInputError(f"singular value threshold must be non-negative, got {tau}")
    svd = svd_thin(a)
    s = np.maximum(svd.singular_values - tau, 0.0)
    return (svd.left_basis * s) @ svd.right_basis.T


def column_shrink(a: ArrayLike, tau: float) -> DenseMatrix:
    """Group soft threshold on columns: c <- c * max(1 - tau/||c||, 0)."""
    if tau < 0:
        raise InvalidInputError(f"column threshold must be non-negative, got {tau}")
    A = np.asarray(a, dtype=np.float64)
    norms = np.linalg.norm(A, axis=0)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(1.0 - tau / norms[nz], 0.0)
    return A * scale


def matrix_norm(a: ArrayLike, kind: str = "fro") -> float:
    """Entrywise l1, Frobenius, spectral, l1,2 (sum of column norms) or nuclear norm."""
    A = as_matrix(a)
    if kind == "l1":
        return float(np.abs(A).sum())
    if kind == "fro":
        return float(np.linalg.norm(A, "fro"))
    if kind == "spectral":
        return float(np.linalg.norm(A, 2))
    if kind == "l12":
        return float(np.linalg.norm(A, axis=0).sum())
    if kind == "nuclear":
        return float(svd_thin(A).singular_values.sum())
    raise InvalidInputError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def numerical_rank(a: ArrayLike, tol: float = REPORT_TOL) -> int:
    """Count singular values above tol * sigma_max."""
    s = np.linalg.svd(as_matrix(a), compute_uv=False)
    if s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def orth_basis(a: ArrayLike, tol: float = REPORT_TOL) -> DenseMatrix:
    """Orthonormal basis of the column space at relative threshold tol."""
    A = as_matrix(a)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s[0] <= 0:
        return np.zeros((A.shape[0], 0))
    k = int(np.count_nonzero(s > tol * s[0]))
    return U[:, :k]


def _check_orthonormal(U: DenseMatrix, name: str) -> None:
    if U.shape[1] == 0:
        return
    gram = U.T @ U
    if np.max(np.abs(gram - np.eye(U.shape[1]))) > ORTHONORMAL_TOL:
        raise InvalidInputError(f"{name} does not have orthonormal columns")


def _as_basis(a: ArrayLike, name: str) -> DenseMatrix:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be a finite 2-D basis")
    _check_orthonormal(arr, name)
    return arr


def subspace_recovery_error(u: ArrayLike, u_hat: ArrayLike) -> float:
    """
    Log-recovery error log10(||U - Uh Uh^T U||_F / ||U||_F).

    Returns LOG_ERROR_FLOOR when the ratio is below 1e-16.
    """
    U = _as_basis(u, "U")
    U_hat = _as_basis(u_hat, "U_hat")
    if U.shape[0] != U_hat.shape[0]:
        raise InvalidInputError(
            f"row counts differ: U has {U.shape[0]}, U_hat has {U_hat.shape[0]}"
        )
    if U.shape[1] == 0:
        raise InvalidInputError("U must have at least one column")
    residual = U - U_hat @ (U_hat.T @ U)
    ratio = np.linalg.norm(residual, "fro") / np.linalg.norm(U, "fro")
    if ratio < 1e-16:
        return LOG_ERROR_FLOOR
    return float(np.log10(ratio))


def projection_residual(u: ArrayLike, u_hat: ArrayLike) -> float:
    """||(I - U U^T) Uh||_F, the distance of span(Uh) from span(U)."""
    U = _as_basis(u, "U")
    U_hat = _as_basis(u_hat, "U_hat")
    if U.shape[0] != U_hat.shape[0]:
        raise InvalidInputError("U and U_hat must have the same row count")
    return float(np.linalg.norm(U_hat - U @ (U.T @ U_hat), "fro"))


def write_matrix_csv(path: Union[str, Path], a: ArrayLike) -> None:
    """Headerless CSV, one matrix row per line, 17 significant digits."""
    A = as_matrix(a)
    np.savetxt(path, A, delimiter=",", fmt="%.17g")


def read_matrix_csv(path: Union[str, Path]) -> DenseMatrix:
    """Inverse of write_matrix_csv."""
    try:
        A = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as e:
        raise InvalidInputError(f"could not read matrix from {path}: {e}") from e
    return as_matrix(A, name=str(path))
