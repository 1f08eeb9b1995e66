"""
l1 optimization engines.

One over-relaxed ADMM iteration covers every program here: all of them are
reduced to a weighted least-absolute-deviations fit

    minimize  sum_i w_i |(X q - y)_i|

with the split r = X q - y and a soft-threshold prox on r. The sparse
representation program stacks an identity block under X so the coefficient
penalty becomes a second l1 block with weight lambda. Equality-constrained
programs are reduced by parameterizing their affine feasible set.

After ADMM an optional polishing step solves the square interpolation
system on p independent rows with the smallest residuals and keeps it
when the objective does not increase. This lands on the exact LP vertex
when ADMM is near it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import LinAlgError, cho_factor, cho_solve, null_space

from .config import CONFIG
from .errors import DegenerateInputError, InfeasibleError, InvalidInputError
from .mat_core import RANK_TOL, DenseMatrix, as_matrix, as_vector, numerical_rank


log = logging.getLogger(__name__)

L0_ZERO_TOL = 1e-9
POLISH_MAX_COND = 1e12


@dataclass
class SolverConfig:
    """ADMM settings shared by every l1 program."""
    max_iters: int = 2000
    abs_tol: float = 1e-7
    rel_tol: float = 1e-5
    admm_rho: float = 1.0
    over_relaxation: float = 1.5
    polish: bool = True

    def validate(self) -> None:
        if self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.admm_rho <= 0:
            raise InvalidInputError(f"admm_rho must be positive, got {self.admm_rho}")
        if not 1.0 <= self.over_relaxation <= 1.8:
            raise InvalidInputError(
                f"over_relaxation must lie in [1, 1.8], got {self.over_relaxation}"
            )

    @classmethod
    def from_config(cls, config: Optional[Dict[str, Any]] = None) -> SolverConfig:
        """Build from the merged configuration dict."""
        config = CONFIG if config is None else config
        return cls(
            max_iters=int(config["max_iters"]),
            abs_tol=float(config["abs_tol"]),
            rel_tol=float(config["rel_tol"]),
            admm_rho=float(config["admm_rho"]),
            over_relaxation=float(config["over_relaxation"]),
            polish=bool(config["polish"]),
        )


@dataclass
class SolveOutcome:
    """Result of one l1 solve."""
    solution: np.ndarray
    objective: float
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    polished: bool = False


def _weighted_objective(X: DenseMatrix, y: np.ndarray, weights: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(weights * np.abs(X @ q - y)))


def _admm(
    X: DenseMatrix, y: np.ndarray, weights: np.ndarray, cfg: SolverConfig
) -> Tuple[np.ndarray, int, bool, float, float]:
    """
    Over-relaxed scaled-form ADMM for the weighted LAD fit.

    X and y are normalized by their max-abs entries internally; the returned
    coefficients and residual norms are in the caller's scale.
    """
    m, p = X.shape
    sx = float(np.max(np.abs(X)))
    sy = float(np.max(np.abs(y)))
    if sy == 0.0:
        return np.zeros(p), 0, True, 0.0, 0.0
    Xs = X / sx
    ys = y / sy

    try:
        factor = cho_factor(Xs.T @ Xs)
    except LinAlgError as e:
        raise DegenerateInputError("regression matrix is rank deficient") from e

    rho = cfg.admm_rho
    alpha = cfg.over_relaxation
    sqrt_m, sqrt_p = np.sqrt(m), np.sqrt(p)
    q = np.zeros(p)
    z = np.zeros(m)
    u = np.zeros(m)
    r_norm = s_norm = np.inf
    converged = False

    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        q = cho_solve(factor, Xs.T @ (ys + z - u))
        Xq = Xs @ q
        Xq_hat = alpha * Xq + (1.0 - alpha) * (z + ys)

        z_old = z
        v = Xq_hat - ys + u
        z = np.sign(v) * np.maximum(np.abs(v) - weights / rho, 0.0)
        u = u + Xq_hat - ys - z

        r_norm = float(np.linalg.norm(Xq - ys - z))
        s_norm = float(rho * np.linalg.norm(Xs.T @ (z - z_old)))
        eps_pri = sqrt_m * cfg.abs_tol + cfg.rel_tol * max(
            np.linalg.norm(Xq), np.linalg.norm(z), np.linalg.norm(ys)
        )
        eps_dual = sqrt_p * cfg.abs_tol + cfg.rel_tol * rho * np.linalg.norm(Xs.T @ u)
        if r_norm < eps_pri and s_norm < eps_dual:
            converged = True
            break

        # Residual balancing; u is the scaled dual so it rescales with rho
        if r_norm > 10.0 * s_norm:
            rho *= 2.0
            u = u / 2.0
        elif s_norm > 10.0 * r_norm:
            rho /= 2.0
            u = u * 2.0

    return q * (sy / sx), iteration, converged, r_norm * sy, s_norm * sy


def _select_active_rows(X: DenseMatrix, order: np.ndarray, p: int) -> Optional[np.ndarray]:
    """First p rows of order that are linearly independent, or None."""
    basis = np.zeros((p, X.shape[1]))
    active = []
    for k in order:
        row = X[k]
        found = basis[: len(active)]
        rest = row - (found @ row) @ found
        norm = np.linalg.norm(rest)
        if norm > 1e-8 * np.linalg.norm(row):
            basis[len(active)] = rest / norm
            active.append(k)
            if len(active) == p:
                return np.array(active)
    return None


def _polish(X: DenseMatrix, y: np.ndarray, weights: np.ndarray, q: np.ndarray) -> Optional[np.ndarray]:
    """
    Interpolate p independent weighted rows, taken in order of smallest scaled residual.

    Dependent rows are skipped, so degenerate vertices (more than p zero
    residuals) still give a square non-singular system.
    """
    p = X.shape[1]
    row_norms = np.linalg.norm(X, axis=1)
    candidates = np.flatnonzero((weights > 0) & (row_norms > 0))
    if candidates.size < p:
        return None
    scaled = np.abs(X[candidates] @ q - y[candidates]) / row_norms[candidates]
    active = _select_active_rows(X, candidates[np.argsort(scaled, kind="stable")], p)
    if active is None:
        return None
    Xa = X[active]
    if np.linalg.cond(Xa) > POLISH_MAX_COND:
        return None
    return np.linalg.solve(Xa, y[active])


def _solve(X: DenseMatrix, y: np.ndarray, weights: np.ndarray, cfg: SolverConfig) -> SolveOutcome:
    cfg.validate()
    q, iterations, converged, r_norm, s_norm = _admm(X, y, weights, cfg)
    objective = _weighted_objective(X, y, weights, q)
    polished = False

    if cfg.polish and iterations > 0:
        candidate = _polish(X, y, weights, q)
        if candidate is not None:
            cand_objective = _weighted_objective(X, y, weights, candidate)
            if cand_objective <= objective * (1.0 + 1e-10) + 1e-14:
                q, objective, polished = candidate, cand_objective, True

    if not converged:
        log.debug(
            "ADMM stopped at max_iters=%d (primal %.3e, dual %.3e, polished=%s)",
            cfg.max_iters, r_norm, s_norm, polished,
        )
    return SolveOutcome(
        solution=q,
        objective=objective,
        iterations=iterations,
        converged=converged,
        primal_residual=r_norm,
        dual_residual=s_norm,
        polished=polished,
    )


def _stack_identity(X: DenseMatrix, y: np.ndarray, row_weight: float, coef_weight: float):
    """Append an identity block so q itself enters the objective with coef_weight."""
    m, p = X.shape
    X_stack = np.vstack([X, np.eye(p)])
    y_stack = np.concatenate([y, np.zeros(p)])
    weights = np.concatenate([np.full(m, row_weight), np.full(p, coef_weight)])
    return X_stack, y_stack, weights


def lad_solve(x: ArrayLike, y: ArrayLike, cfg: Optional[SolverConfig] = None) -> SolveOutcome:
    """
    Least absolute deviations: minimize ||X q - y||_1.

    Raises DegenerateInputError when X is numerically rank deficient.
    Non-convergence is flagged on the outcome.
    """
    cfg = cfg or SolverConfig.from_config()
    X = as_matrix(x, "X")
    y = as_vector(y, "y")
    m, p = X.shape
    if y.size != m:
        raise InvalidInputError(f"y has length {y.size}, expected {m}")
    if m < p:
        raise InvalidInputError(f"LAD needs at least as many rows as columns, got {m}x{p}")
    if numerical_rank(X, tol=RANK_TOL) < p:
        raise DegenerateInputError("X does not have full column rank")
    return _solve(X, y, np.ones(m), cfg)


def sparse_rep_solve(
    d: ArrayLike, col_index: int, lam: float, cfg: Optional[SolverConfig] = None
) -> SolveOutcome:
    """
    Sparse self-representation of column col_index.

    Solves minimize ||D z||_1 + lam ||z||_1 subject to z[col_index] = 1 by
    fixing z[col_index] and fitting the remaining coefficients w:
    minimize ||D^{-i} w + d^i||_1 + lam ||w||_1. lam = 0 gives the pure
    representation program. The returned objective drops the constant lam.
    """
    cfg = cfg or SolverConfig.from_config()
    D = as_matrix(d, "D")
    n1, n2 = D.shape
    if not 0 <= col_index < n2:
        raise InvalidInputError(f"column index {col_index} out of range for {n2} columns")
    if lam < 0:
        raise InvalidInputError(f"lambda must be non-negative, got {lam}")

    target = D[:, col_index]
    if n2 == 1:
        return SolveOutcome(
            solution=np.ones(1),
            objective=float(np.abs(target).sum()),
            iterations=0,
            converged=True,
            primal_residual=0.0,
            dual_residual=0.0,
        )

    A = np.delete(D, col_index, axis=1)
    X, y, weights = _stack_identity(A, -target, 1.0, lam)
    outcome = _solve(X, y, weights, cfg)

    w = outcome.solution
    z = np.insert(w, col_index, 1.0)
    outcome.solution = z
    outcome.objective = float(np.abs(D @ z).sum() + lam * np.abs(w).sum())
    return outcome


def _reduced_affine_solve(
    A: DenseMatrix, z0: np.ndarray, basis: DenseMatrix, cfg: SolverConfig
) -> Tuple[np.ndarray, SolveOutcome]:
    """Minimize ||A (z0 + basis t)||_1 over t."""
    if basis.shape[1] == 0:
        outcome = SolveOutcome(
            solution=np.zeros(0),
            objective=float(np.abs(A @ z0).sum()),
            iterations=0,
            converged=True,
            primal_residual=0.0,
            dual_residual=0.0,
        )
        return z0.copy(), outcome
    X, y, weights = _stack_identity(A @ basis, -(A @ z0), 1.0, 0.0)
    outcome = _solve(X, y, weights, cfg)
    return z0 + basis @ outcome.solution, outcome


def oracle_solve(
    b: ArrayLike, s: ArrayLike, v: ArrayLike, cfg: Optional[SolverConfig] = None
) -> SolveOutcome:
    """
    Oracle program: minimize ||S z||_1 subject to B z = 0 and v^T z = 1.

    The feasible set is parameterized as z = z0 + N T t with N a basis of
    null(B), z0 the minimum-norm feasible point and T a basis of the part of
    null(B) orthogonal to the projection of v.
    """
    cfg = cfg or SolverConfig.from_config()
    B = as_matrix(b, "B")
    S = as_matrix(s, "S")
    v = as_vector(v, "v")
    if B.shape != S.shape:
        raise InvalidInputError(f"B and S shapes differ: {B.shape} vs {S.shape}")
    if v.size != B.shape[1]:
        raise InvalidInputError(f"v has length {v.size}, expected {B.shape[1]}")

    N = null_space(B, rcond=RANK_TOL)
    if N.shape[1] == 0:
        raise InfeasibleError("B has full column rank; only z = 0 satisfies B z = 0")
    c = N.T @ v
    if np.linalg.norm(c) <= 1e-10 * max(np.linalg.norm(v), 1e-300):
        raise InfeasibleError("v is orthogonal to null(B); the constraint v^T z = 1 cannot be met")

    z0 = N @ (c / (c @ c))
    T = null_space(c.reshape(1, -1)) if N.shape[1] > 1 else np.zeros((1, 0))
    z, outcome = _reduced_affine_solve(S, z0, N @ T, cfg)
    z = z / (v @ z)

    outcome.solution = z
    outcome.objective = float(np.abs(S @ z).sum())
    return outcome


def nullspace_solve(a: ArrayLike, v: ArrayLike, cfg: Optional[SolverConfig] = None) -> SolveOutcome:
    """
    Null-space learning program: minimize ||A z||_1 subject to v^T z = 1.

    With v = e_i this is the representation program of column i with
    lambda = 0.
    """
    cfg = cfg or SolverConfig.from_config()
    A = as_matrix(a, "A")
    v = as_vector(v, "v")
    if v.size != A.shape[1]:
        raise InvalidInputError(f"v has length {v.size}, expected {A.shape[1]}")
    vv = float(v @ v)
    if vv == 0.0:
        raise InfeasibleError("v = 0 admits no z with v^T z = 1")

    z0 = v / vv
    T = null_space(v.reshape(1, -1)) if v.size > 1 else np.zeros((1, 0))
    z, outcome = _reduced_affine_solve(A, z0, T, cfg)
    z = z / (v @ z)

    outcome.solution = z
    outcome.objective = float(np.abs(A @ z).sum())
    return outcome


def l0_bruteforce(
    a: ArrayLike, col_index: int, max_n1: int = 14, max_cols: int = 6
) -> Tuple[np.ndarray, int]:
    """
    Exact l0 sparse approximation: minimize ||A^{-i} z - a^i||_0.

    Row subsets are enumerated from largest to smallest in lexicographic
    order; the first subset whose interpolation system is consistent yields
    a global minimizer. Returns (z, l0_value) with z of length n - 1.
    """
    A = as_matrix(a, "A")
    n1, n = A.shape
    if not 0 <= col_index < n:
        raise InvalidInputError(f"column index {col_index} out of range for {n} columns")
    if n1 > max_n1 or n - 1 > max_cols:
        raise InvalidInputError(
            f"{n1}x{n} exceeds the enumeration caps ({max_n1} rows, {max_cols} regressors)"
        )

    X = np.delete(A, col_index, axis=1)
    y = A[:, col_index]
    p = X.shape[1]
    tol = L0_ZERO_TOL * max(1.0, float(np.max(np.abs(A))))

    if p == 0:
        return np.zeros(0), int(np.count_nonzero(np.abs(y) > tol))

    for size in range(n1, 0, -1):
        for rows in combinations(range(n1), size):
            R = list(rows)
            z, *_ = np.linalg.lstsq(X[R], y[R], rcond=None)
            if np.max(np.abs(X[R] @ z - y[R])) <= tol:
                residual = X @ z - y
                return z, int(np.count_nonzero(np.abs(residual) > tol))

    return np.zeros(p), int(np.count_nonzero(np.abs(y) > tol))
