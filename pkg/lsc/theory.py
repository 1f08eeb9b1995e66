"""
Numerical checks of the sufficient conditions for l1 recovery.

A = B + S splits a column-deficient block into a low-rank part B and a
sparse part S. The oracle program fixes the exact cancellation in B; the
checks here decide whether the plain l1 program must land on the oracle
solution. Two versions are evaluated:

* nullspace_conditions: the deterministic inequalities, with the infimum of
  a weighted sum |b_i^T delta| over unit directions delta in the row space
  of B computed exactly in one or two dimensions and by sampling plus local
  descent otherwise.
* column_conditions: the random-row version where the infimum is replaced
  by the probabilistic lower bound xi.

The permeance bounds refuse r < 2 (the formula divides by r - 1).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import InfeasibleError, InvalidInputError, UnsupportedRegimeError
from .l1_solvers import SolverConfig, oracle_solve
from .mat_core import RANK_TOL, DenseMatrix, as_matrix, as_vector
from .synth import MASK64, mix64
from .workers import parallel_map


log = logging.getLogger(__name__)

EXACT_LOWDIM = "exact_lowdim"
SAMPLED = "sampled"
PROBABILISTIC_BOUND = "probabilistic_bound"

CERTIFIED = "exact"
CERTIFIED_UP_TO_SAMPLING = "certified up to sampling"
NOT_CERTIFIED = "not certified"

DIRS_PER_CHUNK = 2000
DESCENT_STARTS = 8
DESCENT_STEPS = 200
FEASIBILITY_TOL = 1e-6


@dataclass
class SupportSets:
    """Row classification of S against an oracle point z."""
    zero_row_set: Tuple[int, ...]
    z_orthogonal_set: Tuple[int, ...]
    n_s: int
    n_s_prime: int


@dataclass
class ConditionReport:
    """Both sides of both sufficient-condition inequalities."""
    xi: Optional[float]
    lhs_first: float
    rhs_first: float
    lhs_second: float
    rhs_second: float
    coherence_ratio: float
    alpha_norm: float
    holds: bool
    infimum_method: str
    certification: str
    n_s: int
    n_s_prime: int
    kappa: float
    permeance: Optional[float] = None
    probability_bound: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, float) and not np.isfinite(value):
                out[key] = str(value)
        return out


def support_sets(s: ArrayLike, z: ArrayLike, zero_tol: float = 1e-9) -> SupportSets:
    """
    Zero rows of S and rows orthogonal to z.

    A row is zero when its max-abs entry is at most zero_tol; it is
    orthogonal to z when |s_k^T z| <= zero_tol ||s_k|| ||z||. Zero rows are
    always in the orthogonal set.
    """
    S = as_matrix(s, "S")
    z = as_vector(z, "z")
    if z.size != S.shape[1]:
        raise InvalidInputError(f"z has length {z.size}, expected {S.shape[1]}")

    zero_rows = np.max(np.abs(S), axis=1) <= zero_tol
    orthogonal = np.abs(S @ z) <= zero_tol * np.linalg.norm(S, axis=1) * np.linalg.norm(z)
    orthogonal |= zero_rows

    return SupportSets(
        zero_row_set=tuple(int(k) for k in np.flatnonzero(zero_rows)),
        z_orthogonal_set=tuple(int(k) for k in np.flatnonzero(orthogonal)),
        n_s=int(S.shape[0] - np.count_nonzero(zero_rows)),
        n_s_prime=int(np.count_nonzero(orthogonal & ~zero_rows)),
    )


def permeance_lower_bound(n: int, r: int, t: float) -> float:
    """
    Lower bound on inf over unit delta of sum |delta^T g_i| for n random unit rows in R^r.

    Holds with probability at least 1 - exp(-t^2 / 2).
    """
    if r < 2:
        raise UnsupportedRegimeError(f"the permeance bound needs r >= 2, got {r}")
    if n < 0 or t < 0:
        raise InvalidInputError("n and t must be non-negative")
    return float(np.sqrt(2.0 / np.pi) * n / np.sqrt(r) - 2.0 * np.sqrt(n) - t * np.sqrt(n / (r - 1.0)))


def row_norm_tail(r: int, t: float) -> float:
    """Tail exp(-(r/2)(t^2 - log t^2 - 1)) of ||g|| > t for the row-norm bound, t > 1."""
    if t <= 1:
        raise InvalidInputError(f"the tail needs t > 1, got {t}")
    return float(np.exp(-(r / 2.0) * (t * t - np.log(t * t) - 1.0)))


def xi_bound(n1: int, n_s: int, r_b: int, t1: float) -> float:
    """Permeance bound over the N1 - n_s clean rows."""
    if not 0 <= n_s <= n1:
        raise InvalidInputError(f"n_s must lie in [0, {n1}], got {n_s}")
    return permeance_lower_bound(n1 - n_s, r_b, t1)


def _nonzero_signs(S: DenseMatrix, z: np.ndarray, zero_tol: float) -> np.ndarray:
    dots = S @ z
    signs = np.sign(dots)
    signs[np.abs(dots) <= zero_tol * np.linalg.norm(S, axis=1) * np.linalg.norm(z)] = 0.0
    return signs


def alpha_vector(a: ArrayLike, s: ArrayLike, z_star: ArrayLike, zero_tol: float = 1e-9) -> np.ndarray:
    """sum_i sgn(s_i^T z) a_i with sgn = 0 on rows orthogonal to z."""
    A = as_matrix(a, "A")
    S = as_matrix(s, "S")
    z = as_vector(z_star, "z_star")
    if A.shape != S.shape or z.size != A.shape[1]:
        raise InvalidInputError("A, S and z_star shapes disagree")
    return _nonzero_signs(S, z, zero_tol) @ A


def row_space_bases(b: ArrayLike) -> Tuple[DenseMatrix, DenseMatrix]:
    """Orthonormal bases (R_b, P_b) of the row space and null space of B."""
    B = as_matrix(b, "B")
    _, s, Vt = np.linalg.svd(B, full_matrices=True)
    rank = int(np.count_nonzero(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    return Vt[:rank].T, Vt[rank:].T


def _weighted_abs_sum(G: DenseMatrix, weights: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return weights @ np.abs(G @ theta)


def _circle_infimum(G: DenseMatrix, weights: np.ndarray) -> float:
    """
    Exact infimum on the unit circle.

    Between consecutive breakpoints (directions orthogonal to some g_i) the
    objective is linear in theta, so the infimum is attained at a breakpoint
    or at the arc-interior direction opposite the arc's linear coefficient.
    """
    phis = np.mod(np.arctan2(G[:, 0], -G[:, 1]), np.pi)
    breaks = np.sort(np.concatenate([phis, phis + np.pi]))
    thetas = np.vstack([np.cos(breaks), np.sin(breaks)])
    best = float(np.min(_weighted_abs_sum(G, weights, thetas)))

    ends = np.append(breaks, breaks[0] + 2.0 * np.pi)
    for lo, hi in zip(ends[:-1], ends[1:]):
        if hi - lo <= 1e-15:
            continue
        mid = 0.5 * (lo + hi)
        signs = np.sign(G @ np.array([np.cos(mid), np.sin(mid)]))
        coef = (weights * signs) @ G
        norm = np.linalg.norm(coef)
        if norm == 0.0:
            continue
        psi = np.arctan2(-coef[1], -coef[0])
        if lo + np.mod(psi - lo, 2.0 * np.pi) < hi:
            best = min(best, -float(norm))
    return best


def _sampled_chunk(task) -> float:
    """Minimum over one chunk of random directions, refined by projected subgradient descent."""
    G, weights, seed, count = task
    rng = np.random.default_rng(seed)
    thetas = rng.standard_normal((G.shape[1], count))
    thetas /= np.linalg.norm(thetas, axis=0)
    values = _weighted_abs_sum(G, weights, thetas)
    best = float(values.min())

    for k in np.argsort(values, kind="stable")[:DESCENT_STARTS]:
        theta = thetas[:, k].copy()
        value = float(values[k])
        for step in range(DESCENT_STEPS):
            grad = (weights * np.sign(G @ theta)) @ G
            grad -= (grad @ theta) * theta
            gnorm = np.linalg.norm(grad)
            if gnorm == 0.0:
                break
            trial = theta - (0.5 / np.sqrt(step + 1.0)) * grad / gnorm
            trial /= np.linalg.norm(trial)
            trial_value = float(_weighted_abs_sum(G, weights, trial))
            if trial_value < value:
                theta, value = trial, trial_value
        best = min(best, value)
    return best


def permeance_infimum(
    g: ArrayLike,
    weights: Optional[ArrayLike] = None,
    num_dirs: int = 10000,
    seed: int = 0,
    jobs: Optional[int] = 1,
) -> Tuple[float, str]:
    """
    inf over unit theta of sum_i w_i |g_i^T theta|.

    Exact in one and two dimensions; otherwise the minimum over num_dirs
    seeded random directions refined by local descent, which is an upper
    estimate. Returns (value, method).
    """
    G = np.asarray(g, dtype=np.float64)
    if G.ndim != 2 or G.shape[1] == 0:
        raise InvalidInputError("direction space must have dimension at least 1")
    w = np.ones(G.shape[0]) if weights is None else as_vector(weights, "weights")
    if w.size != G.shape[0]:
        raise InvalidInputError("one weight per row is required")

    keep = np.linalg.norm(G, axis=1) > 0
    G, w = G[keep], w[keep]
    dim = G.shape[1]
    if G.shape[0] == 0:
        return 0.0, EXACT_LOWDIM if dim <= 2 else SAMPLED
    if dim == 1:
        return float(w @ np.abs(G[:, 0])), EXACT_LOWDIM
    if dim == 2:
        return _circle_infimum(G, w), EXACT_LOWDIM

    if num_dirs < 1:
        raise InvalidInputError("num_dirs must be positive")
    counts = [DIRS_PER_CHUNK] * (num_dirs // DIRS_PER_CHUNK)
    if num_dirs % DIRS_PER_CHUNK:
        counts.append(num_dirs % DIRS_PER_CHUNK)
    tasks = [(G, w, mix64(seed & MASK64, i), count) for i, count in enumerate(counts)]
    return float(min(parallel_map(_sampled_chunk, tasks, jobs))), SAMPLED


def _certification(holds: bool, method: str) -> str:
    if not holds:
        return NOT_CERTIFIED
    return CERTIFIED_UP_TO_SAMPLING if method == SAMPLED else CERTIFIED


def _coherence_ratio(v: np.ndarray, R_b: DenseMatrix, P_b: DenseMatrix) -> float:
    row_part = np.linalg.norm(v @ R_b)
    null_part = np.linalg.norm(v @ P_b)
    if row_part == 0.0:
        return float("inf")
    return float(null_part / row_part)


def _check_inputs(b: ArrayLike, s: ArrayLike) -> Tuple[DenseMatrix, DenseMatrix]:
    B = as_matrix(b, "B")
    S = as_matrix(s, "S")
    if B.shape != S.shape:
        raise InvalidInputError(f"B and S shapes differ: {B.shape} vs {S.shape}")
    return B, S


def nullspace_conditions(
    b: ArrayLike,
    s: ArrayLike,
    v: ArrayLike,
    z_star: Optional[ArrayLike] = None,
    num_dirs: int = 10000,
    seed: int = 0,
    zero_tol: float = 1e-8,
    cfg: Optional[SolverConfig] = None,
    jobs: Optional[int] = 1,
) -> ConditionReport:
    """
    Deterministic sufficient conditions for the null-space program.

    first:  1/2 inf (sum_{L_S} |b_i^T d| - 2 sum_{L_S^c & L_z} |b_i^T d|) > sum_{L_z} ||s_i|| + ||alpha||
    second: coherence/2 * inf sum_{L_S} |b_i^T d|                        > sum_{L_z} ||s_i|| + ||alpha||

    with both infima over unit d in the row space of B. z_star defaults to
    the oracle solution.
    """
    B, S = _check_inputs(b, s)
    v = as_vector(v, "v")
    if v.size != B.shape[1]:
        raise InvalidInputError(f"v has length {v.size}, expected {B.shape[1]}")

    R_b, P_b = row_space_bases(B)
    if R_b.shape[1] == 0:
        raise UnsupportedRegimeError("B = 0 has an empty row space")
    if P_b.shape[1] == 0 or np.linalg.norm(v @ P_b) <= 1e-10 * np.linalg.norm(v):
        raise InfeasibleError("v is orthogonal to null(B)")

    z = oracle_solve(B, S, v, cfg).solution if z_star is None else as_vector(z_star, "z_star")
    scale = max(1.0, float(np.max(np.abs(B))) * float(np.linalg.norm(z)))
    if np.max(np.abs(B @ z)) > FEASIBILITY_TOL * scale or abs(v @ z - 1.0) > FEASIBILITY_TOL:
        raise InvalidInputError("z_star is not feasible for B z = 0, v^T z = 1")

    sets = support_sets(S, z, zero_tol)
    zero_rows = list(sets.zero_row_set)
    orth_only = sorted(set(sets.z_orthogonal_set) - set(sets.zero_row_set))
    alpha_norm = float(np.linalg.norm(alpha_vector(B + S, S, z, zero_tol)))
    s_sum = float(np.linalg.norm(S[list(sets.z_orthogonal_set)], axis=1).sum())

    G_clean = B[zero_rows] @ R_b
    G_bad = B[orth_only] @ R_b
    first_inf, method = permeance_infimum(
        np.vstack([G_clean, G_bad]),
        np.concatenate([np.ones(len(zero_rows)), np.full(len(orth_only), -2.0)]),
        num_dirs, seed, jobs,
    )
    second_inf, _ = permeance_infimum(G_clean, None, num_dirs, seed, jobs)
    coherence = _coherence_ratio(v, R_b, P_b)

    rhs = s_sum + alpha_norm
    lhs_first = 0.5 * first_inf
    lhs_second = 0.5 * coherence * second_inf if second_inf > 0 else 0.0
    holds = bool(lhs_first > rhs and lhs_second > rhs)

    return ConditionReport(
        xi=None,
        lhs_first=float(lhs_first),
        rhs_first=rhs,
        lhs_second=float(lhs_second),
        rhs_second=rhs,
        coherence_ratio=coherence,
        alpha_norm=alpha_norm,
        holds=holds,
        infimum_method=method,
        certification=_certification(holds, method),
        n_s=sets.n_s,
        n_s_prime=sets.n_s_prime,
        kappa=float(np.max(np.abs(S))),
        permeance=float(second_inf),
    )


def column_conditions(
    b: ArrayLike,
    s: ArrayLike,
    col_index: int,
    t1: float = 2.0,
    t2: float = 2.0,
    zero_tol: float = 1e-8,
    cfg: Optional[SolverConfig] = None,
) -> ConditionReport:
    """
    Random-row sufficient conditions for the representation of column col_index.

    first:  xi/2              > n_s' + sum_{L_z} ||s_i|| + sqrt(n_s - n_s') t2
    second: coherence/2 * xi  >        sum_{L_z} ||s_i|| + sqrt(n_s - n_s') t2

    where xi = xi_bound(N1, n_s, r_b, t1) and the oracle point has
    z[col_index] = 1. The reported probability bound is
    1 - exp(-t1^2/2) - exp(-(r_b/2)(t2^2 - log t2^2 - 1)).
    """
    if t1 < 0:
        raise InvalidInputError(f"t1 must be non-negative, got {t1}")
    if t2 <= 1:
        raise InvalidInputError(f"t2 must exceed 1, got {t2}")
    B, S = _check_inputs(b, s)
    n1, n = B.shape
    if not 0 <= col_index < n:
        raise InvalidInputError(f"column index {col_index} out of range for {n} columns")

    R_b, P_b = row_space_bases(B)
    r_b = R_b.shape[1]
    if r_b < 2:
        raise UnsupportedRegimeError(f"the random-row conditions need rank(B) >= 2, got {r_b}")

    e_i = np.zeros(n)
    e_i[col_index] = 1.0
    z = oracle_solve(B, S, e_i, cfg).solution

    sets = support_sets(S, z, zero_tol)
    xi = xi_bound(n1, sets.n_s, r_b, t1)
    s_sum = float(np.linalg.norm(S[list(sets.z_orthogonal_set)], axis=1).sum())
    spread = np.sqrt(sets.n_s - sets.n_s_prime) * t2
    coherence = _coherence_ratio(e_i, R_b, P_b)

    lhs_first = 0.5 * xi
    rhs_first = sets.n_s_prime + s_sum + spread
    lhs_second = 0.5 * coherence * xi
    rhs_second = s_sum + spread
    holds = bool(lhs_first > rhs_first and lhs_second > rhs_second)
    probability = 1.0 - np.exp(-t1 * t1 / 2.0) - row_norm_tail(r_b, t2)

    return ConditionReport(
        xi=float(xi),
        lhs_first=float(lhs_first),
        rhs_first=float(rhs_first),
        lhs_second=float(lhs_second),
        rhs_second=float(rhs_second),
        coherence_ratio=coherence,
        alpha_norm=float(np.linalg.norm(alpha_vector(B + S, S, z, zero_tol))),
        holds=holds,
        infimum_method=PROBABILISTIC_BOUND,
        certification=_certification(holds, PROBABILISTIC_BOUND) if probability > 0 else NOT_CERTIFIED,
        n_s=sets.n_s,
        n_s_prime=sets.n_s_prime,
        kappa=float(np.max(np.abs(S))),
        probability_bound=float(probability),
    )


def sample_row_model(
    n1: int,
    n: int,
    r_b: int,
    rho: float,
    kappa: float = 1.0,
    seed: int = 0,
) -> Tuple[DenseMatrix, DenseMatrix]:
    """
    Random (B, S) pair for the random-row conditions.

    Rows of B are uniform on the unit sphere of a random r_b-dimensional
    subspace of R^n; S is Bernoulli(rho) supported with values uniform on
    [-kappa, kappa].
    """
    if not 1 <= r_b <= n:
        raise InvalidInputError(f"r_b must lie in [1, {n}], got {r_b}")
    if not 0.0 <= rho < 1.0 or kappa <= 0:
        raise InvalidInputError("rho must lie in [0, 1) and kappa must be positive")
    rng = np.random.default_rng(seed & MASK64)
    W, _ = np.linalg.qr(rng.standard_normal((n, r_b)))
    g = rng.standard_normal((n1, r_b))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    B = g @ W.T
    support = rng.random((n1, n)) < rho
    S = np.where(support, rng.uniform(-kappa, kappa, size=(n1, n)), 0.0)
    return B, S


def empirical_permeance(
    n: int, r: int, num_dirs: int = 10000, seed: int = 0, jobs: Optional[int] = 1
) -> Tuple[float, str]:
    """Infimum statistic for n random unit rows in R^r, for checking the bound by Monte Carlo."""
    rng = np.random.default_rng(seed & MASK64)
    g = rng.standard_normal((n, r))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return permeance_infimum(g, None, num_dirs, mix64(seed & MASK64, 1), jobs)

