"""
Monte Carlo experiment harness.

run_sweep evaluates a success rule over a one- or two-axis parameter grid,
run_sparse_table measures sparse-part recovery of the three-block convex program,
run_recovery_curve compares subspace recovery of plain PCP, sparse
approximation and the median-subspace baseline, and residual_profile returns
the sorted representation residual of one column.

Every trial draws its own seed from (base_seed, cell, trial), so results do
not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInputError
from .l1_solvers import SolverConfig
from .mat_core import LOG_ERROR_FLOOR, orth_basis, subspace_recovery_error
from .pcp import median_subspace, pcp_decompose, pcp_outlier_decompose
from .randomized import SketchConfig, randomized_decompose, sketch_success
from .sa import SaConfig, column_residual, sa_decompose
from .synth import Instance, ModelParams, generate_instance, mix64
from .workers import parallel_map


log = logging.getLogger(__name__)

SWEEP_HEADER = ("axis1", "axis2", "success_rate", "mean_metric", "trials")
SPARSE_TABLE_HEADER = ("r", "sparse_error", "control_error")
CURVE_HEADER = ("value", "method", "mean_log_error", "trials")
SPEC_SIDECAR = "sweep_spec.json"
FAILURES_SIDECAR = "sweep_failures.json"
TABLE_SIDECAR = "sparse_table.json"

SWEEP_METHODS = ("sa", "randomized", "pcp")
CURVE_METHODS = ("pcp", "sa", "median")
SKETCH_AXES = ("m1", "m2")
FRACTION_AXIS = "outlier_fraction"
RULE_PREFIX = "log_error_below:"

# Alternative names accepted for the success rules
RULE_ALIASES = {"eq17": "sketch_exact"}

# Log error assigned when a method produces no usable basis
FAILED_LOG_ERROR = 0.0

_INT_FIELDS = {f.name for f in fields(ModelParams) if f.type in ("int", int)}
_PARAM_AXES = {f.name for f in fields(ModelParams)} - {"seed", "outliers_leading"}


def _parse_rule(rule: str) -> Tuple[str, Optional[float]]:
    rule = RULE_ALIASES.get(rule, rule)
    if rule in ("outlier_exact", "sketch_exact"):
        return rule, None
    if rule.startswith(RULE_PREFIX):
        try:
            return "log_error_below", float(rule[len(RULE_PREFIX):])
        except ValueError:
            pass
    raise InvalidInputError(
        f"unknown success rule {rule!r}; use outlier_exact, sketch_exact or {RULE_PREFIX}<x>"
    )


@dataclass
class SweepSpec:
    """Grid, fixed instance parameters, method and success rule of a sweep."""
    axis1: str
    values1: List[float]
    fixed: ModelParams
    axis2: Optional[str] = None
    values2: List[float] = field(default_factory=list)
    method: str = "sa"
    rule: str = "outlier_exact"
    trials: int = 10
    base_seed: int = 0
    m1: Optional[int] = None
    m2: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["fixed"] = self.fixed.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> SweepSpec:
        names = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in d.items() if k in names}
        kwargs["fixed"] = ModelParams.from_dict(d["fixed"])
        return cls(**kwargs)

    @property
    def grid(self) -> List[Tuple[float, Optional[float]]]:
        """Cells in row-major order (axis1 outer)."""
        second: Sequence[Optional[float]] = self.values2 if self.axis2 else [None]
        return [(a, b) for a in self.values1 for b in second]

    def validate(self) -> None:
        if not self.values1 or (self.axis2 and not self.values2):
            raise InvalidInputError("sweep grids must be non-empty")
        if self.trials < 1:
            raise InvalidInputError(f"trials must be at least 1, got {self.trials}")
        if self.method not in SWEEP_METHODS:
            raise InvalidInputError(f"method must be one of {SWEEP_METHODS}, got {self.method!r}")
        allowed = _PARAM_AXES | set(SKETCH_AXES) | {FRACTION_AXIS}
        for axis in (self.axis1, self.axis2):
            if axis is not None and axis not in allowed:
                raise InvalidInputError(f"unknown sweep axis {axis!r}")
        if self.axis2 == self.axis1:
            raise InvalidInputError("the two sweep axes must differ")

        rule, _ = _parse_rule(self.rule)
        if rule == "sketch_exact" and self.method != "randomized":
            raise InvalidInputError("the sketch_exact rule applies to the randomized method only")
        if self.method == "randomized":
            axes = {self.axis1, self.axis2}
            for name in SKETCH_AXES:
                if getattr(self, name) is None and name not in axes:
                    raise InvalidInputError(f"the randomized method needs {name}")
        self.fixed.validate()

    def cell_params(self, value1: float, value2: Optional[float]) -> Tuple[ModelParams, Dict[str, int]]:
        """Instance parameters and sketch sizes of one cell."""
        sketch = {name: getattr(self, name) for name in SKETCH_AXES}
        updates: Dict[str, Any] = {}
        fraction = None
        for axis, value in ((self.axis1, value1), (self.axis2, value2)):
            if axis is None:
                continue
            if axis in SKETCH_AXES:
                sketch[axis] = int(value)
            elif axis == FRACTION_AXIS:
                fraction = float(value)
            else:
                updates[axis] = int(value) if axis in _INT_FIELDS else float(value)
        params = replace(self.fixed, **updates)
        if fraction is not None:
            params = replace(params, num_outliers_k=int(round(fraction * params.n2)))
        return params, sketch


@dataclass
class SweepCell:
    """Aggregated trials of one grid cell."""
    value1: float
    value2: Optional[float]
    successes: int
    trials: int
    mean_metric: float
    failures: int = 0
    wall_clock: float = 0.0
    error_types: Dict[str, int] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


@dataclass
class SweepResult:
    """All cells of a sweep in grid order."""
    spec: SweepSpec
    cells: List[SweepCell]

    def rows(self) -> List[Dict[str, str]]:
        return [
            {
                "axis1": _fmt(c.value1),
                "axis2": "" if c.value2 is None else _fmt(c.value2),
                "success_rate": _fmt(c.success_rate),
                "mean_metric": _fmt(c.mean_metric),
                "trials": str(c.trials),
            }
            for c in self.cells
        ]

    def error_types(self) -> Dict[str, int]:
        """Failed trials per exception type over all cells."""
        totals: Dict[str, int] = {}
        for cell in self.cells:
            for name, count in cell.error_types.items():
                totals[name] = totals.get(name, 0) + count
        return totals


@dataclass
class TrialOutcome:
    success: bool
    metric: float
    failed: bool = False
    seconds: float = 0.0
    error: Optional[str] = None


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def _count_errors(errors: Iterable[Optional[str]]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for name in errors:
        if name:
            counts[name] = counts.get(name, 0) + 1
    return counts


def _basis_error(instance: Instance, basis: np.ndarray) -> float:
    if basis.shape[1] == 0:
        return FAILED_LOG_ERROR
    return subspace_recovery_error(instance.true_basis(), basis)


def _run_method(
    instance: Instance,
    method: str,
    sa_cfg: SaConfig,
    sketch: Dict[str, int],
    seed: int,
) -> Tuple[np.ndarray, Tuple[int, ...], Any]:
    """Recovered basis, detected outliers and the raw result."""
    if method == "sa":
        result = sa_decompose(instance.d, sa_cfg)
        return result.basis(), result.outlier_indices, result
    if method == "pcp":
        result = pcp_decompose(instance.d, 1.0 / np.sqrt(instance.d.shape[0]), sa_cfg.solver)
        # learned basis: top rank_r left singular vectors of L_hat
        return orth_basis(result.low_rank)[:, : instance.params.rank_r], (), result
    cfg = SketchConfig(m1=sketch["m1"], m2=sketch["m2"], seed=seed, sa=sa_cfg)
    result = randomized_decompose(instance.d, cfg)
    return result.basis_u_hat, result.outlier_indices, result


def _run_trial(task) -> TrialOutcome:
    params, sketch, method, rule, threshold, sa_cfg, seed = task
    start = time.perf_counter()
    try:
        instance = generate_instance(replace(params, seed=seed))
        basis, outliers, result = _run_method(instance, method, sa_cfg, sketch, seed)
        metric = _basis_error(instance, basis)
        if rule == "sketch_exact":
            success = sketch_success(result, instance.true_basis(), instance.outlier_indices, params.rank_r)
        elif rule == "outlier_exact":
            success = set(outliers) == set(instance.outlier_indices)
        else:
            success = metric < threshold
    except Exception as e:
        log.warning("Trial with seed %d failed: %s: %s", seed, type(e).__name__, e)
        return TrialOutcome(False, FAILED_LOG_ERROR, failed=True,
                            seconds=time.perf_counter() - start, error=type(e).__name__)
    return TrialOutcome(bool(success), float(metric), seconds=time.perf_counter() - start)


def run_sweep(
    spec: SweepSpec,
    sa_cfg: Optional[SaConfig] = None,
    jobs: Optional[int] = 1,
    out_dir: Optional[Union[str, Path]] = None,
) -> SweepResult:
    """
    Run every trial of every cell and aggregate per cell.

    Trial j of cell c uses seed mix64(mix64(base_seed, c), j). A trial that
    raises is counted as unsuccessful with the failed log error and its
    exception type is tallied on the cell. With out_dir, writes sweep.csv,
    sweep_spec.json and, when any trial failed, sweep_failures.json.
    """
    spec.validate()
    sa_cfg = sa_cfg or SaConfig.from_config()
    rule, threshold = _parse_rule(spec.rule)

    grid = spec.grid
    tasks = []
    for c, (v1, v2) in enumerate(grid):
        params, sketch = spec.cell_params(v1, v2)
        params.validate()
        cell_seed = mix64(spec.base_seed, c)
        for j in range(spec.trials):
            tasks.append((params, sketch, spec.method, rule, threshold, sa_cfg, mix64(cell_seed, j)))

    log.info("Sweep: %d cells x %d trials (%s, %s)", len(grid), spec.trials, spec.method, spec.rule)
    outcomes = parallel_map(_run_trial, tasks, jobs)

    cells = []
    for c, (v1, v2) in enumerate(grid):
        chunk = outcomes[c * spec.trials:(c + 1) * spec.trials]
        cells.append(SweepCell(
            value1=float(v1),
            value2=None if v2 is None else float(v2),
            successes=sum(o.success for o in chunk),
            trials=spec.trials,
            mean_metric=float(np.mean([o.metric for o in chunk])),
            failures=sum(o.failed for o in chunk),
            wall_clock=float(sum(o.seconds for o in chunk)),
            error_types=_count_errors(o.error for o in chunk),
        ))

    result = SweepResult(spec=spec, cells=cells)
    if out_dir is not None:
        write_sweep(result, out_dir)
    return result


def write_sweep(result: SweepResult, out_dir: Union[str, Path]) -> Path:
    """Write sweep.csv and sweep_spec.json; returns the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    _write_rows(path, SWEEP_HEADER, result.rows())
    with open(out / SPEC_SIDECAR, "w", encoding="utf-8") as f:
        json.dump(result.spec.to_dict(), f, indent=2, sort_keys=True)

    failed = [
        {"axis1": c.value1, "axis2": c.value2, "failures": c.failures, "error_types": c.error_types}
        for c in result.cells if c.failures
    ]
    if failed:
        with open(out / FAILURES_SIDECAR, "w", encoding="utf-8") as f:
            json.dump(failed, f, indent=2, sort_keys=True)
    return path


def _write_rows(path: Path, header: Sequence[str], rows: List[Dict[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(header), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


@dataclass
class SparseTableParams:
    """Settings of the sparse-recovery table; gamma=None means 3 / sqrt(N2)."""
    n1: int = 200
    n2: int = 400
    rho: float = 0.01
    num_outliers_k: int = 100
    ranks: Tuple[int, ...] = (2, 5, 10, 15)
    seed: int = 0
    lam: Optional[float] = None
    gamma: Optional[float] = None

    def resolved_lambda(self) -> float:
        return self.lam if self.lam is not None else 1.0 / np.sqrt(self.n1)

    def resolved_gamma(self) -> float:
        return self.gamma if self.gamma is not None else 3.0 / np.sqrt(self.n2)

    def metadata(self) -> Dict[str, Any]:
        """Instance settings with the lambda and gamma actually used."""
        out = asdict(self)
        out["ranks"] = list(self.ranks)
        out["lam"] = float(self.resolved_lambda())
        out["gamma"] = float(self.resolved_gamma())
        return out


@dataclass
class SparseTableRow:
    r: int
    sparse_error: float
    control_error: float
    error: Optional[str] = None


def sparse_recovery_error(truth: np.ndarray, estimate: np.ndarray, columns: Sequence[int]) -> float:
    """||S' - S_hat'||_F / ||S'||_F over the given columns."""
    cols = list(columns)
    reference = np.linalg.norm(truth[:, cols], "fro")
    if reference == 0:
        raise InvalidInputError("the sparse part is zero on the evaluated columns")
    return float(np.linalg.norm(truth[:, cols] - estimate[:, cols], "fro") / reference)


def _sparse_table_row(params: SparseTableParams, cfg: SolverConfig, i: int, r: int) -> SparseTableRow:
    lam = params.resolved_lambda()
    full = generate_instance(ModelParams(
        n1=params.n1, n2=params.n2, rank_r=r, rho=params.rho,
        num_outliers_k=params.num_outliers_k, seed=mix64(params.seed, 2 * i),
    ))
    result = pcp_outlier_decompose(full.d, lam, params.resolved_gamma(), cfg)
    error = sparse_recovery_error(full.s, result.sparse, full.inlier_indices)

    control = generate_instance(ModelParams(
        n1=params.n1, n2=params.n2, rank_r=r, rho=params.rho,
        num_outliers_k=0, seed=mix64(params.seed, 2 * i + 1),
    ))
    control_result = pcp_decompose(control.d, lam, cfg)
    control_error = sparse_recovery_error(control.s, control_result.sparse, range(params.n2))
    return SparseTableRow(r=r, sparse_error=error, control_error=control_error)


def run_sparse_table(
    params: Optional[SparseTableParams] = None,
    cfg: Optional[SolverConfig] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> List[SparseTableRow]:
    """
    Sparse-part recovery of the three-block program for each rank.

    The control run uses the same rank with no outliers and no column
    block, which is plain PCP with the same lambda. A rank whose run raises
    gets NaN errors and the exception type. With out_dir, writes
    sparse_table.csv and sparse_table.json with the settings used.
    """
    params = params or SparseTableParams()
    cfg = cfg or SolverConfig.from_config()
    log.info("Sparse table: lambda %.4g, gamma %.4g", params.resolved_lambda(), params.resolved_gamma())
    rows = []

    for i, r in enumerate(params.ranks):
        try:
            row = _sparse_table_row(params, cfg, i, r)
        except Exception as e:
            log.warning("Sparse table r=%d failed: %s: %s", r, type(e).__name__, e)
            row = SparseTableRow(r=r, sparse_error=float("nan"), control_error=float("nan"),
                                 error=type(e).__name__)
        else:
            log.info("Sparse table r=%d: sparse error %.4f, control %.4f", r, row.sparse_error, row.control_error)
        rows.append(row)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "sparse_table.csv", SPARSE_TABLE_HEADER, [
            {"r": str(row.r), "sparse_error": _fmt(row.sparse_error), "control_error": _fmt(row.control_error)}
            for row in rows
        ])
        meta = params.metadata()
        meta["failures"] = {str(row.r): row.error for row in rows if row.error}
        with open(out / TABLE_SIDECAR, "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
    return rows


@dataclass
class CurvePoint:
    value: float
    method: str
    mean_log_error: float
    trials: int


def _curve_trial(task) -> Dict[str, float]:
    params, methods, sa_cfg = task
    errors: Dict[str, float] = {}
    try:
        instance = generate_instance(params)
    except Exception as e:
        log.warning("Instance with seed %d failed: %s: %s", params.seed, type(e).__name__, e)
        return {method: FAILED_LOG_ERROR for method in methods}
    for method in methods:
        try:
            if method == "median":
                basis = median_subspace(instance.d, params.rank_r).basis
            else:
                basis, _, _ = _run_method(instance, method, sa_cfg, {}, params.seed)
            errors[method] = _basis_error(instance, basis)
        except Exception as e:
            log.warning("%s failed on seed %d: %s: %s", method, params.seed, type(e).__name__, e)
            errors[method] = FAILED_LOG_ERROR
    return errors


def run_recovery_curve(
    axis: str,
    values: Sequence[float],
    fixed: ModelParams,
    methods: Sequence[str] = CURVE_METHODS,
    trials: int = 10,
    base_seed: int = 0,
    sa_cfg: Optional[SaConfig] = None,
    jobs: Optional[int] = 1,
    out_dir: Optional[Union[str, Path]] = None,
) -> List[CurvePoint]:
    """
    Mean log-recovery error of each method against the number of outliers (axis 'k') or rho.

    All methods see the same instances.
    """
    if axis not in ("k", "rho"):
        raise InvalidInputError(f"curve axis must be 'k' or 'rho', got {axis!r}")
    unknown = set(methods) - set(CURVE_METHODS)
    if unknown or not methods:
        raise InvalidInputError(f"curve methods must come from {CURVE_METHODS}")
    if trials < 1 or not values:
        raise InvalidInputError("curve needs at least one value and one trial")
    sa_cfg = sa_cfg or SaConfig.from_config()

    tasks = []
    for c, value in enumerate(values):
        key = "num_outliers_k" if axis == "k" else "rho"
        params = replace(fixed, **{key: int(value) if axis == "k" else float(value)})
        params.validate()
        for j in range(trials):
            tasks.append((replace(params, seed=mix64(mix64(base_seed, c), j)), tuple(methods), sa_cfg))

    results = parallel_map(_curve_trial, tasks, jobs)
    points = []
    for c, value in enumerate(values):
        chunk = results[c * trials:(c + 1) * trials]
        for method in methods:
            points.append(CurvePoint(
                value=float(value),
                method=method,
                mean_log_error=float(np.mean([max(e[method], LOG_ERROR_FLOOR) for e in chunk])),
                trials=trials,
            ))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "curve.csv", CURVE_HEADER, [
            {"value": _fmt(p.value), "method": p.method,
             "mean_log_error": _fmt(p.mean_log_error), "trials": str(p.trials)}
            for p in points
        ])
    return points


def residual_profile(
    params: ModelParams, col_index: int, cfg: Optional[SaConfig] = None
) -> np.ndarray:
    """Sorted (descending) |D z*| of one column, normalized by its largest entry."""
    cfg = cfg or SaConfig.from_config()
    instance = generate_instance(params)
    return profile_from_matrix(instance.d, col_index, cfg)


def profile_from_matrix(d: np.ndarray, col_index: int, cfg: Optional[SaConfig] = None) -> np.ndarray:
    """residual_profile on a given matrix."""
    cfg = cfg or SaConfig.from_config()
    if not 0 <= col_index < d.shape[1]:
        raise InvalidInputError(f"column index {col_index} out of range for {d.shape[1]} columns")
    residual, _ = column_residual(d, col_index, cfg.resolve_lambda(d.shape[0]), cfg.solver)
    profile = np.sort(np.abs(residual))[::-1]
    peak = profile[0] if profile.size else 0.0
    return profile / peak if peak > 0 else profile
