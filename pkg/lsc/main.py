"""
L + S + C Decomposition Toolkit - Main Entry Point.

CLI interface for generating instances, decomposing matrices, checking the
sufficient recovery conditions and running Monte Carlo experiments.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.logging import RichHandler

from .bench import (
    SparseTableParams,
    SweepSpec,
    profile_from_matrix,
    residual_profile,
    run_recovery_curve,
    run_sparse_table,
    run_sweep,
)
from .config import CONFIG, load_config
from .display import (
    console,
    display_conditions,
    display_curve,
    display_detection,
    display_error,
    display_profile,
    display_sparse_table,
    display_summary,
    display_sweep,
)
from .errors import InvalidInputError, LscError, ResampleNeededError
from .l1_solvers import SolverConfig
from .logger import log_run
from .mat_core import orth_basis, read_matrix_csv, subspace_recovery_error, write_matrix_csv
from .pcp import pcp_decompose, pcp_outlier_decompose, reported_nnz, reported_rank
from .randomized import SketchConfig, randomized_decompose
from .sa import DetectionReport, SaConfig, calibrate_lambda, detect_outliers, sa_decompose
from .synth import MATRIX_FILES, META_FILE, Instance, ModelParams, generate_instance, load_instance, mix64, save_instance
from .theory import column_conditions, nullspace_conditions


log = logging.getLogger("lsc")

DECOMPOSE_METHODS = ("pcp", "pcp-l12", "sa", "randomized")

# Check names accepted by verify, mapped to the check they run
VERIFY_CHECKS = {"column": "column", "nullspace": "nullspace", "lemma1": "column", "theorem2": "nullspace"}

CERTIFICATE_HEADER = ("column_index", "dominant_count", "dominant_fraction", "is_outlier", "converged")

# Desk-scale and full-scale presets: (n1, n2, K, ranks, rhos)
SWEEP_PRESETS = {
    "desk": (120, 120, 60, [2, 6, 10], [0.01, 0.04, 0.07]),
    "full": (400, 400, 200, [2, 10, 20, 30], [0.01, 0.04, 0.07, 0.1]),
}
CURVE_PRESETS = {
    ("k", "desk"): (ModelParams(n1=150, n2=250, rank_r=5, rho=0.01), [0, 10, 25, 50, 75]),
    ("k", "full"): (ModelParams(n1=300, n2=500, rank_r=5, rho=0.01), [0, 25, 50, 100, 150, 200]),
    ("rho", "desk"): (ModelParams(n1=100, n2=400, rank_r=5, num_outliers_k=200), [0.0, 0.005, 0.01, 0.02]),
    ("rho", "full"): (ModelParams(n1=100, n2=400, rank_r=5, num_outliers_k=200), [0.0, 0.005, 0.01, 0.02, 0.04]),
}


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    return [int(v) for v in _floats(text)]


def read_data(path: str) -> Tuple[np.ndarray, Optional[Instance]]:
    """Load D from a CSV file or an instance directory; ground truth when available."""
    src = Path(path)
    if src.is_dir():
        if (src / META_FILE).exists():
            instance = load_instance(src)
            return np.asarray(instance.d), instance
        return read_matrix_csv(src / MATRIX_FILES["d"]), None
    if not src.exists():
        raise InvalidInputError(f"{src} does not exist")
    return read_matrix_csv(src), None


def require_instance(path: str) -> Instance:
    _, instance = read_data(path)
    if instance is None:
        raise InvalidInputError(f"{path} has no ground truth; pass a generated instance directory")
    return instance


def write_json(path: Path, payload: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def model_params(args: argparse.Namespace) -> ModelParams:
    return ModelParams(
        n1=args.n1,
        n2=args.n2,
        rank_r=args.rank,
        rho=args.rho,
        num_outliers_k=args.k,
        sparse_amplitude=args.amplitude,
        num_clusters=args.clusters,
        seed=args.seed,
        outliers_leading=args.leading,
        outlier_scale=args.outlier_scale,
    )


def solver_config(args: argparse.Namespace, config: Dict[str, Any]) -> SolverConfig:
    """SolverConfig from the config file with --max-iters and --tol applied."""
    cfg = SolverConfig.from_config(config)
    if getattr(args, "max_iters", None) is not None:
        cfg = replace(cfg, max_iters=args.max_iters)
    if getattr(args, "tol", None) is not None:
        cfg = replace(cfg, abs_tol=args.tol)
    return cfg


def sa_config(args: argparse.Namespace, config: Dict[str, Any]) -> SaConfig:
    cfg = replace(SaConfig.from_config(config), solver=solver_config(args, config))
    if getattr(args, "lam", None) is not None:
        cfg = replace(cfg, lam=args.lam)
    if getattr(args, "mag_threshold", None) is not None:
        cfg = replace(cfg, mag_threshold=args.mag_threshold)
    if getattr(args, "frac_threshold", None) is not None:
        cfg = replace(cfg, outlier_fraction_threshold=args.frac_threshold)
    return cfg


def with_retries(run: Callable[[int], Any], seed: int, attempts: int) -> Tuple[Any, int]:
    """
    Call run(seed), moving to a derived seed while the sketch misses every inlier.

    Returns the result and the number of resamples it took.
    """
    for attempt in range(max(1, attempts)):
        try:
            return run(seed), attempt
        except ResampleNeededError as e:
            if attempt + 1 >= attempts:
                raise
            seed = mix64(seed, attempt)
            log.warning("%s; resampling with seed %d", e, seed)
    raise AssertionError("unreachable")


def write_certificates(path: Path, report: DetectionReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(CERTIFICATE_HEADER) + "\n")
        for c in report.certificates:
            f.write(f"{c.column_index},{c.dominant_count},{c.dominant_fraction:.10g},"
                    f"{int(c.is_outlier)},{int(c.converged)}\n")


def cmd_generate(args, config) -> Dict[str, Any]:
    instance = generate_instance(model_params(args))
    out = save_instance(instance, args.out)
    summary = {
        "shape": list(instance.d.shape),
        "outliers": len(instance.outlier_indices),
        "sparse_nnz": int(np.count_nonzero(instance.s)),
        "directory": str(out),
    }
    display_summary("Generated instance", summary)
    return summary


def cmd_decompose(args, config) -> Dict[str, Any]:
    D, instance = read_data(args.instance)
    solver = solver_config(args, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    column_part = None
    outliers: Tuple[int, ...] = ()
    extra: Dict[str, Any] = {}

    if args.method == "pcp":
        result = pcp_decompose(D, args.lam if args.lam is not None else "auto", solver)
        low_rank, sparse = result.low_rank, result.sparse
        extra = {"iterations": result.iterations, "converged": result.converged}
    elif args.method == "pcp-l12":
        result = pcp_outlier_decompose(
            D,
            args.lam if args.lam is not None else "auto",
            args.gamma if args.gamma is not None else "auto",
            solver,
        )
        low_rank, sparse, column_part = result.low_rank, result.sparse, result.column_part
        outliers = tuple(int(j) for j in np.flatnonzero(np.linalg.norm(column_part, axis=0) > 1e-6 * max(1.0, np.abs(D).max())))
        extra = {"iterations": result.iterations, "converged": result.converged, "gamma": result.gamma}
    elif args.method == "sa":
        result = sa_decompose(D, sa_config(args, config), args.jobs)
        low_rank, sparse, outliers = result.low_rank, result.sparse, result.outlier_indices
        write_certificates(out / "certificates.csv", result.detection)
        extra = {"timings": result.timings, "non_converged": list(result.detection.non_converged)}
    else:
        if args.m1 is None or args.m2 is None:
            raise InvalidInputError("the randomized method needs --m1 and --m2")

        def run(seed: int):
            cfg = SketchConfig.from_config(args.m1, args.m2, seed, config)
            cfg = replace(cfg, sa=sa_config(args, config), rank_hint=args.rank_hint)
            return randomized_decompose(D, cfg, args.jobs)

        result, resamples = with_retries(run, args.seed, int(config["resample_attempts"]))
        low_rank, sparse, outliers = result.low_rank, result.sparse, result.outlier_indices
        extra = {"m1": args.m1, "m2": args.m2, "resamples": resamples, **result.diagnostics()}
        write_matrix_csv(out / "U_hat.csv", result.basis_u_hat)
        write_json(out / "diagnostics.json", extra)

    write_matrix_csv(out / "L.csv", low_rank)
    write_matrix_csv(out / "S.csv", sparse)
    if column_part is not None:
        write_matrix_csv(out / "C.csv", column_part)
    write_json(out / "outliers.json", {"outlier_indices": list(outliers)})

    summary: Dict[str, Any] = {
        "method": args.method,
        "rank": reported_rank(low_rank),
        "sparse_nnz": reported_nnz(sparse),
        "outliers": len(outliers),
        **extra,
    }
    if instance is not None and reported_rank(low_rank) > 0:
        summary["log_recovery_error"] = subspace_recovery_error(
            instance.true_basis(), orth_basis(low_rank)[:, : instance.params.rank_r]
        )
        summary["outliers_exact"] = set(outliers) == set(instance.outlier_indices)
    write_json(out / "report.json", summary)
    display_summary(f"Decomposition ({args.method})", {k: v for k, v in summary.items() if k != "timings"})
    return summary


def cmd_detect(args, config) -> Dict[str, Any]:
    D, instance = read_data(args.instance)
    report = detect_outliers(D, sa_config(args, config), args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_certificates(out / "certificates.csv", report)
    write_json(out / "outliers.json", {"outlier_indices": list(report.outlier_indices), "lambda": report.lam})
    display_detection(report)

    summary: Dict[str, Any] = {"outliers": len(report.outlier_indices), "lambda": report.lam}
    if instance is not None:
        flagged, truth = set(report.outlier_indices), set(instance.outlier_indices)
        summary["false_positives"] = len(flagged - truth)
        summary["missed"] = len(truth - flagged)
    return summary


def cmd_verify(args, config) -> Dict[str, Any]:
    instance = require_instance(args.instance)
    inliers = list(instance.inlier_indices)
    if args.col not in inliers:
        raise InvalidInputError(f"column {args.col} is not an inlier of {args.instance}")
    B = np.asarray(instance.l)[:, inliers]
    S = np.asarray(instance.s)[:, inliers]
    position = inliers.index(args.col)
    solver = solver_config(args, config)
    check = VERIFY_CHECKS[args.check]

    if check == "column":
        report = column_conditions(B, S, position, args.t1, args.t2, float(config["zero_tol"]), solver)
    else:
        v = np.zeros(B.shape[1])
        v[position] = 1.0
        report = nullspace_conditions(
            B, S, v, num_dirs=args.dirs, seed=args.seed,
            zero_tol=float(config["zero_tol"]), cfg=solver, jobs=args.jobs,
        )

    payload = report.to_dict()
    write_json(Path(args.out) / f"{check}.json", payload)
    console.print_json(json.dumps(payload))
    display_conditions(report, f"{check} conditions for column {args.col}")
    return payload


def cmd_sweep(args, config) -> Dict[str, Any]:
    preset = "full" if args.full else "desk"
    if args.axis1 is None:
        n1, n2, k, ranks, rhos = SWEEP_PRESETS[preset]
        fixed = ModelParams(n1=n1, n2=n2, rank_r=max(ranks), rho=rhos[0], num_outliers_k=k, outliers_leading=True)
        spec = SweepSpec(axis1="rank_r", values1=ranks, axis2="rho", values2=rhos, fixed=fixed)
    else:
        spec = SweepSpec(
            axis1=args.axis1,
            values1=args.values1 or [],
            axis2=args.axis2,
            values2=args.values2 or [],
            fixed=model_params(args),
        )
    spec = replace(spec, method=args.method, rule=args.rule, trials=args.trials,
                   base_seed=args.seed, m1=args.m1, m2=args.m2)

    result = run_sweep(spec, sa_config(args, config), args.jobs, args.out)
    display_sweep(result)
    return {
        "cells": len(result.cells),
        "success_rates": [c.success_rate for c in result.cells],
        "failures": sum(c.failures for c in result.cells),
        "error_types": result.error_types(),
    }


def cmd_sparse_table(args, config) -> Dict[str, Any]:
    params = SparseTableParams(ranks=tuple(args.ranks), seed=args.seed, lam=args.lam, gamma=args.gamma)
    rows = run_sparse_table(params, solver_config(args, config), args.out)
    display_sparse_table(rows)
    return {
        "lambda": params.resolved_lambda(),
        "gamma": params.resolved_gamma(),
        "rows": [[r.r, r.sparse_error, r.control_error] for r in rows],
        "failures": [r.error for r in rows if r.error],
    }


def cmd_curve(args, config) -> Dict[str, Any]:
    fixed, values = CURVE_PRESETS[(args.axis, "full" if args.full else "desk")]
    points = run_recovery_curve(
        args.axis, args.values or values, fixed, args.methods, args.trials,
        args.seed, sa_config(args, config), args.jobs, args.out,
    )
    display_curve(points, args.axis)
    return {"points": [[p.value, p.method, p.mean_log_error] for p in points]}


def cmd_profile(args, config) -> Dict[str, Any]:
    cfg = sa_config(args, config)
    if args.instance:
        D, _ = read_data(args.instance)
        profile = profile_from_matrix(D, args.col, cfg)
    else:
        profile = residual_profile(model_params(args), args.col, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "profile.csv", "w", encoding="utf-8") as f:
        f.write("rank,value\n")
        for i, value in enumerate(profile):
            f.write(f"{i},{value:.10g}\n")
    display_profile(profile, args.col)
    return {"entries_above_mag": int(np.count_nonzero(profile > cfg.mag_threshold))}


def cmd_calibrate(args, config) -> Dict[str, Any]:
    instance = require_instance(args.instance)
    best, margins = calibrate_lambda(instance, sa_config(args, config), jobs=args.jobs)
    summary = {"lambda": best, "margins": {f"{k:g}": v for k, v in margins.items()}}
    display_summary("Lambda calibration", {"lambda": f"{best:.4g}", **summary["margins"]}, ok=max(margins.values()) > 0)
    return summary


def add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("instance model")
    group.add_argument("--n1", type=int, default=100, help="Rows")
    group.add_argument("--n2", type=int, default=200, help="Columns")
    group.add_argument("--rank", type=int, default=5, help="Rank of L")
    group.add_argument("--rho", type=float, default=0.01, help="Sparse corruption probability")
    group.add_argument("--k", type=int, default=0, help="Number of outlier columns")
    group.add_argument("--amplitude", type=float, default=1.0, help="Sparse values are uniform on [-a, a]")
    group.add_argument("--clusters", type=int, default=1, help="Independent subspaces in L")
    group.add_argument("--leading", action="store_true", help="Place outliers in the first K columns")
    group.add_argument("--outlier-scale", type=float, default=1.0, help="Outlier norm over the RMS inlier norm")


def add_solver_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("solver")
    group.add_argument("--tol", type=float, default=None, help="Primal stopping tolerance")
    group.add_argument("--max-iters", type=int, default=None, help="Iteration cap per solve")


def add_threshold_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("outlier certificate")
    group.add_argument("--mag-threshold", type=float, default=None, help="Dominant entry level of the residual")
    group.add_argument("--frac-threshold", type=float, default=None, help="Dominant fraction that flags an outlier")


def add_global_args(parser: argparse.ArgumentParser, config: Dict[str, Any], suppress: bool = False) -> None:
    """Flags accepted before and after the subcommand; suppress keeps the top-level defaults."""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", type=str, default=default(None), help="JSON config file")
    parser.add_argument("--seed", type=int, default=default(config["seed"]), help="Base seed")
    parser.add_argument("--jobs", type=int, default=default(config["jobs"]),
                        help="Worker processes (0 = all cores but one)")
    parser.add_argument("--out", type=str, default=default("out"), help="Output directory")
    parser.add_argument("--no-log", action="store_true", default=default(False), help="Disable run logging")
    parser.add_argument("--verbose", "-v", action="store_true", default=default(False), help="Debug logging")


def build_parser(config: Dict[str, Any]) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsc",
        description="L + S + C matrix decomposition toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate an instance with 20 outlying columns
  python -m lsc generate --n1 100 --n2 200 --rank 5 --rho 0.01 --k 20 --out inst

  # Detect outliers and decompose
  python -m lsc decompose sa --input inst --out result

  # Sketched decomposition
  python -m lsc decompose randomized --input inst --m1 60 --m2 40 --out result

  # Check the sufficient conditions for column 3
  python -m lsc verify column --instance inst --col 3

  # Phase transition sweep (desk-scale preset)
  python -m lsc sweep --jobs 4 --out sweep
"""
    )
    add_global_args(parser, config)
    common = argparse.ArgumentParser(add_help=False)
    add_global_args(common, config, suppress=True)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="Generate a synthetic instance")
    add_model_args(p)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("decompose", parents=[common], help="Decompose a matrix")
    p.add_argument("method", choices=DECOMPOSE_METHODS)
    p.add_argument("--input", "--instance", dest="instance", required=True, help="Instance directory or D.csv")
    p.add_argument("--lambda", dest="lam", type=float, default=config.get("lambda"))
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--m1", type=int, default=None, help="Sampled columns")
    p.add_argument("--m2", type=int, default=None, help="Sampled rows")
    p.add_argument("--rank-hint", type=int, default=None)
    add_solver_args(p)
    add_threshold_args(p)
    p.set_defaults(handler=cmd_decompose)

    p = sub.add_parser("detect", parents=[common], help="Outlier detection only")
    p.add_argument("--input", "--instance", dest="instance", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=config.get("lambda"))
    add_solver_args(p)
    add_threshold_args(p)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("verify", parents=[common], help="Check the sufficient recovery conditions")
    p.add_argument("check", choices=tuple(VERIFY_CHECKS))
    p.add_argument("--input", "--instance", dest="instance", required=True)
    p.add_argument("--col", type=int, required=True)
    p.add_argument("--t1", type=float, default=config["t1"])
    p.add_argument("--t2", type=float, default=config["t2"])
    p.add_argument("--dirs", type=int, default=config["num_dirs"])
    add_solver_args(p)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo phase-transition sweep")
    p.add_argument("--axis1", default=None)
    p.add_argument("--values1", type=_floats, default=None)
    p.add_argument("--axis2", default=None)
    p.add_argument("--values2", type=_floats, default=None)
    p.add_argument("--method", choices=("sa", "randomized", "pcp"), default="sa")
    p.add_argument("--rule", default="outlier_exact")
    p.add_argument("--trials", type=int, default=config["trials"])
    p.add_argument("--m1", type=int, default=None)
    p.add_argument("--m2", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=config.get("lambda"))
    p.add_argument("--full", action="store_true", help="Full-size preset grid")
    add_model_args(p)
    add_solver_args(p)
    add_threshold_args(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("sparse-table", aliases=["table1"], parents=[common], help="Sparse-part recovery of the three-block program")
    p.add_argument("--ranks", type=_ints, default=[2, 5, 10, 15])
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    add_solver_args(p)
    p.set_defaults(handler=cmd_sparse_table)

    p = sub.add_parser("curve", parents=[common], help="Log recovery error against K or rho")
    p.add_argument("--axis", choices=("k", "rho"), default="k")
    p.add_argument("--values", type=_floats, default=None)
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m], default=["pcp", "sa", "median"])
    p.add_argument("--trials", type=int, default=config["trials"])
    p.add_argument("--lambda", dest="lam", type=float, default=config.get("lambda"))
    p.add_argument("--full", action="store_true", help="Full-size preset")
    add_solver_args(p)
    add_threshold_args(p)
    p.set_defaults(handler=cmd_curve)

    p = sub.add_parser("profile", parents=[common], help="Sorted representation residual of one column")
    p.add_argument("--input", "--instance", dest="instance", default=None)
    p.add_argument("--col", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=config.get("lambda"))
    add_model_args(p)
    add_threshold_args(p)
    p.set_defaults(handler=cmd_profile)

    p = sub.add_parser("calibrate", parents=[common], help="Pick lambda on a held-out instance")
    p.add_argument("--input", "--instance", dest="instance", required=True)
    add_solver_args(p)
    add_threshold_args(p)
    p.set_defaults(handler=cmd_calibrate)

    return parser


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _loggable(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k != "handler"}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    config = load_config(known.config) if known.config else CONFIG

    parser = build_parser(config)
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    start = time.perf_counter()
    exit_code = 0
    summary: Dict[str, Any] = {}
    try:
        summary = args.handler(args, config)
    except LscError as e:
        display_error(str(e))
        exit_code = e.exit_code
        summary = {"error": type(e).__name__, "message": str(e)}
    except KeyboardInterrupt:
        console.print("\n[dim]Stopped.[/dim]")
        return 1

    if config.get("enable_run_log", True) and not args.no_log:
        log_run(
            command=args.command,
            parameters=_loggable(args),
            summary=summary,
            exit_code=exit_code,
            duration_sec=time.perf_counter() - start,
            log_dir=config["log_dir"],
        )
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
