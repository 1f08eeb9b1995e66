"""
Terminal display for the decomposition toolkit.

Uses Rich for tables and panels; all machine-readable output goes to files.
"""

from typing import Dict, List, Optional, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .bench import CurvePoint, SweepResult, SparseTableRow
from .sa import DetectionReport
from .theory import NOT_CERTIFIED, ConditionReport


console = Console()


def get_status_color(ok: bool) -> str:
    """Green for success, red otherwise."""
    return "green" if ok else "red"


def format_indices(indices: Sequence[int], limit: int = 12) -> str:
    """Compact index list, truncated after limit entries."""
    if not indices:
        return "none"
    shown = ", ".join(str(i) for i in list(indices)[:limit])
    if len(indices) > limit:
        shown += f", ... (+{len(indices) - limit})"
    return shown


def display_summary(title: str, fields: Dict[str, object], ok: bool = True) -> None:
    """Display a key-value summary panel."""
    body = "\n".join(f"  {key}: {value}" for key, value in fields.items())
    console.print()
    console.print(Panel(
        f"[bold]  {title}[/bold]\n{body}",
        border_style=get_status_color(ok)
    ))
    console.print()


def display_detection(report: DetectionReport, limit: int = 20) -> None:
    """Display per-column certificates, outliers first."""
    table = Table(title="Outlier Detection", show_header=True)
    table.add_column("Column", style="cyan", justify="right")
    table.add_column("Dominant", justify="right")
    table.add_column("Fraction", justify="right")
    table.add_column("Outlier", justify="center")

    ordered = sorted(report.certificates, key=lambda c: (not c.is_outlier, c.column_index))
    for cert in ordered[:limit]:
        color = "red" if cert.is_outlier else "white"
        table.add_row(
            str(cert.column_index),
            str(cert.dominant_count),
            f"{cert.dominant_fraction:.3f}",
            f"[{color}]{'yes' if cert.is_outlier else 'no'}[/{color}]",
        )

    console.print()
    console.print(table)
    console.print(f"  Flagged {len(report.outlier_indices)} of {len(report.certificates)} "
                  f"columns (lambda={report.lam:.4g}): {format_indices(report.outlier_indices)}")
    if report.non_converged:
        console.print(f"  [yellow]Not converged:[/yellow] {format_indices(report.non_converged)}")
    console.print()


def display_conditions(report: ConditionReport, title: str) -> None:
    """Display both inequalities of a sufficient-condition check."""
    table = Table(show_header=True, header_style="bold", box=None, padding=(0, 2))
    table.add_column("Inequality", style="dim")
    table.add_column("LHS", justify="right")
    table.add_column("RHS", justify="right")
    table.add_column("Margin", justify="right")

    for name, lhs, rhs in (
        ("first", report.lhs_first, report.rhs_first),
        ("second", report.lhs_second, report.rhs_second),
    ):
        color = get_status_color(lhs > rhs)
        table.add_row(name, f"{lhs:.4g}", f"{rhs:.4g}", f"[{color}]{lhs - rhs:+.4g}[/{color}]")

    color = "red" if report.certification == NOT_CERTIFIED else "green"
    console.print()
    console.print(Panel(f"[bold]  {title}[/bold]", border_style=color))
    console.print(table)
    console.print()
    console.print(f"  n_s={report.n_s}  n_s'={report.n_s_prime}  kappa={report.kappa:.3g}  "
                  f"coherence={report.coherence_ratio:.4g}  |alpha|={report.alpha_norm:.4g}")
    if report.probability_bound is not None:
        console.print(f"  Probability bound: {report.probability_bound:.4f}")
    console.print(f"  [{color}]{report.certification}[/{color}] ({report.infimum_method})")
    console.print()


def display_sweep(result: SweepResult) -> None:
    """Display per-cell success rates."""
    spec = result.spec
    table = Table(title=f"Sweep: {spec.method} / {spec.rule}", show_header=True)
    table.add_column(spec.axis1, style="cyan", justify="right")
    if spec.axis2:
        table.add_column(spec.axis2, style="cyan", justify="right")
    table.add_column("Success", justify="right")
    table.add_column("Mean log error", justify="right")
    table.add_column("Failed", justify="right")

    for cell in result.cells:
        color = "green" if cell.success_rate >= 0.8 else "yellow" if cell.success_rate > 0 else "red"
        row = [f"{cell.value1:g}"]
        if spec.axis2:
            row.append(f"{cell.value2:g}")
        row += [f"[{color}]{cell.success_rate:.2f}[/{color}]", f"{cell.mean_metric:.2f}", str(cell.failures)]
        table.add_row(*row)

    console.print()
    console.print(table)
    console.print()


def display_sparse_table(rows: List[SparseTableRow]) -> None:
    """Display sparse-part recovery errors per rank."""
    table = Table(title="Sparse Component Recovery Error", show_header=True)
    table.add_column("r", style="cyan", justify="right")
    table.add_column("With outliers", justify="right")
    table.add_column("Control (K=0)", justify="right")
    for row in rows:
        if row.error:
            table.add_row(str(row.r), f"[red]{row.error}[/red]", f"[red]{row.error}[/red]")
        else:
            table.add_row(str(row.r), f"{row.sparse_error:.3f}", f"{row.control_error:.3f}")
    console.print()
    console.print(table)
    console.print()


def display_curve(points: List[CurvePoint], axis: str) -> None:
    """Display mean log-recovery errors, one column per method."""
    methods = list(dict.fromkeys(p.method for p in points))
    table = Table(title="Mean Log Recovery Error", show_header=True)
    table.add_column(axis, style="cyan", justify="right")
    for method in methods:
        table.add_column(method, justify="right")

    by_value: Dict[float, Dict[str, float]] = {}
    for p in points:
        by_value.setdefault(p.value, {})[p.method] = p.mean_log_error
    for value, errors in by_value.items():
        table.add_row(f"{value:g}", *(f"{errors[m]:.2f}" for m in methods))

    console.print()
    console.print(table)
    console.print()


def display_profile(profile: Sequence[float], col_index: int, head: Optional[int] = 15) -> None:
    """Display the leading entries of a sorted residual profile."""
    values = list(profile)[:head]
    bars = "\n".join(f"  {v:8.4f} {'█' * int(round(v * 30))}" for v in values)
    console.print()
    console.print(Panel(f"[bold]  Residual profile of column {col_index}[/bold]", border_style="blue"))
    console.print(bars)
    console.print()


def display_error(message: str) -> None:
    """Display an error message."""
    console.print(f"[bold red]Error:[/bold red] {message}")
