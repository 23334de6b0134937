"""Rich terminal display for ndgd."""

import math

from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from ndgd.experiments import ExperimentResult, Problem
from ndgd.models import Schedule, TrialStats, Verdict


console = Console()

VERDICT_STYLES = {
    Verdict.PASS: "bold green",
    Verdict.FAIL: "bold red",
    Verdict.VACUOUS: "dim",
}


def print_header() -> None:
    console.print()
    console.print("[bold cyan]ndgd[/bold cyan] - Noisy Distributed Gradient Descent")
    console.print()


def create_spinner(message: str) -> Progress:
    """Create a spinner progress indicator."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )


def _fmt(value: float | None, digits: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return f"{value:.{digits}g}"


def print_problem_summary(problem: Problem) -> None:
    """Network, objective and constants of a built problem."""
    table = Table(show_header=False, box=None, padding=(0, 2))
    table.add_column("Label", style="bold")
    table.add_column("Value")

    desc = problem.obj.describe()
    table.add_row("Objective:", f"{desc.get('kind', type(problem.obj).__name__)}  (m={problem.m}, n={problem.n})")
    table.add_row("Edges:", str(len(problem.graph.edges)))
    table.add_row("lambda_min(W):", _fmt(problem.w.lambda_min))
    table.add_row("lambda_2(W):", _fmt(problem.w.lambda_2))
    c = problem.constants
    table.add_row("L_g / L_H / D:", f"{_fmt(c.grad_lipschitz)} / {_fmt(c.hess_lipschitz)} / {_fmt(c.disagreement)}")
    table.add_row("Step:", f"alpha={_fmt(problem.params.alpha)}  sigma={_fmt(problem.params.sigma)}")

    console.print(Panel(table, title="Problem", width=70))


def print_schedule(schedule: Schedule) -> None:
    table = Table(show_header=False, box=None, padding=(0, 2))
    table.add_column("Name", style="bold")
    table.add_column("Value")
    table.add_row("rho", _fmt(schedule.rho))
    table.add_row("alpha", _fmt(schedule.alpha, 8))
    table.add_row("sigma", _fmt(schedule.sigma, 8))
    table.add_row("zeta", _fmt(schedule.zeta, 8))
    table.add_row("K", str(schedule.K) if schedule.K is not None else "unbounded")
    table.add_row("log10 K", _fmt(schedule.log10_K))
    table.add_row("d / r", f"{_fmt(schedule.d)} / {_fmt(schedule.r)}")
    table.add_row("eps_g / eps_H", f"{_fmt(schedule.eps_g)} / {_fmt(schedule.eps_H)}")
    console.print(Panel(table, title="Schedule", width=60))


def print_schedule_sweep(rows: list[tuple[float, Schedule | None, float]]) -> None:
    """One row per rho; infeasible rows show the smallest feasible rho."""
    table = Table(title="Schedule sweep")
    table.add_column("rho", justify="right")
    table.add_column("alpha", justify="right")
    table.add_column("sigma", justify="right")
    table.add_column("zeta", justify="right")
    table.add_column("log10 K", justify="right")

    for rho, schedule, required in rows:
        if schedule is None:
            table.add_row(_fmt(rho), f"[red]infeasible (rho > {_fmt(required)})[/red]", "", "", "")
        else:
            table.add_row(
                _fmt(rho),
                _fmt(schedule.alpha),
                _fmt(schedule.sigma),
                _fmt(schedule.zeta),
                _fmt(schedule.log10_K),
            )
    console.print(table)


def print_escape_table(result: ExperimentResult) -> None:
    """Median iterations to escape per algorithm."""
    table = Table(title="Iterations to escape (median over repeats)")
    table.add_column("Algorithm", style="bold")
    table.add_column("Repeats", justify="right")
    table.add_column("dist < 0.5 d0", justify="right")
    table.add_column("dist < 0.1 d0", justify="right")
    table.add_column("Escaped", justify="right")

    for algorithm, traces in result.traces.items():
        half = result.median_escape(algorithm, 0.5)
        tenth = result.median_escape(algorithm, 0.1)
        table.add_row(
            algorithm.value,
            str(len(traces)),
            _fmt(half) if half is not None else "never",
            _fmt(tenth) if tenth is not None else "never",
            f"{result.escape_rate(algorithm):.0%}",
        )
    console.print(table)


def print_verdicts(results: list[TrialStats]) -> None:
    table = Table(title="Verification")
    table.add_column("Check", style="bold")
    table.add_column("Trials", justify="right")
    table.add_column("Rate", justify="right")
    table.add_column("Bound", justify="right")
    table.add_column("Wilson 95%", justify="right")
    table.add_column("Verdict")

    for stats in results:
        low, high = stats.wilson_interval
        style = VERDICT_STYLES[stats.verdict]
        table.add_row(
            stats.name,
            str(stats.trials),
            f"{stats.empirical_rate:.4f}",
            f"{stats.bound_probability:.4g}",
            f"[{low:.4f}, {high:.4f}]",
            f"[{style}]{stats.verdict.value.upper()}[/{style}]",
        )
    console.print(table)


def print_error(message: str) -> None:
    """Print an error message."""
    console.print(f"[bold red]Error:[/bold red] {message}")


def print_warning(message: str) -> None:
    """Print a warning message."""
    console.print(f"[bold yellow]Warning:[/bold yellow] {message}")


def print_info(message: str) -> None:
    """Print an info message."""
    console.print(f"[dim]{message}[/dim]")


def print_success(message: str) -> None:
    """Print a success message."""
    console.print(f"[bold green]{message}[/bold green]")
