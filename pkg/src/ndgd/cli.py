"""CLI for ndgd."""

import dataclasses
import logging
import sys
import time
from pathlib import Path

import rich_click as click
from rich.logging import RichHandler

from ndgd import display
from ndgd.display import console

# Configure rich-click for pretty help output
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.USE_MARKDOWN = True
click.rich_click.SHOW_ARGUMENTS = True
click.rich_click.GROUP_ARGUMENTS_OPTIONS = True
click.rich_click.STYLE_ERRORS_SUGGESTION = "magenta italic"
click.rich_click.ERRORS_SUGGESTION = "Try running '--help' for more information."
click.rich_click.MAX_WIDTH = 100
click.rich_click.STYLE_OPTION = "bold cyan"
click.rich_click.STYLE_ARGUMENT = "bold cyan"
click.rich_click.STYLE_COMMAND = "bold green"
click.rich_click.STYLE_SWITCH = "bold yellow"
from ndgd.config import ConfigError, load_config
from ndgd.engine import DivergenceError, ScheduleInfeasibleError, build_schedule
from ndgd.experiments import BuildError, ExperimentRunner, build_components, build_problem, schedule_for
from ndgd.models import DomainBox, ParameterError, RegularityConstants, SpectralSummary
from ndgd.objectives import ObjectiveError
from ndgd.results import save_experiment, save_partial_trace
from ndgd.topology import TopologyError
from ndgd.verification import SUITES, VerificationSuite, has_failures, write_report


SWEEP_RHOS = (1.0, 4.0, 16.0, 64.0, 256.0)

EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3

BUILD_ERRORS = (ConfigError, BuildError, ObjectiveError, TopologyError, ParameterError)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


@click.group()
@click.option(
    "--verbose", "-v", is_flag=True,
    help="Log graph construction, resampling, schedule feasibility and early stops."
)
def cli(verbose):
    """**ndgd** - Noisy distributed gradient descent experiments.

    Runs decentralized gradient descent (DGD) and its perturbed variant
    (NDGD) on a network of agents, derives the step-size/noise schedule
    from a confidence parameter, and checks the probabilistic bounds
    behind saddle-point escape by Monte Carlo.

    **Examples:**

        ndgd run configs/quartic.toml        Compare DGD and NDGD escape times

        ndgd verify all --rho 6 --seed 42    Run every verification suite

        ndgd schedule --rho 4                Print the schedule at rho = 4

        ndgd schedule --sweep                Schedule over rho in {1, 4, 16, 64, 256}
    """
    _setup_logging(verbose)


@cli.command()
@click.argument("config_path", metavar="CONFIG", type=click.Path(path_type=Path))
def run(config_path: Path):
    """Run the experiment described by a TOML configuration.

    Every listed algorithm starts from the same point on the same network
    and draws noise from its own stream. Traces, trajectories and a
    metadata sidecar are written to the output directory.

    **Exit codes:**

        0   success
        1   invalid configuration
        2   schedule infeasible at the configured rho
        3   an iterate diverged (the finite prefix is written)
    """
    display.print_header()
    try:
        config = load_config(config_path)
        problem = build_problem(config)
    except ScheduleInfeasibleError as e:
        display.print_error(str(e))
        sys.exit(EXIT_INFEASIBLE)
    except BUILD_ERRORS as e:
        display.print_error(str(e))
        sys.exit(EXIT_CONFIG)

    display.print_problem_summary(problem)
    if problem.schedule is not None:
        display.print_schedule(problem.schedule)
    else:
        display.print_warning(f"no feasible schedule at rho={config.run.rho:g}; no bounds reported for this run")

    runner = ExperimentRunner(config, problem)
    start = time.perf_counter()
    try:
        with display.create_spinner("Running") as progress:
            task = progress.add_task("Running", total=None)
            result = runner.run(
                on_progress=lambda alg: progress.update(task, description=f"Running {alg.value}")
            )
    except DivergenceError as e:
        path = save_partial_trace(config, e.trace, problem.m)
        display.print_error(f"{e} (partial trace written to {path})")
        sys.exit(EXIT_DIVERGED)
    except BuildError as e:
        display.print_error(str(e))
        sys.exit(EXIT_CONFIG)
    elapsed = time.perf_counter() - start

    written = save_experiment(config, result, elapsed)
    display.print_escape_table(result)
    display.print_success(f"Wrote {len(written)} files to {config.output.directory}")


@cli.command()
@click.argument("suite", type=click.Choice(["all", *SUITES]))
@click.option("--rho", default=6.0, show_default=True, type=float, help="Confidence parameter of the schedule.")
@click.option("--trials", default=2000, show_default=True, type=int, help="Monte Carlo trials per check.")
@click.option("--seed", default=0, show_default=True, type=int, help="Master seed.")
@click.option(
    "--output", "-o", default="verification.json", show_default=True,
    type=click.Path(path_type=Path), help="Where to write the JSON report."
)
def verify(suite: str, rho: float, trials: int, seed: int, output: Path):
    """Check the probabilistic and exact bounds by simulation.

    Each check reports its empirical rate with a Wilson 95% interval and a
    verdict: lower bounds pass when the interval reaches the bound, tail
    upper bounds pass when the interval reaches below it, and bounds that
    clamp to 0 or 1 are reported as vacuous.

    Exits 1 if any check fails. Reports are byte-identical for a fixed
    seed.
    """
    try:
        checker = VerificationSuite(rho=rho, trials=trials, seed=seed)
        with display.create_spinner("Verifying") as progress:
            progress.add_task(f"Verifying {suite}", total=None)
            results = checker.run(suite)
    except (ParameterError, ScheduleInfeasibleError) as e:
        display.print_error(str(e))
        sys.exit(1)

    write_report(results, output)
    display.print_verdicts(results)
    display.print_info(f"Report written to {output}")
    sys.exit(1 if has_failures(results) else 0)


def _override(value: float | None, default: float) -> float:
    return default if value is None else value


@cli.command()
@click.option("--rho", default=4.0, show_default=True, type=float, help="Confidence parameter.")
@click.option("--config", "config_path", default=None, type=click.Path(path_type=Path),
              help="Derive network and constants from an experiment configuration.")
@click.option("--sweep", is_flag=True, help="Tabulate rho in {1, 4, 16, 64, 256}.")
@click.option("--lambda-min", type=float, default=None, help="Override lambda_min(W) (default 0.5).")
@click.option("--lambda-2", "lambda_2", type=float, default=None, help="Override lambda_2(W) (default 0.5).")
@click.option("--lg", type=float, default=None, help="Override the gradient Lipschitz constant (default 6).")
@click.option("--lh", type=float, default=None, help="Override the Hessian Lipschitz constant (default 50).")
@click.option("--disagreement", type=float, default=None, help="Override the gradient disagreement D (default 1).")
@click.option("--m", "agents", type=int, default=20, show_default=True, help="Agents, without --config.")
@click.option("--n", "dim", type=int, default=2, show_default=True, help="Dimension, without --config.")
def schedule(rho, config_path, sweep, lambda_min, lambda_2, lg, lh, disagreement, agents, dim):
    """Print step size, noise level, consensus bound and horizon.

    Without `--config` the network and constants come from the override
    options and their defaults; K is then reported as unbounded because no
    objective fixes Q_alpha(x0) - sum f_i^*.

    Exits 2 when the schedule is infeasible (with the smallest feasible
    rho), or with `--sweep` when every row is infeasible.
    """
    try:
        if config_path is not None:
            parts = build_components(load_config(config_path))
            spectrum = SpectralSummary(
                _override(lambda_min, parts.w.lambda_min),
                _override(lambda_2, parts.w.lambda_2),
            )
            constants = dataclasses.replace(
                parts.constants,
                grad_lipschitz=_override(lg, parts.constants.grad_lipschitz),
                hess_lipschitz=_override(lh, parts.constants.hess_lipschitz),
                disagreement=_override(disagreement, parts.constants.disagreement),
            )

            def derive(r: float):
                return schedule_for(parts, r, spectrum, constants)
        else:
            spectrum = SpectralSummary(
                _override(lambda_min, 0.5),
                _override(lambda_2, 0.5),
            )
            constants = RegularityConstants(
                grad_lipschitz=_override(lg, 6.0),
                hess_lipschitz=_override(lh, 50.0),
                disagreement=_override(disagreement, 1.0),
                f_star_sum=float("-inf"),
                domain_box=DomainBox.cube(-1.0, 1.0, dim),
            )

            def derive(r: float):
                return build_schedule(r, constants, spectrum, agents, dim)

        if sweep:
            rows = []
            for r in SWEEP_RHOS:
                try:
                    rows.append((r, derive(r), 0.0))
                except ScheduleInfeasibleError as e:
                    rows.append((r, None, e.required_rho))
            display.print_schedule_sweep(rows)
            if all(s is None for _, s, _ in rows):
                display.print_error("no rho in the sweep is feasible")
                sys.exit(EXIT_INFEASIBLE)
            return

        display.print_schedule(derive(rho))
        display.print_success("feasible: lambda_2 + alpha L_g < 1")
    except ScheduleInfeasibleError as e:
        display.print_error(str(e))
        display.print_info(f"hint: use rho > {e.required_rho:.6g}")
        sys.exit(EXIT_INFEASIBLE)
    except BUILD_ERRORS as e:
        display.print_error(str(e))
        sys.exit(EXIT_CONFIG)


@cli.command()
def version():
    """Show version and numerical library versions."""
    import networkx
    import numpy
    import scipy

    from ndgd import __version__

    console.print(f"ndgd version {__version__}")
    console.print()
    console.print(f"  numpy     {numpy.__version__}")
    console.print(f"  scipy     {scipy.__version__}")
    console.print(f"  networkx  {networkx.__version__}")


def main():
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
