"""Command-line interface for glelab.

Every experiment subcommand loads a run config, forces its experiment kind,
runs the registered pipeline, writes the artifacts under ``--out`` and exits
0 only when every verdict passes.

Commands:
- simulate: Simulate GLE paths and check basic moments
- homogenize: Effective diffusion by MSD, Green-Kubo and the Poisson route
- whitenoise: Strong convergence to the Langevin limit as epsilon -> 0
- relax: Relative-entropy and observable decay towards the Gibbs law
- shorttime: Short-time smoothing exponents of the semigroup
- poisson: Spectral Poisson solve and the diffusion coefficient it implies
- commutators: Symbolic commutator identities
- lyapunov: Lyapunov drift condition on radial shells
- check: Fast structural invariant suite
- show: Render a saved report
- experiments: List registered experiments
"""

import json
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
    TimeElapsedColumn,
)

from .core.env_vars import load_env_file, resolve_workers
from .core.errors import GleLabError
from .core.loaders import load_config
from .core.logging import setup_logging
from .core.models import ExperimentReport
from .core.storage import load_report
from .display.formatting import (
    estimates_table,
    format_report_markdown,
    summary_table,
    verdicts_table,
)
from .experiments import failure_list, list_experiments, run_experiment

# Load environment variables from .env file
load_env_file()

# Initialize Typer app
app = typer.Typer(
    name="glelab",
    help="glelab - GLE simulation and verification lab",
    add_completion=False,
    no_args_is_help=True,
)

# Initialize Rich console for output
console = Console()

FORMATS = ("table", "json", "markdown")

ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", "-c", help="Run config YAML (defaults used when omitted)"),
]
SeedOption = Annotated[
    Optional[int], typer.Option("--seed", "-s", help="Master seed (unsigned 64-bit)")
]
OutOption = Annotated[
    Optional[Path], typer.Option("--out", "-o", help="Artifact directory")
]
WorkersOption = Annotated[
    Optional[int],
    typer.Option("--workers", "-w", help="Worker threads (overrides GLELAB_WORKERS)"),
]
BudgetOption = Annotated[
    Optional[int], typer.Option("--budget-steps", help="Max steps x replicas")
]
VerboseOption = Annotated[
    bool, typer.Option("--verbose", "-v", help="Enable debug logging")
]
LogFileOption = Annotated[
    Optional[Path], typer.Option("--log-file", help="Also write logs to this file")
]
FormatOption = Annotated[
    str, typer.Option("--format", "-f", help="Output format: table, json, markdown")
]
QuietOption = Annotated[
    bool, typer.Option("--quiet", "-q", help="Suppress progress output")
]


# ============================================================================
# Output
# ============================================================================


def _print_report(report: ExperimentReport, format: str) -> None:
    if format == "json":
        typer.echo(report.model_dump_json(indent=2))
        return
    if format == "markdown":
        typer.echo(format_report_markdown(report))
        return

    console.print()
    console.print(summary_table(report))
    if report.estimates:
        console.print()
        console.print(estimates_table(report))
    console.print()
    console.print(verdicts_table(report))
    if report.failures:
        console.print()
        console.print("[bold red]Failed legs:[/bold red]")
        for failure in report.failures:
            console.print(
                f"  - {failure.get('leg')} [{failure.get('code')}]: {failure.get('message')}"
            )


def _print_error(error: GleLabError, format: str) -> None:
    if format == "json":
        typer.echo(json.dumps({"failures": [error.to_dict()]}, indent=2, ensure_ascii=False))
        return
    console.print(f"[bold red]Error:[/bold red] {error}")
    console.print(f"[dim]{json.dumps([error.to_dict()], ensure_ascii=False)}[/dim]")


# ============================================================================
# Experiment Commands
# ============================================================================


def _run(
    kind: str,
    config: Optional[Path],
    seed: Optional[int],
    out: Optional[Path],
    workers: Optional[int],
    budget_steps: Optional[int],
    verbose: bool,
    log_file: Optional[Path],
    format: str,
    quiet: bool,
) -> None:
    """Shared body of the experiment subcommands."""
    setup_logging(verbose=verbose, log_file=log_file)
    if format not in FORMATS:
        console.print(
            f"[bold red]Error:[/bold red] Unknown format '{format}' "
            f"(expected one of {', '.join(FORMATS)})"
        )
        raise typer.Exit(code=2)

    overrides = {
        "experiment": {"kind": kind},
        "seed": seed,
        "out": None if out is None else str(out),
        "budget": {"steps": budget_steps},
    }

    try:
        run_config = load_config(config, overrides)
        n_workers = resolve_workers(workers)
        out_dir = Path(run_config.out)

        if quiet or format != "table":
            result = run_experiment(run_config, workers=n_workers, out_dir=out_dir)
        else:
            with Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
                TimeElapsedColumn(),
                console=console,
                transient=True,
            ) as progress:
                task = progress.add_task(f"Running {kind}", total=None)

                def progress_callback(stage: str, done: int, total: int) -> None:
                    progress.update(
                        task, completed=done, total=total, description=f"{kind}: {stage} {done}/{total}"
                    )

                result = run_experiment(
                    run_config, workers=n_workers, out_dir=out_dir, progress=progress_callback
                )

    except GleLabError as e:
        _print_error(e, format)
        raise typer.Exit(code=1) from e

    _print_report(result.report, format)
    if format == "table":
        console.print()
        console.print(f"[dim]Artifacts saved to: {out_dir}/[/dim]")

    if not result.passed:
        if format == "table":
            console.print(
                f"[bold red]FAIL:[/bold red] {len(failure_list(result.report))} failure(s), "
                f"see {out_dir / 'failures.json'}"
            )
        raise typer.Exit(code=1)


@app.command()
def simulate(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Simulate GLE paths and check moments (exports trajectories.csv).

    Example:
        $ glelab simulate --config configs/simulate.yaml --out out/sim
    """
    _run("simulate", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def homogenize(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Estimate the effective diffusion coefficient three ways and compare.

    Example:
        $ glelab homogenize --config configs/free-homogenization.yaml --workers 4
    """
    _run("homogenization", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def whitenoise(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Strong error between rescaled GLE paths and the coupled Langevin limit."""
    _run("whitenoise", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def relax(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Relative-entropy and observable decay from a displaced start."""
    _run("relaxation", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def shorttime(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Fit the short-time blow-up exponents of the derivative families."""
    _run("short_time", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def poisson(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Solve L phi = p spectrally and report D (exports generator and phi)."""
    _run("poisson", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def commutators(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Verify the commutator identities symbolically."""
    _run("commutators", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def lyapunov(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Check the Lyapunov drift condition on radial shells."""
    _run("lyapunov", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


@app.command()
def check(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    workers: WorkersOption = None,
    budget_steps: BudgetOption = None,
    verbose: VerboseOption = False,
    log_file: LogFileOption = None,
    format: FormatOption = "table",
    quiet: QuietOption = False,
):
    """Run the fast structural invariant suite.

    Covers FDT, commutators, free-case analytics, generator structure and
    Gibbs stationarity of both integrators.
    """
    _run("check", config, seed, out, workers, budget_steps, verbose, log_file, format, quiet)


# ============================================================================
# Report Commands
# ============================================================================


@app.command()
def show(
    run_dir: Path = typer.Argument(..., help="Artifact directory of a previous run"),
    format: FormatOption = "table",
    no_verify: bool = typer.Option(
        False, "--no-verify", help="Skip the config hash check"
    ),
):
    """Show a saved report, checking it against its effective config."""
    try:
        report = load_report(run_dir, verify_hash=not no_verify)
    except GleLabError as e:
        _print_error(e, format)
        raise typer.Exit(code=1) from e

    _print_report(report, format)
    if not report.passed:
        raise typer.Exit(code=1)


@app.command()
def experiments():
    """List the registered experiment kinds."""
    for kind in list_experiments():
        console.print(kind)


if __name__ == "__main__":
    app()
