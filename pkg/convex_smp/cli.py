"""
CLI interface for convex-smp.

Commands: simulate, check-compat, verify-mp, verify-viscosity, all, list-scenarios, version

Exit status: 0 when every executed check passes, 2 when a check fails (a mathematical
finding), 1 on usage, scenario or I/O errors, 130 when interrupted.
"""

import sys
from pathlib import Path
from typing import Optional

import click
import typer
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config import load_config, validate_config
from .pipeline import EXIT_ERROR, VerificationPipeline
from .scenarios import BUILTIN_SCENARIOS, ScenarioError, describe, load_scenario
from .utils import console, setup_logging

try:  # newer typer releases vendor their own copy of click
    from typer._click import exceptions as _typer_click_exc
except ImportError:  # pragma: no cover - typer built on upstream click
    _typer_click_exc = click.exceptions

_UsageErrors = (click.UsageError, _typer_click_exc.UsageError)
_Aborts = (click.Abort, _typer_click_exc.Abort)

# Initialize Typer app
app = typer.Typer(
    name="convex-smp",
    help="Strong maximum principle checks for parabolic systems in convex sets",
    add_completion=False,
)

ScenarioOption = typer.Option(
    ...,
    "--scenario",
    "-s",
    help="Built-in scenario name or path to a scenario file (.json, .yaml)",
)
OutOption = typer.Option(Path("output"), "--out", "-o", help="Output directory for reports")
HOption = typer.Option(None, "--h", help="Grid spacing override")
TEndOption = typer.Option(None, "--t-end", help="Final time override (multiple of the interval)")
SeedOption = typer.Option(None, "--seed", help="Seed for sampling and touching candidates")
TolOption = typer.Option(None, "--tol", help="Residual tolerance for the viscosity checks")
FormatOption = typer.Option("json", "--format", "-f", help="Report format: json or csv-summary")
DumpOption = typer.Option(
    False, "--dump-fields", help="Also write snapshot CSVs and per-node coefficient fields"
)


def _execute(
    command: str,
    scenario: str,
    out: Path,
    h: Optional[float],
    t_end: Optional[float],
    seed: Optional[int],
    tol: Optional[float],
    report_format: str,
    dump_fields: bool = False,
) -> None:
    config = load_config(
        output_dir=out,
        report_format=report_format,
        seed=seed,
        h=h,
        t_end=t_end,
        tol=tol,
        dump_fields=dump_fields,
    )

    # Validate configuration
    errors = validate_config(config)
    if errors:
        console.print("[red bold]Configuration errors:[/red bold]")
        for error in errors:
            console.print(f"  [red]✗[/red] {error}")
        sys.exit(EXIT_ERROR)

    try:
        loaded = load_scenario(scenario)
    except ScenarioError as e:
        console.print(f"[red]{e}[/red]")
        sys.exit(EXIT_ERROR)

    console.print("[dim]Configuration:[/dim]")
    console.print(f"[dim]  Scenario: {loaded.name}[/dim]")
    console.print(f"[dim]  Output: {config.output_dir}[/dim]")
    console.print(f"[dim]  Format: {config.report_format}[/dim]")
    console.print()

    try:
        results = VerificationPipeline(config).run(loaded, command)
    except KeyboardInterrupt:
        console.print("\n\n[yellow]Interrupted by user[/yellow]")
        sys.exit(130)

    code = results.get("exit_code", EXIT_ERROR)
    if code == 0:
        console.print("\n[green bold]✓ All checks passed[/green bold]\n")
    elif code == 2:
        console.print("\n[red bold]✗ Check failed[/red bold]\n")
    else:
        console.print(f"\n[red]Run failed: {results.get('error', 'unknown error')}[/red]\n")
    sys.exit(code)


@app.command()
def simulate(
    scenario: str = ScenarioOption,
    out: Path = OutOption,
    h: Optional[float] = HOption,
    t_end: Optional[float] = TEndOption,
    seed: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    report_format: str = FormatOption,
):
    """
    Integrate a scenario and write snapshot CSVs plus manifest.json.
    """
    _execute("simulate", scenario, out, h, t_end, seed, tol, report_format)


@app.command("check-compat")
def check_compat(
    scenario: str = ScenarioOption,
    out: Path = OutOption,
    h: Optional[float] = HOption,
    t_end: Optional[float] = TEndOption,
    seed: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    report_format: str = FormatOption,
):
    """
    Check phi.nu >= 0 and the left-eigenvector condition on sampled boundary points.
    """
    _execute("check-compat", scenario, out, h, t_end, seed, tol, report_format)


@app.command("verify-mp")
def verify_mp(
    scenario: str = ScenarioOption,
    out: Path = OutOption,
    h: Optional[float] = HOption,
    t_end: Optional[float] = TEndOption,
    seed: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    report_format: str = FormatOption,
    dump_fields: bool = DumpOption,
):
    """
    Simulate, then run the weak and strong maximum principle checks.
    """
    _execute("verify-mp", scenario, out, h, t_end, seed, tol, report_format, dump_fields)


@app.command("verify-viscosity")
def verify_viscosity(
    scenario: str = ScenarioOption,
    out: Path = OutOption,
    h: Optional[float] = HOption,
    t_end: Optional[float] = TEndOption,
    seed: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    report_format: str = FormatOption,
    dump_fields: bool = DumpOption,
):
    """
    Simulate, then check the ell inequality and the supersolution property of d-bar.
    """
    _execute("verify-viscosity", scenario, out, h, t_end, seed, tol, report_format, dump_fields)


@app.command("all")
def run_all(
    scenario: str = ScenarioOption,
    out: Path = OutOption,
    h: Optional[float] = HOption,
    t_end: Optional[float] = TEndOption,
    seed: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    report_format: str = FormatOption,
    dump_fields: bool = DumpOption,
):
    """
    Run compatibility, simulation, maximum principle and viscosity checks in order.
    """
    _execute("all", scenario, out, h, t_end, seed, tol, report_format, dump_fields)


@app.command("list-scenarios")
def list_scenarios():
    """
    List the built-in scenarios.
    """
    table = Table(title="Built-in Scenarios", show_header=True, header_style="bold magenta")
    table.add_column("Name", style="cyan", no_wrap=True)
    table.add_column("Summary", style="white")
    for name in sorted(BUILTIN_SCENARIOS):
        table.add_row(name, describe(load_scenario(name)))
    console.print(table)


@app.command()
def version():
    """
    Show version information.
    """
    console.print(f"[bold cyan]convex-smp[/bold cyan] version [green]{__version__}[/green]")


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version_flag: bool = typer.Option(
        False,
        "--version",
        "-v",
        help="Show version and exit"
    ),
):
    """
    convex-smp - strong maximum principle checks for parabolic systems in convex sets.

    Run 'convex-smp --help' for available commands.
    """
    setup_logging()

    if version_flag:
        console.print(f"[bold cyan]convex-smp[/bold cyan] version [green]{__version__}[/green]")
        raise typer.Exit()

    if ctx.invoked_subcommand is None:
        console.print(Panel(
            "[bold]convex-smp - Maximum Principle Verification[/bold]\n\n"
            "Simulates u_t = D(x,t,u) sum a_ij u_xixj + sum M_i u_xi + phi on a grid and\n"
            "checks that u stays in a convex set K, that touching the boundary forces\n"
            "flatness, and that the distance to the boundary is a supersolution.\n\n"
            "Commands:\n"
            "  [cyan]simulate[/cyan]          Integrate and dump snapshots\n"
            "  [cyan]check-compat[/cyan]      Compatibility of phi, D and M_i with K\n"
            "  [cyan]verify-mp[/cyan]         Weak and strong maximum principle\n"
            "  [cyan]verify-viscosity[/cyan]  Ell inequality and supersolution check\n"
            "  [cyan]all[/cyan]               Everything above, in order\n"
            "  [cyan]list-scenarios[/cyan]    Built-in scenarios\n"
            "  [cyan]version[/cyan]           Show version\n\n"
            "Exit status: 0 pass, 2 check failed, 1 error\n\n"
            "[dim]Example: convex-smp all --scenario heat-interval --out reports/[/dim]",
            title="convex-smp",
            border_style="cyan"
        ))


def run() -> None:
    """Console entry point; usage errors exit with status 1."""
    try:
        code = app(standalone_mode=False)
    except _UsageErrors as e:
        e.show()
        sys.exit(EXIT_ERROR)
    except _Aborts:
        console.print("\n\n[yellow]Interrupted by user[/yellow]")
        sys.exit(130)
    sys.exit(code or 0)


if __name__ == "__main__":
    run()
