"""
Pipeline orchestration for convex-smp.

Runs a scenario through the verification stages in a fixed order:

Stage 1: Compatibility (phi.nu >= 0, inward normals are left eigenvectors)
Stage 2: Simulation (finite-difference trajectory with snapshots)
Stage 3: Maximum principle (weak and strong)
Stage 4: Viscosity layer (ell inequality and supersolution property of d-bar)

Each command runs a subset of the stages. Check failures are reports with pass = false;
only hard errors (a compatibility violation on the contact set, a diverging solver,
an unwritable output directory) stop the run early.
"""

import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn

from .checks import (
    CompatibilityViolation,
    DistanceField,
    distance_field,
    dump_node_fields,
    effective_coefficients,
    ell_report,
    ell_residuals,
    layer_consistency_gap,
    residual_tolerance,
    strong_mp_check,
    summarize_coefficients,
    supersolution_check,
    weak_mp_check,
)
from .config import Config
from .reports import Report, emit_report, summary_csv
from .scenarios import Scenario
from .solver import Trajectory, integrate
from .system import (
    check_compatibility,
    default_compatibility_samples,
    estimate_lipschitz,
    lipschitz_overruns,
)
from .utils import (
    ConvexSMPError,
    console,
    ensure_output_dir,
    format_duration,
    print_artifact_summary,
    print_checks,
    print_pipeline_status,
    print_section,
    save_artifact,
)

COMMAND_STAGES = {
    "simulate": ("simulate",),
    "check-compat": ("compat",),
    "verify-mp": ("simulate", "mp"),
    "verify-viscosity": ("simulate", "viscosity"),
    "all": ("compat", "simulate", "mp", "viscosity"),
}

STAGE_TITLES = {
    "compat": "Stage 1: Compatibility",
    "simulate": "Stage 2: Simulation",
    "mp": "Stage 3: Maximum principle",
    "viscosity": "Stage 4: Viscosity layer",
}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDING = 2


class VerificationPipeline:
    """
    Orchestrates the verification stages for one scenario.

    Intermediate products (trajectory, distance field) are computed once and shared by
    the stages that need them.
    """

    scenario: Scenario
    seed: int

    def __init__(self, config: Config):
        """Initialize pipeline with configuration."""
        self.config = config
        self.trajectory: Optional[Trajectory] = None
        self.dfield: Optional[DistanceField] = None
        self.reports: List[Report] = []
        self.artifacts: List[str] = []

    def run(self, scenario: Scenario, command: str = "all") -> Dict[str, Any]:
        """
        Run the stages of a command on a scenario.

        Args:
            scenario: Validated scenario
            command: One of simulate, check-compat, verify-mp, verify-viscosity, all

        Returns:
            Pipeline execution results, including the exit code under "exit_code"
        """
        if command not in COMMAND_STAGES:
            choices = ", ".join(COMMAND_STAGES)
            raise ValueError(f"Unknown command {command!r} (expected one of {choices})")
        start_time = time.time()
        self.scenario = scenario
        self.seed = scenario.seed if self.config.seed is None else self.config.seed

        print_section(f"CONVEX-SMP: {command} on {scenario.name}", style="blue")
        console.print(f"[dim]{scenario.description}[/dim]\n")

        results: Dict[str, Any] = {
            "scenario": scenario.name,
            "command": command,
            "output_dir": str(self.config.output_dir),
            "start_time": start_time,
            "stages": {},
        }

        title = ""
        try:
            ensure_output_dir(self.config.output_dir)
            for stage in COMMAND_STAGES[command]:
                title = STAGE_TITLES[stage]
                print_pipeline_status(title, "running")
                getattr(self, f"_stage_{stage}")(results)
                failed = any(not r.passed for r in self._stage_reports(results, stage))
                print_pipeline_status(title, "failed" if failed else "completed")
            self._write_summary()
            passed = all(r.passed for r in self.reports)
            results["status"] = "completed" if passed else "failed"
            results["exit_code"] = EXIT_OK if passed else EXIT_FINDING

        except CompatibilityViolation as e:
            print_pipeline_status(title, "stopped")
            console.print(f"\n[red bold]Stopped: {e}[/red bold]")
            results["status"] = "stopped"
            results["error"] = str(e)
            results["exit_code"] = EXIT_FINDING
            self._write_summary()

        except (ConvexSMPError, OSError) as e:
            console.print(f"\n[red bold]Pipeline error: {e}[/red bold]")
            results["status"] = "error"
            results["error"] = str(e)
            results["exit_code"] = EXIT_ERROR

        results["end_time"] = time.time()
        results["duration"] = results["end_time"] - start_time
        results["reports"] = [r.summary_row() for r in self.reports]
        results["artifacts"] = list(self.artifacts)

        self._print_summary(results)
        return results

    def _stage_reports(self, results: Dict[str, Any], stage: str) -> List[Report]:
        names = results["stages"].get(stage, {}).get("reports", [])
        return [r for r in self.reports if r.check in names]

    def _record(self, results: Dict[str, Any], stage: str, *reports: Report) -> None:
        for report in reports:
            self.reports.append(report)
            if self.config.report_format == "json":
                path = emit_report(report, self.config.output_dir, "json")
                self.artifacts.append(path.name)
        results["stages"][stage] = {
            "status": "completed",
            "reports": [r.check for r in reports],
        }

    def _write_summary(self) -> None:
        if self.config.report_format == "csv-summary" and self.reports:
            path = save_artifact(self.config.output_dir, "summary.csv", summary_csv(self.reports))
            self.artifacts.append(path.name)

    def _times(self) -> np.ndarray:
        scenario = self.scenario
        t_end = scenario.t_end if self.config.t_end is None else self.config.t_end
        count = int(round(t_end / scenario.snapshot_interval))
        return np.arange(count + 1) * scenario.snapshot_interval

    def _stage_compat(self, results: Dict[str, Any]) -> None:
        scenario = self.scenario
        tols = scenario.tolerances
        grid = scenario.grid(self.config.h)
        samples = default_compatibility_samples(
            scenario.convex_body,
            grid.interior_coordinates(),
            self._times(),
            boundary_count=tols.boundary_samples,
            vectors_per_point=tols.vectors_per_point,
            seed=self.seed,
        )
        report = check_compatibility(scenario.system, scenario.convex_body, samples, tols.eigen)
        self._record(results, "compat", report)

    def _simulate(self) -> Trajectory:
        if self.trajectory is not None:
            return self.trajectory
        problem = self.scenario.problem(t_end=self.config.t_end, h=self.config.h)
        with Progress(
            TextColumn("[cyan]Integrating[/cyan]"),
            BarColumn(),
            TextColumn("t = {task.fields[t]:.4g}"),
            TimeElapsedColumn(),
            console=console,
            transient=True,
        ) as progress:
            count = max(1, int(round(problem.t_end / problem.snapshot_interval)))
            task = progress.add_task("simulate", total=count, t=0.0)

            def advance(done: int, total: int, t: float) -> None:
                progress.update(task, completed=done, total=total, t=t)

            self.trajectory = integrate(problem, progress=advance)
        return self.trajectory

    def _stage_simulate(self, results: Dict[str, Any]) -> None:
        traj = self._simulate()
        if results["command"] == "simulate" or self.config.dump_fields:
            self.artifacts.extend(p.name for p in traj.dump(self.config.output_dir))
        results["stages"]["simulate"] = {
            "status": "completed",
            "snapshots": len(traj.snapshots),
            "dt": traj.dt,
            "spec_hash": traj.problem.spec_hash,
        }
        console.print(
            f"[dim]  {len(traj.snapshots)} snapshots, grid {traj.grid.shape}, "
            f"dt = {traj.dt:.3e}[/dim]"
        )

    def _distance_field(self) -> DistanceField:
        if self.dfield is None:
            self.dfield = distance_field(self._simulate(), self.scenario.convex_body)
        return self.dfield

    def _stage_mp(self, results: Dict[str, Any]) -> None:
        scenario = self.scenario
        traj = self._simulate()
        weak = weak_mp_check(traj, scenario.convex_body, scenario.tolerances.weak)
        strong = strong_mp_check(
            self._distance_field(), scenario.eps_touch, scenario.eps_flat, weak=weak
        )
        self._record(results, "mp", weak, strong)

    def _stage_viscosity(self, results: Dict[str, Any]) -> None:
        scenario = self.scenario
        tols = scenario.tolerances
        traj = self._simulate()
        dfield = self._distance_field()
        coeffs = effective_coefficients(traj, dfield, tol=tols.eigen)

        estimated, exceeded = None, None
        if tols.lipschitz_pairs > 0:
            S = len(traj.snapshots)
            coords = traj.grid.coordinates.reshape(-1, traj.grid.n)
            estimated = estimate_lipschitz(
                traj.spec,
                np.tile(coords, (S, 1)),
                np.repeat(traj.times, len(coords)),
                traj.values,
                np.random.default_rng(self.seed),
                pairs=tols.lipschitz_pairs,
            )
            exceeded = lipschitz_overruns(traj.spec.lipschitz, estimated)
        summary = summarize_coefficients(coeffs, traj.spec.lipschitz, estimated, exceeded)

        if self.config.tol is not None:
            tol = self.config.tol
        elif tols.residual is not None:
            tol = tols.residual
        else:
            tol = residual_tolerance(traj)

        ell = ell_residuals(dfield, coeffs)
        gap = layer_consistency_gap(dfield, coeffs, ell=ell)
        ell_rep = ell_report(dfield, coeffs, tol, summary)
        super_rep = supersolution_check(
            dfield,
            coeffs,
            tol,
            radius=tols.stencil_radius,
            trials=tols.trials,
            seed=self.seed,
            consistency_gap=gap,
            touch_tol=tols.touching,
        )
        if self.config.dump_fields:
            self.artifacts.append(dump_node_fields(dfield, coeffs, self.config.output_dir).name)
        self._record(results, "viscosity", ell_rep, super_rep)

    def _print_summary(self, results: Dict[str, Any]) -> None:
        """Print pipeline execution summary."""
        print_section("📊 VERIFICATION SUMMARY", style="green")

        status = results.get("status", "unknown")
        status_color = {
            "completed": "green",
            "failed": "red",
            "stopped": "red",
            "error": "red",
        }.get(status, "white")

        console.print(f"[bold]Status:[/bold] [{status_color}]{status}[/{status_color}]")
        console.print(f"[bold]Scenario:[/bold] {results.get('scenario', 'Unknown')}")

        if "duration" in results:
            console.print(f"[bold]Duration:[/bold] {format_duration(results['duration'])}")

        if self.reports:
            console.print()
            print_checks(results["reports"])

        output_dir = Path(results.get("output_dir", "output"))
        if output_dir.exists():
            print_artifact_summary(output_dir, self.artifacts)
