"""
Verification report models and their serialization.

Every check produces a pydantic report with a stable field order. JSON output renders
floats with 17 significant digits so a reloaded report compares equal field by field;
the csv-summary format writes one row per check.
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .utils import format_float, save_artifact

REPORT_FORMATS = ("json", "csv-summary")
SUMMARY_COLUMNS = ["check", "pass", "status", "worst", "location"]


class Location(BaseModel):
    """Where a worst case was observed: grid node / snapshot and, for contacts, (v, nu)."""

    x: Optional[List[float]] = None
    t: Optional[float] = None
    node: Optional[List[int]] = None
    snapshot: Optional[int] = None
    v: Optional[List[float]] = None
    nu: Optional[List[float]] = None


class Report(BaseModel):
    """Common envelope: check name, overall verdict and a short status word."""

    model_config = ConfigDict(populate_by_name=True)

    check: str
    passed: bool = Field(alias="pass")
    status: str

    def worst_value(self) -> Optional[float]:
        return None

    def worst_location(self) -> Optional[Location]:
        return None

    def summary_row(self) -> Dict[str, Any]:
        location = self.worst_location()
        return {
            "check": self.check,
            "pass": self.passed,
            "status": self.status,
            "worst": self.worst_value(),
            "location": location.model_dump(exclude_none=True) if location else None,
        }


class CompatibilityReport(Report):
    check: Literal["compatibility"] = "compatibility"
    tolerance: float
    worst_phi_deficit: float
    worst_phi_location: Optional[Location] = None
    worst_D_residual: float
    worst_D_location: Optional[Location] = None
    worst_M_residuals: List[float] = []
    worst_M_locations: List[Optional[Location]] = []
    min_rayleigh_mu: float
    min_D_floor: float
    min_a_floor: float
    positive_definite: bool
    sample_counts: Dict[str, int] = {}

    def worst_value(self) -> Optional[float]:
        return self.worst_phi_deficit

    def worst_location(self) -> Optional[Location]:
        return self.worst_phi_location


class SnapshotValue(BaseModel):
    t: float
    value: float


class WeakMPReport(Report):
    check: Literal["weak_mp"] = "weak_mp"
    tolerance: float
    worst_signed_distance: float
    location: Optional[Location] = None
    premise_worst: float
    per_snapshot: List[SnapshotValue] = []

    def worst_value(self) -> Optional[float]:
        return self.worst_signed_distance

    def worst_location(self) -> Optional[Location]:
        return self.location


class StrongMPReport(Report):
    check: Literal["strong_mp"] = "strong_mp"
    outcome: Literal["never_touches", "flat", "not_flat", "not_applicable"]
    eps_touch: float
    eps_flat: float
    touch_time: Optional[float] = None
    touch_location: Optional[Location] = None
    margin: Optional[float] = None
    worst_flatness: Optional[float] = None
    worst_flatness_location: Optional[Location] = None
    initial_slice_flat: Optional[bool] = None
    min_interior_distance: List[SnapshotValue] = []

    def worst_value(self) -> Optional[float]:
        return self.worst_flatness if self.outcome in ("flat", "not_flat") else self.margin

    def worst_location(self) -> Optional[Location]:
        return self.worst_flatness_location or self.touch_location


class LipschitzSummary(BaseModel):
    c: float
    m: List[float]
    p: float


class CoefficientSummary(BaseModel):
    gamma_min: float
    mu_min: float
    mu_max: float
    max_abs_lambda: List[float]
    alpha_floor_min: float
    alpha_floor_slack_min: float
    min_sampled_D_floor: float
    mu_over_norm_max: float
    lambda_over_norm_max: List[float]
    lipschitz_declared: LipschitzSummary
    lipschitz_estimated: Optional[LipschitzSummary] = None
    lipschitz_exceeded: List[str] = []


class EllResidualReport(Report):
    check: Literal["ell_residuals"] = "ell_residuals"
    tolerance: float
    min_residual: Optional[float] = None
    location: Optional[Location] = None
    checked_nodes: int
    coefficients: CoefficientSummary

    def worst_value(self) -> Optional[float]:
        return self.min_residual

    def worst_location(self) -> Optional[Location]:
        return self.location


class SupersolutionReport(Report):
    check: Literal["supersolution"] = "supersolution"
    tolerance: float
    worst_residual: Optional[float] = None
    location: Optional[Location] = None
    worst_candidate: Optional[Dict[str, Any]] = None
    nodes_checked: int
    candidates_attempted: int
    candidates_accepted: int
    min_attempts_per_node: int
    empty_nodes: int
    skipped_nodes: int = 0
    layer_consistency_gap: Optional[float] = None

    def worst_value(self) -> Optional[float]:
        return self.worst_residual

    def worst_location(self) -> Optional[Location]:
        return self.location


def _encode(value: Any, depth: int = 0) -> str:
    pad = "  " * depth
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value) if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{pad}  {json.dumps(str(key))}: {_encode(item, depth + 1)}"
            for key, item in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(not isinstance(item, (dict, list, tuple)) for item in value):
            return "[" + ", ".join(_encode(item, depth + 1) for item in value) + "]"
        items = [f"{pad}  {_encode(item, depth + 1)}" for item in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def dumps(data: Any) -> str:
    """JSON text with 17-digit floats and non-finite values as null."""
    return _encode(data) + "\n"


def report_to_json(report: Report) -> str:
    return dumps(report.model_dump(by_alias=True))


def summary_csv(reports: Iterable[Report]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for report in reports:
        row = report.summary_row()
        worst = row["worst"]
        location = row["location"]
        writer.writerow([
            row["check"],
            "true" if row["pass"] else "false",
            row["status"],
            "" if worst is None or not math.isfinite(worst) else format_float(worst),
            "" if location is None else json.dumps(location, sort_keys=False),
        ])
    return buffer.getvalue()


def emit_report(report: Report, output_dir: Path, fmt: str = "json") -> Path:
    """
    Write a completed report.

    Args:
        report: The report to write
        output_dir: Destination directory
        fmt: json (full report) or csv-summary (one summary row)

    Returns:
        Path of the written file
    """
    if fmt == "json":
        return save_artifact(output_dir, f"{report.check}.json", report_to_json(report))
    if fmt == "csv-summary":
        return save_artifact(output_dir, f"{report.check}.csv", summary_csv([report]))
    raise ValueError(f"Unknown report format {fmt!r} (expected one of {REPORT_FORMATS})")


def load_report(path: Path) -> Dict[str, Any]:
    """Reload a JSON report as plain data."""
    return json.loads(Path(path).read_text(encoding="utf-8"))
