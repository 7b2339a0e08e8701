"""
Configuration management for convex-smp.

Run settings that sit on top of a scenario: where reports go, in which format, and the
command-line overrides for grid spacing, horizon, seed and residual tolerance.
"""

import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .reports import REPORT_FORMATS
from .utils import LOG_ENV_VAR


class Config(BaseModel):
    """Main configuration for a convex-smp run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    # Paths
    output_dir: Path = Field(default_factory=lambda: Path("output"))

    # Reports
    report_format: str = "json"
    dump_fields: bool = False

    # Overrides; None keeps the scenario's value
    seed: Optional[int] = None
    h: Optional[float] = None
    t_end: Optional[float] = None
    tol: Optional[float] = None

    log_level: str = Field(default_factory=lambda: os.environ.get(LOG_ENV_VAR, "warn"))


def load_config(
    output_dir: Optional[Path] = None,
    report_format: str = "json",
    seed: Optional[int] = None,
    h: Optional[float] = None,
    t_end: Optional[float] = None,
    tol: Optional[float] = None,
    dump_fields: bool = False,
) -> Config:
    """
    Load configuration.

    Args:
        output_dir: Optional output directory override
        report_format: json or csv-summary
        seed: Seed for touching-candidate and sampling generators
        h: Grid spacing override
        t_end: Horizon override
        tol: Residual tolerance override for the viscosity checks
        dump_fields: Also write per-node d-bar and coefficient fields

    Returns:
        Config object with loaded settings
    """
    return Config(
        output_dir=output_dir or Path("output"),
        report_format=report_format,
        seed=seed,
        h=h,
        t_end=t_end,
        tol=tol,
        dump_fields=dump_fields,
    )


def validate_config(config: Config) -> list[str]:
    """
    Validate configuration and return list of errors.

    Args:
        config: Configuration to validate

    Returns:
        List of error messages (empty if valid)
    """
    errors = []

    if config.report_format not in REPORT_FORMATS:
        errors.append(
            f"Unknown report format: {config.report_format} "
            f"(expected one of {', '.join(REPORT_FORMATS)})"
        )

    if config.h is not None and not config.h > 0:
        errors.append(f"Grid spacing must be positive: {config.h}")

    if config.t_end is not None and config.t_end < 0:
        errors.append(f"t_end must be >= 0: {config.t_end}")

    if config.tol is not None and config.tol < 0:
        errors.append(f"Tolerance must be >= 0: {config.tol}")

    if config.seed is not None and config.seed < 0:
        errors.append(f"Seed must be >= 0: {config.seed}")

    if config.output_dir.exists() and not config.output_dir.is_dir():
        errors.append(f"Output path is not a directory: {config.output_dir}")

    return errors
