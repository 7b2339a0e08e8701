"""
Utility functions for convex-smp.

Helpers for the error hierarchy, logging setup, artifact management and console output.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

# Reports and CSV dumps own stdout and the output directory; humans read stderr.
console = Console(stderr=True)

LOG_ENV_VAR = "CONVEX_SMP_LOG"

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class ConvexSMPError(Exception):
    """Root of every error raised by convex-smp."""


def setup_logging(level: Optional[str] = None) -> int:
    """
    Configure the package logger with a rich handler.

    Args:
        level: One of error, warn, info, debug. Defaults to $CONVEX_SMP_LOG, then warn.

    Returns:
        The numeric logging level that was applied
    """
    name = (level or os.environ.get(LOG_ENV_VAR) or "warn").strip().lower()
    numeric = _LOG_LEVELS.get(name)

    logger = logging.getLogger("convex_smp")
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)

    if numeric is None:
        logger.setLevel(logging.WARNING)
        logger.warning("Unknown %s=%r, using 'warn'", LOG_ENV_VAR, name)
        return logging.WARNING

    logger.setLevel(numeric)
    return numeric


def ensure_output_dir(output_dir: Path) -> Path:
    """
    Create the output directory and make sure it is writable.

    Args:
        output_dir: Directory for reports and dumps

    Returns:
        The directory path

    Raises:
        OSError: If the directory cannot be created or written to
    """
    output_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(output_dir, os.W_OK):
        raise PermissionError(f"Output directory is not writable: {output_dir}")
    return output_dir


def save_artifact(output_dir: Path, filename: str, content: str) -> Path:
    """
    Save a text artifact to the output directory.

    Args:
        output_dir: Directory for this run
        filename: Name of the artifact file
        content: Text to write

    Returns:
        Path to the saved artifact
    """
    file_path = output_dir / filename
    file_path.write_text(content, encoding="utf-8")
    logging.getLogger(__name__).debug("Artifact saved: %s", file_path)
    return file_path


def format_float(value: float) -> str:
    """Render a float with 17 significant digits (round-trips exactly)."""
    return format(float(value), ".17g")


def print_section(title: str, content: str = "", style: str = "blue") -> None:
    """
    Print a formatted section header with optional content.

    Args:
        title: Section title
        content: Optional content to display
        style: Rich color style
    """
    if content:
        console.print(Panel(content, title=title, border_style=style))
    else:
        console.print(f"\n[{style} bold]{'='*60}[/{style} bold]")
        console.print(f"[{style} bold]{title}[/{style} bold]")
        console.print(f"[{style} bold]{'='*60}[/{style} bold]\n")


def print_checks(rows: Iterable[Dict[str, Any]]) -> None:
    """
    Print check outcomes in a formatted table.

    Args:
        rows: Summary rows with check, pass, status and worst keys
    """
    rows = list(rows)
    if not rows:
        console.print("[dim]No checks executed[/dim]")
        return

    table = Table(title="Verification Checks", show_header=True, header_style="bold magenta")
    table.add_column("Check", style="cyan")
    table.add_column("Result", width=8)
    table.add_column("Status", style="yellow")
    table.add_column("Worst", justify="right", style="white")
    table.add_column("Location", style="dim")

    for row in rows:
        result = "[green]PASS[/green]" if row.get("pass") else "[red bold]FAIL[/red bold]"
        worst = row.get("worst")
        table.add_row(
            str(row.get("check", "")),
            result,
            str(row.get("status", "")),
            "" if worst is None else f"{worst:.6g}",
            str(row.get("location", "")),
        )

    console.print(table)


def print_artifact_summary(output_dir: Path, names: Iterable[str]) -> None:
    """
    Print a summary of artifacts written by a run.

    Args:
        output_dir: Directory containing run artifacts
        names: File names written during this run
    """
    console.print("\n[bold cyan]📦 Artifacts Created:[/bold cyan]")

    names = sorted(set(names))
    if not names:
        console.print("[dim]No artifacts written[/dim]")
        return

    table = Table(show_header=True, header_style="bold blue")
    table.add_column("File", style="cyan")
    table.add_column("Size", justify="right", style="green")

    for name in names:
        artifact = output_dir / name
        if artifact.is_file():
            size = artifact.stat().st_size
            size_str = f"{size:,} bytes" if size < 1024 else f"{size/1024:.1f} KB"
            table.add_row(name, size_str)
        elif artifact.is_dir():
            count = sum(1 for _ in artifact.iterdir())
            table.add_row(f"{name}/", f"{count} files")

    console.print(table)
    console.print(f"\n[dim]Output directory: {output_dir}[/dim]\n")


def print_pipeline_status(stage: str, status: str = "running") -> None:
    """
    Print pipeline stage status.

    Args:
        stage: Name of the pipeline stage
        status: running, completed (all reports pass), failed or stopped
    """
    status_icons = {
        "running": "⏳",
        "completed": "✓",
        "failed": "✗",
        "stopped": "■",
    }

    status_colors = {
        "running": "yellow",
        "completed": "green",
        "failed": "red",
        "stopped": "magenta",
    }

    icon = status_icons.get(status, "○")
    color = status_colors.get(status, "white")
    console.print(f"[{color}]{icon} {stage}[/{color}]")


def format_duration(seconds: float) -> str:
    """Run time as "4.2s" or "2m 15s"."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes = int(seconds // 60)
    secs = int(seconds % 60)
    return f"{minutes}m {secs}s"
