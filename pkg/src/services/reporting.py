"""Persist traces as CSV and certification reports as JSON."""
import csv
from pathlib import Path
from typing import Optional

from src.log import get_logger
from src.models import IterationTrace
from src.schemas import CertificationReport

logger = get_logger(__name__)

TRACE_HEADER = ["n", "residual", "alpha_n", "beta_n"]


def format_float(value: float) -> str:
    """17 significant digits, '.' decimal, no grouping."""
    return f"{value:.17g}"


def trace_rows(trace: IterationTrace) -> list[list[str]]:
    """One row per index 0..horizon; alpha_n and beta_n are empty at the final index and when absent."""
    rows = []
    for n, residual in enumerate(trace.residuals):
        alpha = format_float(trace.alphas[n]) if n < trace.horizon else ""
        beta = format_float(trace.betas[n]) if trace.betas is not None and n < trace.horizon else ""
        rows.append([str(n), format_float(residual), alpha, beta])
    return rows


def write_trace_csv(trace: IterationTrace, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(trace_rows(trace))
    logger.info("wrote trace %s", path)
    return path


def write_report_json(report: CertificationReport, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("wrote report %s", path)
    return path


def resolve_output(configured: Optional[str], out_dir: Path, default_name: str) -> Path:
    """Relative configured paths live under the output directory."""
    if configured is None:
        return out_dir / default_name
    path = Path(configured)
    return path if path.is_absolute() else out_dir / path
