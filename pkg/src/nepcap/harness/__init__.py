"""Experiment grid, reporting and the command-line interface."""

from .grid import GridSpec, RunRecord, load_records, run_grid, run_label
from .report import Baseline, load_baselines, render_report

__all__ = [
    "Baseline",
    "GridSpec",
    "RunRecord",
    "load_baselines",
    "load_records",
    "render_report",
    "run_grid",
    "run_label",
]
