"""Experiment orchestration: configs, runs, figures and the CLI."""

from .config import ExperimentConfig, parse_ls, resolve_config
from .plots import plot_covariance_row, plot_curve, render_samples, sample_tiles
from .run import RunResult, compute, run

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "compute",
    "parse_ls",
    "plot_covariance_row",
    "plot_curve",
    "render_samples",
    "resolve_config",
    "run",
    "sample_tiles",
]
