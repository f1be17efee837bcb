"""Configuration parsing, replica orchestration and report emission."""

from .config import ExperimentConfig, parse_config
from .main import main
from .report import emit_report
from .runner import run_experiment

__all__ = ["ExperimentConfig", "emit_report", "main", "parse_config", "run_experiment"]
