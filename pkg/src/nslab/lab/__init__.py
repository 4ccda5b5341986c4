"""Experiment harness: data factories, scenario runners, reports and the CLI."""

from .config import ConfigError, ExperimentConfig
from .data import DatumSpec, make_datum
from .report import Report, Rule, write_report
from .scenarios import run_experiment

__all__ = ["ConfigError", "DatumSpec", "ExperimentConfig", "Report", "Rule", "make_datum", "run_experiment",
           "write_report"]
