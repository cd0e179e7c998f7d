"""Experiment driver: configs, training runs, sweeps, solves and reports."""

from .config import ExperimentConfig, config_from_dict, level_instance, load_config
from .metrics import EVAL_HEADER, METRICS_HEADER, EvalRow, Manifest, MetricsRow, read_rows
from .runner import (
    REPORT_HEADER,
    ReportRow,
    eval_sweep,
    run_arch_sweep,
    run_solve,
    run_training,
    tradeoff_report,
    train_run_id,
)

__all__ = [
    "EVAL_HEADER", "METRICS_HEADER", "REPORT_HEADER", "EvalRow", "ExperimentConfig", "Manifest",
    "MetricsRow", "ReportRow", "config_from_dict", "eval_sweep", "level_instance", "load_config",
    "read_rows", "run_arch_sweep", "run_solve", "run_training", "tradeoff_report", "train_run_id",
]
