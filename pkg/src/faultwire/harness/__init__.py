"""Experiment orchestration, metrics and reporting."""

from .clock import VirtualScheduler
from .experiment import (
    ExperimentSpec,
    Harness,
    LogEntry,
    MessageLog,
    builtin_experiments,
    get_experiment,
    run_experiment,
)
from .metrics import AlarmSignal, MetricsReport, TransitionCounts, overlap, transitions
from .report import emit_report

__all__ = [
    "AlarmSignal",
    "ExperimentSpec",
    "Harness",
    "LogEntry",
    "MessageLog",
    "MetricsReport",
    "TransitionCounts",
    "VirtualScheduler",
    "builtin_experiments",
    "emit_report",
    "get_experiment",
    "overlap",
    "run_experiment",
    "transitions",
]
