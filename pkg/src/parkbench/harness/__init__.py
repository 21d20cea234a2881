"""Scenario loading, training/evaluation drivers, metrics, and the session server."""

from .corrector import ScriptedCorrector, ScriptedIntervenor
from .evaluation import EvalMetrics, count_gear_shifts, run_evaluation
from .scenario import (
    BUILTIN_SCENARIOS,
    Scenario,
    builtin_scenario,
    load_scenario,
    resolve_scenario,
    save_scenario,
)
from .stats import StatsLogger, read_stats
from .training import TrainConfig, TrainingPolicy, build_training, run_training

__all__ = [
    "BUILTIN_SCENARIOS",
    "EvalMetrics",
    "Scenario",
    "ScriptedCorrector",
    "ScriptedIntervenor",
    "StatsLogger",
    "TrainConfig",
    "TrainingPolicy",
    "build_training",
    "builtin_scenario",
    "count_gear_shifts",
    "load_scenario",
    "read_stats",
    "resolve_scenario",
    "run_evaluation",
    "run_training",
    "save_scenario",
]
