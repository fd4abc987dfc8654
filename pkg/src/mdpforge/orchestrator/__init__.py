"""The outer search loop, baseline modes, persistence and reporting."""

from .config import DEFAULT_BUDGETS, MODES, MUTATORS, ConfigError, RunConfig
from .records import CorruptRunDirectory, load_records, stable_view
from .report import EmptyRun, RetrainResult, RunReport, build_report, report, retrain_best, write_reports
from .run import (
    CASCADE_REJECTED,
    CRASHED,
    EVALUATED,
    INVALID,
    LLM_ERROR,
    PASS,
    REJECT,
    RunState,
    cascade_gate,
    create_run,
    execute,
    load_state,
    replay_archive,
    resume,
    run,
    run_evolution,
    run_independent,
    run_iteration,
)

__all__ = [
    "CASCADE_REJECTED",
    "CRASHED",
    "ConfigError",
    "CorruptRunDirectory",
    "DEFAULT_BUDGETS",
    "EVALUATED",
    "EmptyRun",
    "INVALID",
    "LLM_ERROR",
    "MODES",
    "MUTATORS",
    "PASS",
    "REJECT",
    "RetrainResult",
    "RunConfig",
    "RunReport",
    "RunState",
    "build_report",
    "cascade_gate",
    "create_run",
    "execute",
    "load_records",
    "load_state",
    "replay_archive",
    "report",
    "resume",
    "retrain_best",
    "run",
    "run_evolution",
    "run_independent",
    "run_iteration",
    "stable_view",
    "write_reports",
]
