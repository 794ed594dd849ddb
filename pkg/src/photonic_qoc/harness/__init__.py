"""Configuration, presets, experiment runs and report emission."""

from .config import (
    ExperimentConfig,
    ExperimentConfigBuilder,
    OptimizerSection,
    SweepSpec,
    config_hash,
    dump_config,
    expand_sweep,
    load_config,
)
from .presets import GATE_POOL, preset, random_gate_set
from .reports import FileReportRepository, InMemoryReportRepository, ReportRepository
from .runner import ExperimentResult, run_experiment

__all__ = [
    "GATE_POOL",
    "ExperimentConfig",
    "ExperimentConfigBuilder",
    "ExperimentResult",
    "FileReportRepository",
    "InMemoryReportRepository",
    "OptimizerSection",
    "ReportRepository",
    "SweepSpec",
    "config_hash",
    "dump_config",
    "expand_sweep",
    "load_config",
    "preset",
    "random_gate_set",
    "run_experiment",
]
