"""Schedule optimizers behind one strategy interface."""

from .base import (
    LoggingObserver,
    Optimizer,
    OptimizerReport,
    ProgressObserver,
    TerminationReason,
    TracePoint,
    TraceRecorder,
)
from .e2e import E2eConfig, EndToEndOptimizer
from .factory import OptimizerFactory, SadeAdamSettings
from .ppo import PpoConfig, PpoOptimizer
from .sade_adam import AdamRefineConfig, HybridSadeAdam, SadeConfig

__all__ = [
    "AdamRefineConfig",
    "E2eConfig",
    "EndToEndOptimizer",
    "HybridSadeAdam",
    "LoggingObserver",
    "Optimizer",
    "OptimizerFactory",
    "OptimizerReport",
    "PpoConfig",
    "PpoOptimizer",
    "ProgressObserver",
    "SadeAdamSettings",
    "SadeConfig",
    "TerminationReason",
    "TracePoint",
    "TraceRecorder",
]
