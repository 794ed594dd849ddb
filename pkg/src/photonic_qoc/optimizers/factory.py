"""Optimizer factory keyed by the ``kind`` of an experiment's optimizer section."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Type

from .base import Optimizer
from .e2e import E2eConfig, EndToEndOptimizer
from .ppo import PpoConfig, PpoOptimizer
from .sade_adam import AdamRefineConfig, HybridSadeAdam, SadeConfig


@dataclass
class SadeAdamSettings:
    """Both stages of the hybrid optimizer."""

    sade: SadeConfig = field(default_factory=SadeConfig)
    adam: AdamRefineConfig = field(default_factory=AdamRefineConfig)


SETTINGS_TYPES: Dict[str, Type[Any]] = {
    "sade_adam": SadeAdamSettings,
    "ppo": PpoConfig,
    "e2e": E2eConfig,
}


class OptimizerFactory:
    """Creates optimizers from their registered name and settings object."""

    @staticmethod
    def create_optimizer(kind: str, settings: Optional[Any] = None) -> Optimizer:
        """Create an optimizer.

        Args:
            kind: One of :meth:`get_supported_types`
            settings: Settings object of the matching type; ``None`` for defaults

        Returns:
            A fresh optimizer instance

        Raises:
            ValueError: If the kind is unknown or the settings have the wrong type
        """
        settings_type = OptimizerFactory.settings_type(kind)
        if settings is None:
            settings = settings_type()
        if not isinstance(settings, settings_type):
            raise ValueError(
                f"{kind} expects {settings_type.__name__} settings, "
                f"got {type(settings).__name__}"
            )
        if kind == "sade_adam":
            return HybridSadeAdam(settings.sade, settings.adam)
        if kind == "ppo":
            return PpoOptimizer(settings)
        return EndToEndOptimizer(settings)

    @staticmethod
    def settings_type(kind: str) -> Type[Any]:
        if kind not in SETTINGS_TYPES:
            supported = OptimizerFactory.get_supported_types()
            raise ValueError(
                f"Unknown optimizer kind: {kind}. "
                f"Supported types: {', '.join(supported)}"
            )
        return SETTINGS_TYPES[kind]

    @staticmethod
    def get_supported_types() -> List[str]:
        """Get a list of supported optimizer kinds."""
        return list(SETTINGS_TYPES)
