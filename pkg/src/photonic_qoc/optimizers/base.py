"""Common optimizer interface, progress observers and the run report.

Every optimizer is a strategy with a single ``run(problem, seed)`` entry
point. Progress is pushed to registered observers as :class:`TracePoint`
records; the optimizer itself keeps the best-so-far bookkeeping so traces
are monotone whatever the underlying search does.
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Set

import numpy as np

from ..qsim import ControlProblem

logger = logging.getLogger(__name__)


class TerminationReason(Enum):
    TARGET_REACHED = "target_reached"
    MAX_ITERATIONS = "max_iterations"
    STAGNATION = "stagnation"


@dataclass
class TracePoint:
    """One row of the optimization trace."""

    iteration: int
    best_cost: float
    fidelity: float
    wall_ms: float
    phase: str = ""


class ProgressObserver(ABC):
    """Receives every trace point an optimizer emits."""

    @abstractmethod
    def update(self, point: TracePoint) -> None:
        pass


class TraceRecorder(ProgressObserver):
    def __init__(self):
        self.points: List[TracePoint] = []

    def update(self, point: TracePoint) -> None:
        self.points.append(point)


class LoggingObserver(ProgressObserver):
    """Logs progress at INFO every ``every`` iterations and at DEBUG otherwise."""

    def __init__(self, name: str, every: int = 100):
        self.name = name
        self.every = max(1, every)

    def update(self, point: TracePoint) -> None:
        level = logging.INFO if point.iteration % self.every == 0 else logging.DEBUG
        logger.log(
            level,
            "%s [%s] iter=%d best_cost=%.3e fidelity=%.6f",
            self.name,
            point.phase,
            point.iteration,
            point.best_cost,
            point.fidelity,
        )


@dataclass
class OptimizerReport:
    """Outcome of one optimizer run on one seed.

    Attributes:
        optimizer: Registered optimizer name
        seed: Master seed of the run
        best_schedule: Best voltages found, shape (n_channels, 2, n_segments)
        best_fidelity: Fidelity of ``best_schedule`` on the evaluation grid
        trace: Best-so-far trace, monotone in ``best_cost``
        termination: Why the run stopped
        wall_seconds: Wall-clock duration
        episodes: Iterations (generations + steps, or episodes) used
        details: Optimizer-specific extras such as the phase switch point
    """

    optimizer: str
    seed: int
    best_schedule: np.ndarray
    best_fidelity: float
    trace: List[TracePoint]
    termination: TerminationReason
    wall_seconds: float
    episodes: int
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def final_error(self) -> float:
        return 1.0 - self.best_fidelity

    def summary(self) -> Dict[str, Any]:
        """JSON-ready summary without the trace."""
        return {
            "optimizer": self.optimizer,
            "seed": self.seed,
            "status": "ok",
            "best_fidelity": self.best_fidelity,
            "final_error": self.final_error,
            "termination": self.termination.value,
            "wall_seconds": self.wall_seconds,
            "episodes": self.episodes,
            "best_schedule": self.best_schedule.tolist(),
            "details": self.details,
        }


class Optimizer(ABC):
    """Strategy interface shared by the hybrid, PPO and end-to-end optimizers."""

    name: str = "optimizer"

    def __init__(self):
        self._observers: Set[ProgressObserver] = set()
        self._started = 0.0
        self._best_cost = float("inf")
        self._iteration = 0

    def register_observer(self, observer: ProgressObserver) -> None:
        self._observers.add(observer)

    def remove_observer(self, observer: ProgressObserver) -> None:
        self._observers.discard(observer)

    def notify_observers(self, point: TracePoint) -> None:
        for observer in list(self._observers):
            observer.update(point)

    @abstractmethod
    def run(self, problem: ControlProblem, seed: int) -> OptimizerReport:
        """Optimize the schedule of ``problem`` from ``seed``."""
        pass

    # Bookkeeping helpers for subclasses

    def _start(self) -> TraceRecorder:
        self._started = time.perf_counter()
        self._best_cost = float("inf")
        self._iteration = 0
        recorder = TraceRecorder()
        self.register_observer(recorder)
        return recorder

    def _finish(self, recorder: TraceRecorder) -> float:
        self.remove_observer(recorder)
        return time.perf_counter() - self._started

    def _record(
        self, cost: float, phase: str, iteration: Optional[int] = None
    ) -> TracePoint:
        """Fold ``cost`` into the best-so-far and emit a trace point."""
        self._iteration = self._iteration + 1 if iteration is None else iteration
        self._best_cost = min(self._best_cost, float(cost))
        point = TracePoint(
            iteration=self._iteration,
            best_cost=self._best_cost,
            fidelity=1.0 - self._best_cost,
            wall_ms=(time.perf_counter() - self._started) * 1000.0,
            phase=phase,
        )
        self.notify_observers(point)
        return point
