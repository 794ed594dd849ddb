"""Hybrid optimizer: self-adaptive differential evolution, then Adam refinement.

SADE explores the flattened schedule until the gate fidelity passes a
switch threshold. Adam then polishes the best individual with exact
gradients, decaying its learning rate as the fidelity crosses fixed
milestones.
"""

import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..diffengine import value_and_grad
from ..hwmodel import V_MAX, V_MIN, HardwareModel
from ..nn import AdamState, adam_step
from ..qsim import ControlProblem, PhysicalConstants, QuantumTask
from .base import Optimizer, OptimizerReport, TerminationReason

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int], np.random.Generator]


@dataclass
class SadeConfig:
    """Differential-evolution settings.

    Attributes:
        popsize: Population size P
        max_generations: Generation budget G
        switch_fidelity: Fidelity at which SADE hands over to Adam
        mutation_range: Bounds of the mutation factor mu
        crossover_range: Bounds of the crossover rate CR
        adaptation_window: Generations of successes averaged for (mu, CR)
        adaptation_sigma: Spread of the normal draws around the success means
        init_perturbation: Half-width (V) of the uniform spread around x0
        init: ``"random"`` (uniform in the voltage bounds) or ``"zeros"``
        n_workers: Parallel cost evaluations; 1 evaluates in-process
    """

    popsize: int = 32
    max_generations: int = 500
    switch_fidelity: float = 0.95
    mutation_range: Tuple[float, float] = (0.1, 0.9)
    crossover_range: Tuple[float, float] = (0.1, 0.9)
    adaptation_window: int = 20
    adaptation_sigma: float = 0.1
    init_perturbation: float = 1.0
    init: str = "random"
    n_workers: int = 1

    def __post_init__(self):
        self.mutation_range = tuple(self.mutation_range)
        self.crossover_range = tuple(self.crossover_range)
        if self.popsize < 4:
            raise ValueError("popsize must be at least 4")
        if self.max_generations < 1:
            raise ValueError("max_generations must be at least 1")
        ranges = (
            ("mutation", self.mutation_range),
            ("crossover", self.crossover_range),
        )
        for name, (lo, hi) in ranges:
            if not 0.0 < lo <= hi < 1.0:
                raise ValueError(f"{name} range must lie within (0, 1)")
        if self.adaptation_window < 1:
            raise ValueError("adaptation_window must be at least 1")
        if self.init not in ("random", "zeros"):
            raise ValueError(f"Unknown init mode: {self.init}")


@dataclass
class AdamRefineConfig:
    """Adam refinement settings with fidelity-triggered learning-rate decay."""

    lr: float = 1e-4
    decay_thresholds: List[float] = field(
        default_factory=lambda: [0.98, 0.99, 0.995, 0.997]
    )
    decay_factors: List[float] = field(default_factory=lambda: [0.5, 0.2, 0.5, 0.2])
    stop_fidelity: float = 0.999
    stagnation_window: int = 500
    improvement_eps: float = 1e-6
    stagnation_decay: float = 0.5
    max_steps: int = 5000
    grad_clip: Optional[float] = 1.0

    def __post_init__(self):
        if len(self.decay_thresholds) != len(self.decay_factors):
            raise ValueError("one decay factor per threshold is required")
        thresholds = self.decay_thresholds
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("decay thresholds must be strictly increasing")
        if any(not 0.0 < f < 1.0 for f in self.decay_factors):
            raise ValueError("decay factors must lie in (0, 1)")
        if not 0.0 < self.stagnation_decay <= 1.0:
            raise ValueError("stagnation_decay must lie in (0, 1]")
        if self.lr < 0 or self.max_steps < 0 or self.stagnation_window < 1:
            raise ValueError("lr, max_steps and stagnation_window must be non-negative")


@dataclass
class SadeResult:
    best_x: np.ndarray
    best_cost: float
    trace: List[float]
    generations: int
    reason: TerminationReason


@dataclass
class AdamResult:
    best_x: np.ndarray
    best_fidelity: float
    trace: List[float]
    steps: int
    reason: TerminationReason
    final_lr: float


# Differential evolution


def mutate(
    x_a: np.ndarray,
    x_b: np.ndarray,
    x_c: np.ndarray,
    mu: float,
    bounds: Tuple[float, float] = (V_MIN, V_MAX),
) -> np.ndarray:
    """DE/rand/1 mutant x_a + mu (x_b - x_c), clamped to ``bounds``."""
    return np.clip(x_a + mu * (x_b - x_c), bounds[0], bounds[1])


def crossover(
    parent: np.ndarray, mutant: np.ndarray, CR: float, seed: SeedLike
) -> np.ndarray:
    """Binomial crossover with one forced mutant component."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    take = rng.random(parent.shape) < CR
    take.flat[rng.integers(parent.size)] = True
    return np.where(take, mutant, parent)


def _window_mean(history: Deque[List[float]], default: float) -> float:
    values = [v for generation in history for v in generation]
    return float(np.mean(values)) if values else default


def sade_run(
    cost: Callable[[np.ndarray], float],
    cfg: SadeConfig,
    x0: np.ndarray,
    seed: int = 0,
    bounds: Tuple[float, float] = (V_MIN, V_MAX),
    on_generation: Optional[Callable[[int, float], None]] = None,
) -> SadeResult:
    """Minimize ``cost`` with self-adaptive DE starting around ``x0``.

    Each individual draws (mu, CR) from normals centred on the means of the
    values that produced successful trials over the adaptation window. The
    random stream of individual i in generation g is seeded by (seed, g, i),
    so parallel evaluation gives the same result as serial.

    Args:
        cost: Function to minimize; must be picklable when ``n_workers > 1``
        cfg: Population and adaptation settings
        x0: Centre of the initial population
        seed: Master seed
        bounds: Box constraint applied to every individual
        on_generation: Called with (generation, best cost) after every generation

    Returns:
        A :class:`SadeResult` with the best point and the per-generation trace
    """
    x0 = np.clip(np.asarray(x0, dtype=float), bounds[0], bounds[1])
    dim = x0.size
    target_cost = 1.0 - cfg.switch_fidelity

    init_rng = np.random.default_rng([seed, 0])
    half = cfg.init_perturbation
    spread = init_rng.uniform(-half, half, size=(cfg.popsize - 1, dim))
    population = np.clip(np.vstack([x0, x0 + spread]), bounds[0], bounds[1])

    executor = None
    if cfg.n_workers > 1:
        executor = ProcessPoolExecutor(max_workers=cfg.n_workers)

    def evaluate(xs: List[np.ndarray]) -> List[float]:
        if executor is not None:
            return list(executor.map(cost, xs))
        return [cost(x) for x in xs]

    try:
        costs = np.asarray(evaluate(list(population)), dtype=float)
        best = int(np.argmin(costs))
        trace = [float(costs[best])]
        if on_generation:
            on_generation(0, trace[-1])

        mu_hist: Deque[List[float]] = deque(maxlen=cfg.adaptation_window)
        cr_hist: Deque[List[float]] = deque(maxlen=cfg.adaptation_window)
        reason = TerminationReason.MAX_ITERATIONS
        generation = 0
        if costs[best] <= target_cost:
            reason = TerminationReason.TARGET_REACHED

        while (
            reason is not TerminationReason.TARGET_REACHED
            and generation < cfg.max_generations
        ):
            generation += 1
            mu_mean = _window_mean(mu_hist, float(np.mean(cfg.mutation_range)))
            cr_mean = _window_mean(cr_hist, float(np.mean(cfg.crossover_range)))

            trials, params = [], []
            for i in range(cfg.popsize):
                rng = np.random.default_rng([seed, generation, i])
                mu = rng.normal(mu_mean, cfg.adaptation_sigma)
                mu = float(np.clip(mu, *cfg.mutation_range))
                cr = rng.normal(cr_mean, cfg.adaptation_sigma)
                cr = float(np.clip(cr, *cfg.crossover_range))
                others = [j for j in range(cfg.popsize) if j != i]
                a, b, c = rng.choice(others, size=3, replace=False)
                mutant = mutate(population[a], population[b], population[c], mu, bounds)
                trials.append(crossover(population[i], mutant, cr, rng))
                params.append((mu, cr))

            trial_costs = evaluate(trials)
            mu_ok, cr_ok = [], []
            for i, trial_cost in enumerate(trial_costs):
                if trial_cost < costs[i]:
                    population[i] = trials[i]
                    costs[i] = trial_cost
                    mu_ok.append(params[i][0])
                    cr_ok.append(params[i][1])
            mu_hist.append(mu_ok)
            cr_hist.append(cr_ok)

            best = int(np.argmin(costs))
            trace.append(float(costs[best]))
            if on_generation:
                on_generation(generation, trace[-1])
            logger.debug(
                "generation %d best=%.4e successes=%d mu=%.3f cr=%.3f",
                generation,
                trace[-1],
                len(mu_ok),
                mu_mean,
                cr_mean,
            )
            if costs[best] <= target_cost:
                reason = TerminationReason.TARGET_REACHED
    finally:
        if executor:
            executor.shutdown()

    return SadeResult(
        best_x=population[best].copy(),
        best_cost=float(costs[best]),
        trace=trace,
        generations=generation,
        reason=reason,
    )


# Adam refinement


def scheduled_lr(cfg: AdamRefineConfig, best_fidelity: float) -> float:
    """Learning rate after every milestone up to ``best_fidelity`` was crossed."""
    lr = cfg.lr
    for threshold, factor in zip(cfg.decay_thresholds, cfg.decay_factors):
        if best_fidelity >= threshold:
            lr *= factor
    return lr


def adam_refine(
    problem: ControlProblem,
    x_start: np.ndarray,
    cfg: AdamRefineConfig,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> AdamResult:
    """Gradient refinement of a schedule vector with best-iterate reporting.

    The learning rate is multiplied by ``decay_factors[k]`` once the fidelity
    first reaches ``decay_thresholds[k]``. Improvement is measured against the
    best fidelity at the start of the current window, so a slow steady climb
    still counts. A window that gains no more than ``improvement_eps`` decays
    the rate once more; a second such window ends the run.
    """
    x = np.clip(np.asarray(x_start, dtype=float), V_MIN, V_MAX)
    cost, grad = value_and_grad(problem, x)
    best_x, best_fid = x.copy(), 1.0 - cost
    trace = [cost]
    if best_fid >= cfg.stop_fidelity:
        reached = TerminationReason.TARGET_REACHED
        return AdamResult(best_x, best_fid, trace, 0, reached, cfg.lr)

    state = AdamState()
    stagnation_scale = 1.0
    last_improvement = 0
    anchor = best_fid
    reason = TerminationReason.MAX_ITERATIONS
    lr = scheduled_lr(cfg, best_fid)
    step = 0
    for step in range(1, cfg.max_steps + 1):
        lr = scheduled_lr(cfg, best_fid) * stagnation_scale
        x = np.clip(adam_step([x], [grad], state, lr, cfg.grad_clip)[0], V_MIN, V_MAX)
        cost, grad = value_and_grad(problem, x)
        fidelity = 1.0 - cost

        if fidelity > best_fid:
            crossed = scheduled_lr(cfg, fidelity) != scheduled_lr(cfg, best_fid)
            best_x, best_fid = x.copy(), fidelity
            if crossed:
                logger.info(
                    "fidelity %.5f crossed a milestone, lr -> %.3e",
                    fidelity,
                    scheduled_lr(cfg, fidelity) * stagnation_scale,
                )
        if best_fid > anchor + cfg.improvement_eps:
            last_improvement, anchor = step, best_fid
        trace.append(1.0 - best_fid)
        if on_step:
            on_step(step, 1.0 - best_fid)

        if best_fid >= cfg.stop_fidelity:
            reason = TerminationReason.TARGET_REACHED
            break
        if step - last_improvement >= cfg.stagnation_window:
            if stagnation_scale == 1.0 and cfg.stagnation_decay < 1.0:
                stagnation_scale = cfg.stagnation_decay
                last_improvement, anchor = step, best_fid
                logger.info(
                    "no improvement for %d steps, lr scaled by %.2f",
                    cfg.stagnation_window,
                    stagnation_scale,
                )
                continue
            reason = TerminationReason.STAGNATION
            break

    final_lr = scheduled_lr(cfg, best_fid) * stagnation_scale
    return AdamResult(best_x, best_fid, trace, step, reason, final_lr)


# Strategy


class HybridSadeAdam(Optimizer):
    """SADE coarse search followed by Adam refinement."""

    name = "sade_adam"

    def __init__(
        self,
        sade: Optional[SadeConfig] = None,
        adam: Optional[AdamRefineConfig] = None,
    ):
        super().__init__()
        self.sade = sade or SadeConfig()
        self.adam = adam or AdamRefineConfig()

    def initial_point(self, problem: ControlProblem, seed: int) -> np.ndarray:
        if self.sade.init == "zeros":
            return np.zeros(problem.dimension)
        rng = np.random.default_rng([seed, 1])
        return rng.uniform(V_MIN, V_MAX, size=problem.dimension)

    def run(self, problem: ControlProblem, seed: int) -> OptimizerReport:
        recorder = self._start()
        sade = sade_run(
            problem.cost,
            self.sade,
            self.initial_point(problem, seed),
            seed=seed,
            on_generation=lambda g, c: self._record(c, "sade", g),
        )
        switch_generation = sade.generations
        logger.info(
            "SADE stopped after %d generations (%s), fidelity %.5f; switching to Adam",
            sade.generations,
            sade.reason.value,
            1.0 - sade.best_cost,
        )
        adam = adam_refine(
            problem,
            sade.best_x,
            self.adam,
            on_step=lambda k, c: self._record(c, "adam", switch_generation + k),
        )
        wall = self._finish(recorder)
        logger.info(
            "Adam stopped after %d steps (%s), fidelity %.6f",
            adam.steps,
            adam.reason.value,
            adam.best_fidelity,
        )
        return OptimizerReport(
            optimizer=self.name,
            seed=seed,
            best_schedule=problem.schedule(adam.best_x).voltages,
            best_fidelity=adam.best_fidelity,
            trace=recorder.points,
            termination=adam.reason,
            wall_seconds=wall,
            episodes=switch_generation + adam.steps,
            details={
                "switch_generation": switch_generation,
                "sade_reason": sade.reason.value,
                "sade_trace": sade.trace,
                "adam_trace": adam.trace,
                "adam_final_lr": adam.final_lr,
            },
        )


def hybrid_run(
    task: QuantumTask,
    hw: HardwareModel,
    cfgs: Tuple[SadeConfig, AdamRefineConfig],
    seed: int = 0,
    pc: Optional[PhysicalConstants] = None,
    n_segments: int = 10,
) -> OptimizerReport:
    """Build the control problem and run the hybrid optimizer on it."""
    problem = ControlProblem(
        hw=hw, task=task, pc=pc or PhysicalConstants(), n_segments=n_segments
    )
    return HybridSadeAdam(*cfgs).run(problem, seed)
