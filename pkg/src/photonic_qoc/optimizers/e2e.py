"""End-to-end differentiable policy training.

A small tanh MLP maps a latent vector to a whole voltage schedule. The gate
error is differentiated exactly through the simulator and the chain rule
carries it into the network weights. Training runs through a curriculum of
increasingly fine segment grids; each phase starts from the previous
phase's best network, widened so that its schedule is held piecewise
constant on the finer grid.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..diffengine import value_and_grad
from ..hwmodel import V_MAX, ControlSchedule, HardwareModel
from ..nn import (
    AdamState,
    MlpParams,
    MlpSpec,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_init,
)
from ..qsim import ControlProblem, PhysicalConstants, QuantumTask
from .base import Optimizer, OptimizerReport, TerminationReason

logger = logging.getLogger(__name__)

LATENT_MODES = ("first_phase", "always", "fixed")


@dataclass
class E2eConfig:
    """Policy network and curriculum settings.

    Attributes:
        hidden: Hidden layer widths (tanh)
        latent_dim: Size of the latent input z
        phases: Segment counts of the curriculum, strictly increasing
        phase_episodes: Gradient-step budget per phase
        lr: Adam learning rate at the start of every phase
        grad_clip: Global-norm gradient clip
        stop_fidelity: Fidelity that ends a phase early
        stagnation_window: Episodes without relative improvement before lr decays
        stagnation_rel: Relative loss improvement that counts as progress
        lr_decay: Factor applied on stagnation
        max_decays: Consecutive decays without improvement that end a phase
        latent_mode: ``"first_phase"`` resamples z only in phase 1,
            ``"always"`` in every phase, ``"fixed"`` never
    """

    hidden: List[int] = field(default_factory=lambda: [64, 64])
    latent_dim: int = 16
    phases: List[int] = field(default_factory=lambda: [20, 50, 100])
    phase_episodes: List[int] = field(default_factory=lambda: [1500, 1500, 2000])
    lr: float = 3e-3
    grad_clip: Optional[float] = 1.0
    stop_fidelity: float = 0.999
    stagnation_window: int = 300
    stagnation_rel: float = 1e-6
    lr_decay: float = 0.5
    max_decays: int = 2
    latent_mode: str = "first_phase"

    def __post_init__(self):
        if not self.phases or any(b <= a for a, b in zip(self.phases, self.phases[1:])):
            raise ValueError("curriculum phases must be strictly increasing")
        if len(self.phase_episodes) != len(self.phases):
            raise ValueError("one episode budget per phase is required")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if self.latent_mode not in LATENT_MODES:
            raise ValueError(f"Unknown latent mode: {self.latent_mode}")
        if not 0.0 < self.lr_decay < 1.0:
            raise ValueError("lr_decay must lie in (0, 1)")
        if not 0.0 <= self.stagnation_rel < 1.0:
            raise ValueError("stagnation_rel must lie in [0, 1)")


def policy_spec(cfg: E2eConfig, n_channels: int, n_segments: int) -> MlpSpec:
    sizes = [cfg.latent_dim] + list(cfg.hidden) + [n_channels * 2 * n_segments]
    return MlpSpec(sizes=sizes, activations=["tanh"] * len(cfg.hidden) + ["linear"])


def policy_schedule(
    params: MlpParams, z: np.ndarray, n_channels: int
) -> ControlSchedule:
    """Schedule V = 15 tanh(MLP(z)), reshaped to (n_channels, 2, n_segments)."""
    out, _ = mlp_forward(params, z)
    return ControlSchedule(V_MAX * np.tanh(out).reshape(n_channels, 2, -1))


def refine_resolution(
    params: MlpParams, s_prev: int, s_next: int, n_channels: int
) -> MlpParams:
    """Widen the output layer from ``s_prev`` to ``s_next`` segments.

    Segment s' of the new grid copies the output unit of segment
    floor((s' + 0.5) * s_prev / s_next) of the old one, so the new schedule
    holds the old one piecewise constant.
    """
    w, b = params.weights[-1], params.biases[-1]
    rows = n_channels * 2
    if w.shape[1] != rows * s_prev:
        raise ValueError(
            f"output layer has {w.shape[1]} units, expected {rows * s_prev}"
        )
    source = np.floor((np.arange(s_next) + 0.5) * s_prev / s_next).astype(int)
    columns = (np.arange(rows)[:, None] * s_prev + source[None, :]).reshape(-1)
    weights = list(params.weights[:-1]) + [w[:, columns].copy()]
    biases = list(params.biases[:-1]) + [b[columns].copy()]
    return MlpParams(
        weights=weights, biases=biases, activations=list(params.activations)
    )


@dataclass
class PhaseResult:
    segments: int
    episodes: int
    best_fidelity: float
    trace: List[float]
    reason: TerminationReason
    final_lr: float


class EndToEndOptimizer(Optimizer):
    """Trains a latent-to-schedule network through the differentiable simulator."""

    name = "e2e"

    def __init__(self, cfg: Optional[E2eConfig] = None):
        super().__init__()
        self.cfg = cfg or E2eConfig()

    def _train_phase(
        self,
        problem: ControlProblem,
        params: MlpParams,
        z: np.ndarray,
        resample: bool,
        budget: int,
        rng: np.random.Generator,
        episode_offset: int,
    ):
        cfg = self.cfg
        state = AdamState()
        lr = cfg.lr
        best = (-1.0, params, z)
        trace: List[float] = []
        best_loss = float("inf")
        last_improvement, decays = 0, 0
        reason = TerminationReason.MAX_ITERATIONS
        episode = 0
        for episode in range(1, budget + 1):
            if resample:
                z = rng.standard_normal(cfg.latent_dim)
            out, tape = mlp_forward(params, z)
            u = np.tanh(out)
            loss, grad_v = value_and_grad(problem, V_MAX * u)
            fidelity = 1.0 - loss
            if fidelity > best[0]:
                best = (fidelity, params, z.copy())

            grad_out = grad_v * V_MAX * (1.0 - u**2)
            grads = mlp_backward(tape, grad_out)[0].arrays()
            updated = adam_step(params.arrays(), grads, state, lr, cfg.grad_clip)
            params = params.with_arrays(updated)

            trace.append(1.0 - best[0])
            self._record(
                1.0 - best[0], f"S={problem.n_segments}", episode_offset + episode
            )
            if best[0] >= cfg.stop_fidelity:
                reason = TerminationReason.TARGET_REACHED
                break

            if loss < best_loss * (1.0 - cfg.stagnation_rel):
                best_loss = loss
                last_improvement, decays = episode, 0
            elif episode - last_improvement >= cfg.stagnation_window:
                if decays >= cfg.max_decays:
                    reason = TerminationReason.STAGNATION
                    break
                lr *= cfg.lr_decay
                decays += 1
                last_improvement = episode
                logger.info(
                    "S=%d: stagnation at episode %d, lr -> %.3e",
                    problem.n_segments,
                    episode,
                    lr,
                )

        fidelity, best_params, best_z = best
        result = PhaseResult(
            segments=problem.n_segments,
            episodes=episode,
            best_fidelity=fidelity,
            trace=trace,
            reason=reason,
            final_lr=lr,
        )
        return best_params, best_z, result

    def run(self, problem: ControlProblem, seed: int) -> OptimizerReport:
        cfg = self.cfg
        recorder = self._start()
        rng = np.random.default_rng(seed)
        n_ch = problem.n_channels
        final_problem = problem.with_resolution(cfg.phases[-1])

        params = mlp_init(policy_spec(cfg, n_ch, cfg.phases[0]), seed)
        z = rng.standard_normal(cfg.latent_dim)
        phases: List[PhaseResult] = []
        episodes = 0
        for p, (segments, budget) in enumerate(zip(cfg.phases, cfg.phase_episodes)):
            if p:
                params = refine_resolution(params, cfg.phases[p - 1], segments, n_ch)
            resample = cfg.latent_mode == "always" or (
                cfg.latent_mode == "first_phase" and p == 0
            )
            phase_problem = problem.with_resolution(segments, t_steps=segments)
            params, z, result = self._train_phase(
                phase_problem, params, z, resample, budget, rng, episodes
            )
            episodes += result.episodes
            phases.append(result)
            logger.info(
                "phase %d (S=%d) ended after %d episodes (%s), fidelity %.6f",
                p + 1,
                segments,
                result.episodes,
                result.reason.value,
                result.best_fidelity,
            )

        schedule = policy_schedule(params, z, n_ch)
        fidelity = final_problem.fidelity(schedule)
        wall = self._finish(recorder)
        if fidelity >= cfg.stop_fidelity:
            reason = TerminationReason.TARGET_REACHED
        else:
            reason = phases[-1].reason
        return OptimizerReport(
            optimizer=self.name,
            seed=seed,
            best_schedule=schedule.voltages,
            best_fidelity=fidelity,
            trace=recorder.points,
            termination=reason,
            wall_seconds=wall,
            episodes=episodes,
            details={
                "phases": [
                    {
                        "segments": r.segments,
                        "episodes": r.episodes,
                        "best_fidelity": r.best_fidelity,
                        "termination": r.reason.value,
                        "final_lr": r.final_lr,
                        "trace": r.trace,
                    }
                    for r in phases
                ],
                "latent": z.tolist(),
            },
        )


def train_e2e(
    task: QuantumTask,
    hw: HardwareModel,
    cfg: E2eConfig,
    seed: int = 0,
    pc: Optional[PhysicalConstants] = None,
) -> OptimizerReport:
    """Build the control problem and train the end-to-end policy on it."""
    problem = ControlProblem(
        hw=hw, task=task, pc=pc or PhysicalConstants(), n_segments=cfg.phases[-1]
    )
    return EndToEndOptimizer(cfg).run(problem, seed)
