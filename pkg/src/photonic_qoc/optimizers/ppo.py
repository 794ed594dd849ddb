"""Proximal policy optimization baseline for schedule search.

The environment holds a full voltage schedule. Each action is a bounded
adjustment of every voltage; the reward favours high fidelity and fidelity
gains, with coefficients that stiffen as the fidelity improves. The agent is
a Gaussian policy with a state-independent log standard deviation and a
separate value network, trained with the clipped surrogate objective and
generalized advantage estimation.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from ..hwmodel import V_MAX, V_MIN, HardwareModel
from ..nn import (
    AdamState,
    ConvParams,
    MlpParams,
    MlpSpec,
    adam_step,
    clip_by_global_norm,
    conv_backward,
    conv_forward,
    mlp_backward,
    mlp_forward,
    mlp_init,
)
from ..qsim import ControlProblem, PhysicalConstants, QuantumTask
from .base import Optimizer, OptimizerReport, TerminationReason

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class RewardBand:
    """Reward coefficients used while the fidelity is below ``upper``."""

    upper: float
    a: float
    b: float
    p: float


def default_reward_bands() -> List[RewardBand]:
    return [
        RewardBand(0.9, 1.0, 10.0, 1.0),
        RewardBand(0.99, 2.0, 20.0, 2.0),
        RewardBand(float("inf"), 4.0, 40.0, 3.0),
    ]


@dataclass
class PpoConfig:
    """PPO and environment settings.

    ``episodes`` is the training budget in environment episodes; each update
    consumes ``rollout_steps`` transitions regardless of episode boundaries.
    """

    lr: float = 1e-4
    ent_coef: float = 0.1
    vf_coef: float = 0.5
    gamma: float = 0.99
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    max_grad_norm: float = 0.5
    epochs: int = 10
    minibatch: int = 64
    rollout_steps: int = 256
    episodes: int = 10000
    episode_length: int = 32
    history: int = 4
    step_size: float = 0.5
    hidden: List[int] = field(default_factory=lambda: [256, 256])
    extractor: str = "mlp"
    log_std_init: float = -0.5
    stop_fidelity: float = 0.999
    stagnation_episodes: int = 1000
    stagnation_floor: float = 0.99
    reward_bands: List[RewardBand] = field(default_factory=default_reward_bands)

    def __post_init__(self):
        self.reward_bands = [
            b if isinstance(b, RewardBand) else RewardBand(**b)
            for b in self.reward_bands
        ]
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma must lie in (0, 1] and gae_lambda in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.extractor not in ("mlp", "conv"):
            raise ValueError(f"Unknown extractor: {self.extractor}")
        counts = (
            self.epochs,
            self.minibatch,
            self.rollout_steps,
            self.episode_length,
            self.history,
        )
        if min(counts) < 1:
            raise ValueError(
                "epochs, minibatch, rollout_steps, episode_length and history "
                "must be positive"
            )
        if not self.reward_bands or self.reward_bands[-1].upper != float("inf"):
            raise ValueError("the last reward band must be open-ended")


# Environment


def reward_fn(F: float, dF: float, a: float, b: float, p: float) -> float:
    """r = a F^p + b dF."""
    return a * F**p + b * dF


def reward_coefficients(
    F: float, bands: List[RewardBand]
) -> Tuple[float, float, float]:
    for band in bands:
        if F < band.upper:
            return band.a, band.b, band.p
    last = bands[-1]
    return last.a, last.b, last.p


class QocEnv:
    """Schedule-adjustment environment over a control problem.

    Observations are the last ``history`` schedules scaled to [-1, 1],
    followed by the current fidelity, the best fidelity of the episode and
    the elapsed fraction of the episode.
    """

    def __init__(self, problem: ControlProblem, cfg: PpoConfig):
        self.problem = problem
        self.cfg = cfg
        self.action_dim = problem.dimension
        self.obs_dim = cfg.history * self.action_dim + 3
        self._history: Deque[np.ndarray] = deque(maxlen=cfg.history)
        self.x = np.zeros(self.action_dim)
        self.fidelity = 0.0
        self.best_fidelity = 0.0
        self.best_x = self.x.copy()
        self.steps = 0

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Start an episode from the all-zero schedule.

        The start state is deterministic, so ``seed`` does not change it.
        """
        self.x = np.zeros(self.action_dim)
        self.fidelity = self.problem.fidelity(self.x)
        self.best_fidelity = self.fidelity
        self.best_x = self.x.copy()
        self.steps = 0
        self._history.clear()
        for _ in range(self.cfg.history):
            self._history.append(np.zeros(self.action_dim))
        self._history.append(self.x / V_MAX)
        return self.observation()

    def observation(self) -> np.ndarray:
        progress = self.steps / self.cfg.episode_length
        scalars = np.array([self.fidelity, self.best_fidelity, progress])
        return np.concatenate(list(self._history) + [scalars])

    def step(self, action: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.x = np.clip(self.x + self.cfg.step_size * action, V_MIN, V_MAX)
        previous = self.fidelity
        self.fidelity = self.problem.fidelity(self.x)
        if self.fidelity > self.best_fidelity:
            self.best_fidelity = self.fidelity
            self.best_x = self.x.copy()
        self.steps += 1
        self._history.append(self.x / V_MAX)

        delta = self.fidelity - previous
        a, b, p = reward_coefficients(self.fidelity, self.cfg.reward_bands)
        reward = reward_fn(self.fidelity, delta, a, b, p)
        done = (
            self.steps >= self.cfg.episode_length
            or self.fidelity >= self.cfg.stop_fidelity
        )
        return self.observation(), reward, done


# Advantage estimation


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    gamma: float,
    lam: float,
    dones: Optional[np.ndarray] = None,
    last_value: float = 0.0,
    normalize: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one rollout.

    ``dones[t]`` marks that the episode ended after step t, so no value is
    bootstrapped across it. ``last_value`` bootstraps the step after the
    rollout when it ends mid-episode.

    Returns:
        Tuple ``(advantages, returns)``; returns use the raw advantages
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.zeros_like(rewards) if dones is None else np.asarray(dones, dtype=float)
    n = rewards.size
    advantages = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        next_value = last_value if t == n - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        advantages[t] = running
    returns = advantages + values
    if normalize:
        centred = advantages - advantages.mean()
        std = centred.std()
        advantages = centred / std if std > 1e-8 else centred
    return advantages, returns


# Policy and value networks


class FlattenExtractor:
    """Fully connected feature extractor on the raw observation."""

    def __init__(self, params: MlpParams):
        self.params = params

    @classmethod
    def build(cls, obs_dim: int, hidden: List[int], seed: int) -> "FlattenExtractor":
        spec = MlpSpec(
            sizes=[obs_dim] + list(hidden), activations=["tanh"] * len(hidden)
        )
        return cls(mlp_init(spec, seed))

    @property
    def out_dim(self) -> int:
        return self.params.weights[-1].shape[1]

    def arrays(self) -> List[np.ndarray]:
        return self.params.arrays()

    def with_arrays(self, arrays: List[np.ndarray]) -> "FlattenExtractor":
        return FlattenExtractor(self.params.with_arrays(arrays))

    def forward(self, obs: np.ndarray):
        return mlp_forward(self.params, obs)

    def backward(self, tape, grad: np.ndarray) -> List[np.ndarray]:
        return mlp_backward(tape, grad)[0].arrays()


class ConvExtractor:
    """Two 3x3 ReLU convolutions (32 and 64 filters) and a dense ReLU layer.

    The schedule history is read as an image with one channel per history
    entry, ``2 * n_channels`` rows and ``n_segments`` columns.
    """

    def __init__(
        self,
        conv1: ConvParams,
        conv2: ConvParams,
        dense: MlpParams,
        image: Tuple[int, int, int],
    ):
        self.conv1 = conv1
        self.conv2 = conv2
        self.dense = dense
        self.image = image

    @classmethod
    def build(
        cls, image: Tuple[int, int, int], hidden: int, seed: int
    ) -> "ConvExtractor":
        rng = np.random.default_rng([seed, 2])
        depth, rows, cols = image
        spec = MlpSpec(sizes=[64 * rows * cols + 3, hidden], activations=["relu"])
        conv1 = ConvParams.init(depth, 32, rng)
        conv2 = ConvParams.init(32, 64, rng)
        return cls(conv1, conv2, mlp_init(spec, seed), image)

    @property
    def out_dim(self) -> int:
        return self.dense.weights[-1].shape[1]

    def arrays(self) -> List[np.ndarray]:
        convs = [self.conv1.weight, self.conv1.bias, self.conv2.weight, self.conv2.bias]
        return convs + self.dense.arrays()

    def with_arrays(self, arrays: List[np.ndarray]) -> "ConvExtractor":
        return ConvExtractor(
            ConvParams(arrays[0], arrays[1]),
            ConvParams(arrays[2], arrays[3]),
            self.dense.with_arrays(arrays[4:]),
            self.image,
        )

    def forward(self, obs: np.ndarray):
        obs = np.atleast_2d(obs)
        batch = obs.shape[0]
        image = obs[:, :-3].reshape(batch, *self.image)
        h1, tape1 = conv_forward(self.conv1, image)
        a1 = np.maximum(h1, 0.0)
        h2, tape2 = conv_forward(self.conv2, a1)
        a2 = np.maximum(h2, 0.0)
        flat = np.concatenate([a2.reshape(batch, -1), obs[:, -3:]], axis=1)
        out, dense_tape = mlp_forward(self.dense, flat)
        return out, (tape1, a1, tape2, a2, dense_tape)

    def backward(self, tape, grad: np.ndarray) -> List[np.ndarray]:
        tape1, a1, tape2, a2, dense_tape = tape
        dense_grads, grad_flat = mlp_backward(dense_tape, grad)
        grad_a2 = grad_flat[:, :-3].reshape(a2.shape) * (a2 > 0)
        conv2_grads, grad_a1 = conv_backward(tape2, grad_a2)
        conv1_grads, _ = conv_backward(tape1, grad_a1 * (a1 > 0))
        return [
            conv1_grads.weight,
            conv1_grads.bias,
            conv2_grads.weight,
            conv2_grads.bias,
        ] + dense_grads.arrays()


class ActorCritic:
    """Gaussian policy head, value head and one extractor for each."""

    def __init__(
        self,
        policy_body,
        policy_head: MlpParams,
        log_std: np.ndarray,
        value_body,
        value_head: MlpParams,
    ):
        self.policy_body = policy_body
        self.policy_head = policy_head
        self.log_std = log_std
        self.value_body = value_body
        self.value_head = value_head

    @classmethod
    def build(cls, env: QocEnv, cfg: PpoConfig, seed: int) -> "ActorCritic":
        def body(offset: int):
            if cfg.extractor == "conv":
                rows = 2 * env.problem.n_channels
                image = (cfg.history, rows, env.action_dim // rows)
                return ConvExtractor.build(image, cfg.hidden[-1], seed + offset)
            return FlattenExtractor.build(env.obs_dim, cfg.hidden, seed + offset)

        policy_body = body(0)
        value_body = body(1)
        head_spec = MlpSpec(
            [policy_body.out_dim, env.action_dim], ["linear"], output_gain=0.01
        )
        policy_head = mlp_init(head_spec, seed + 2)
        value_head = mlp_init(MlpSpec([value_body.out_dim, 1], ["linear"]), seed + 3)
        log_std = np.full(env.action_dim, cfg.log_std_init)
        return cls(policy_body, policy_head, log_std, value_body, value_head)

    def arrays(self) -> List[np.ndarray]:
        return (
            self.policy_body.arrays()
            + self.policy_head.arrays()
            + [self.log_std]
            + self.value_body.arrays()
            + self.value_head.arrays()
        )

    def with_arrays(self, arrays: List[np.ndarray]) -> "ActorCritic":
        arrays = list(arrays)
        n_pb = len(self.policy_body.arrays())
        n_ph = len(self.policy_head.arrays())
        n_vb = len(self.value_body.arrays())
        i = 0
        policy_body = self.policy_body.with_arrays(arrays[i : i + n_pb])
        i += n_pb
        policy_head = self.policy_head.with_arrays(arrays[i : i + n_ph])
        i += n_ph
        log_std = arrays[i]
        i += 1
        value_body = self.value_body.with_arrays(arrays[i : i + n_vb])
        i += n_vb
        value_head = self.value_head.with_arrays(arrays[i:])
        return ActorCritic(policy_body, policy_head, log_std, value_body, value_head)

    def forward(self, obs: np.ndarray):
        """Action means, state values and the tapes for :meth:`backward`."""
        obs = np.atleast_2d(obs)
        pf, pb_tape = self.policy_body.forward(obs)
        mean, ph_tape = mlp_forward(self.policy_head, pf)
        vf, vb_tape = self.value_body.forward(obs)
        value, vh_tape = mlp_forward(self.value_head, vf)
        return mean, value[:, 0], (pb_tape, ph_tape, vb_tape, vh_tape)

    def backward(
        self,
        tapes,
        grad_mean: np.ndarray,
        grad_log_std: np.ndarray,
        grad_value: np.ndarray,
    ) -> List[np.ndarray]:
        """Gradients of all arrays, in the order of :meth:`arrays`."""
        pb_tape, ph_tape, vb_tape, vh_tape = tapes
        ph_grads, grad_pf = mlp_backward(ph_tape, grad_mean)
        pb_grads = self.policy_body.backward(pb_tape, grad_pf)
        vh_grads, grad_vf = mlp_backward(vh_tape, grad_value[:, None])
        vb_grads = self.value_body.backward(vb_tape, grad_vf)
        policy = pb_grads + ph_grads.arrays() + [grad_log_std]
        return policy + vb_grads + vh_grads.arrays()

    def log_prob(self, mean: np.ndarray, actions: np.ndarray) -> np.ndarray:
        std = np.exp(self.log_std)
        z = (actions - mean) / std
        norm = np.sum(self.log_std) + 0.5 * mean.shape[-1] * LOG_2PI
        return -0.5 * np.sum(z**2, axis=-1) - norm

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.log_std.size * (1.0 + LOG_2PI))

    def act(
        self, obs: np.ndarray, rng: np.random.Generator
    ) -> Tuple[np.ndarray, float, float]:
        """Sample an (unclipped) action; returns (action, log_prob, value)."""
        mean, value, _ = self.forward(obs)
        action = mean[0] + np.exp(self.log_std) * rng.standard_normal(mean.shape[1])
        return action, float(self.log_prob(mean, action[None, :])[0]), float(value[0])


# Update


@dataclass
class Rollout:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    last_value: float


def clip_mask(ratio: np.ndarray, eps: float) -> np.ndarray:
    """True where the probability ratio lies outside [1 - eps, 1 + eps]."""
    return np.abs(np.asarray(ratio) - 1.0) > eps


def clipped_surrogate(
    ratio: np.ndarray, advantages: np.ndarray, eps: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample min(r A, clip(r) A) and where the gradient passes through r."""
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    return np.minimum(unclipped, clipped), unclipped <= clipped


def ppo_update(
    rollout: Rollout,
    model: ActorCritic,
    cfg: PpoConfig,
    state: AdamState,
    rng: np.random.Generator,
) -> Tuple[ActorCritic, Dict[str, float]]:
    """K epochs of minibatch Adam on the clipped PPO loss."""
    advantages, returns = gae(
        rollout.rewards,
        rollout.values,
        cfg.gamma,
        cfg.gae_lambda,
        rollout.dones,
        rollout.last_value,
    )
    n = rollout.rewards.size
    keys = ["policy_loss", "value_loss", "entropy", "clip_fraction"]
    stats = dict.fromkeys(keys, 0.0)
    n_batches = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            batch = idx.size
            mean, values, tapes = model.forward(rollout.obs[idx])
            log_probs = model.log_prob(mean, rollout.actions[idx])
            ratio = np.exp(log_probs - rollout.log_probs[idx])
            adv = advantages[idx]
            objective, passes = clipped_surrogate(ratio, adv, cfg.clip_eps)

            # d(loss)/d(log_prob) of loss = -mean(objective)
            g_logp = -(passes * ratio * adv) / batch
            std = np.exp(model.log_std)
            diff = rollout.actions[idx] - mean
            grad_mean = g_logp[:, None] * diff / std**2
            grad_log_std = np.sum(g_logp[:, None] * ((diff / std) ** 2 - 1.0), axis=0)
            grad_log_std = grad_log_std - cfg.ent_coef
            grad_value = cfg.vf_coef * 2.0 * (values - returns[idx]) / batch

            grads = model.backward(tapes, grad_mean, grad_log_std, grad_value)
            grads = clip_by_global_norm(grads, cfg.max_grad_norm)
            model = model.with_arrays(adam_step(model.arrays(), grads, state, cfg.lr))

            stats["policy_loss"] += float(-objective.mean())
            stats["value_loss"] += float(np.mean((values - returns[idx]) ** 2))
            stats["entropy"] += model.entropy()
            stats["clip_fraction"] += float(np.mean(clip_mask(ratio, cfg.clip_eps)))
            n_batches += 1
    return model, {k: v / max(1, n_batches) for k, v in stats.items()}


# Strategy


class PpoOptimizer(Optimizer):
    """Conventional reinforcement-learning baseline."""

    name = "ppo"

    def __init__(self, cfg: Optional[PpoConfig] = None):
        super().__init__()
        self.cfg = cfg or PpoConfig()

    def collect(
        self,
        env: QocEnv,
        model: ActorCritic,
        obs: np.ndarray,
        rng: np.random.Generator,
    ) -> Tuple[Rollout, np.ndarray, List[Tuple[float, np.ndarray]]]:
        """Run ``rollout_steps`` transitions; returns the rollout, the next
        observation and (best fidelity, best schedule) of each finished episode."""
        cfg = self.cfg
        buf_obs, buf_act, buf_logp, buf_val, buf_rew, buf_done = [], [], [], [], [], []
        finished = []
        for _ in range(cfg.rollout_steps):
            action, logp, value = model.act(obs, rng)
            next_obs, reward, done = env.step(action)
            buf_obs.append(obs)
            buf_act.append(action)
            buf_logp.append(logp)
            buf_val.append(value)
            buf_rew.append(reward)
            buf_done.append(done)
            if done:
                finished.append((env.best_fidelity, env.best_x.copy()))
                obs = env.reset()
            else:
                obs = next_obs
        last_value = 0.0 if buf_done[-1] else float(model.forward(obs)[1][0])
        rollout = Rollout(
            obs=np.asarray(buf_obs),
            actions=np.asarray(buf_act),
            log_probs=np.asarray(buf_logp),
            values=np.asarray(buf_val),
            rewards=np.asarray(buf_rew),
            dones=np.asarray(buf_done, dtype=float),
            last_value=last_value,
        )
        return rollout, obs, finished

    def run(self, problem: ControlProblem, seed: int) -> OptimizerReport:
        cfg = self.cfg
        recorder = self._start()
        rng = np.random.default_rng(seed)
        env = QocEnv(problem, cfg)
        obs = env.reset(seed)
        model = ActorCritic.build(env, cfg, seed)
        state = AdamState()

        best_fid, best_x = env.fidelity, env.x.copy()
        episodes, last_improvement = 0, 0
        reason = TerminationReason.MAX_ITERATIONS
        while episodes < cfg.episodes:
            rollout, obs, finished = self.collect(env, model, obs, rng)
            for fidelity, x in finished:
                episodes += 1
                if fidelity > best_fid:
                    best_fid, best_x = fidelity, x
                    last_improvement = episodes
                    logger.debug(
                        "episode %d: new best fidelity %.6f", episodes, best_fid
                    )
                self._record(1.0 - best_fid, "ppo", episodes)
            if best_fid >= cfg.stop_fidelity:
                reason = TerminationReason.TARGET_REACHED
                break
            if (
                cfg.stagnation_floor <= best_fid
                and episodes - last_improvement >= cfg.stagnation_episodes
            ):
                reason = TerminationReason.STAGNATION
                break
            model, stats = ppo_update(rollout, model, cfg, state, rng)
            if not all(np.all(np.isfinite(a)) for a in model.arrays()):
                raise FloatingPointError("PPO parameters became non-finite")
            logger.debug("update after %d episodes: %s", episodes, stats)

        wall = self._finish(recorder)
        logger.info(
            "PPO stopped after %d episodes (%s), fidelity %.6f",
            episodes,
            reason.value,
            best_fid,
        )
        return OptimizerReport(
            optimizer=self.name,
            seed=seed,
            best_schedule=problem.schedule(best_x).voltages,
            best_fidelity=problem.fidelity(best_x),
            trace=recorder.points,
            termination=reason,
            wall_seconds=wall,
            episodes=episodes,
            details={"final_log_std": float(np.mean(model.log_std))},
        )


def train_ppo(
    task: QuantumTask,
    hw: HardwareModel,
    cfg: PpoConfig,
    seed: int = 0,
    pc: Optional[PhysicalConstants] = None,
    n_segments: int = 10,
) -> OptimizerReport:
    """Build the control problem and train PPO on it."""
    problem = ControlProblem(
        hw=hw, task=task, pc=pc or PhysicalConstants(), n_segments=n_segments
    )
    return PpoOptimizer(cfg).run(problem, seed)
