"""Exact reverse-mode gradients of the gate error with respect to voltages.

The propagator is a product of step exponentials exp(-i H_k dt). For each
step the derivative of the exponential is taken in the eigenbasis of H_k
with divided differences of exp(-i lambda dt); the hardware chain is
affine in the DRMZM transmissions, which are smooth in the voltages.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .hwmodel import ControlSchedule, HardwareModel, drmzm_derivatives
from .qsim import (
    ControlProblem,
    PhysicalConstants,
    QuantumTask,
    SimResult,
    gate_fidelity,
    ladder_operators,
    propagate,
)

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-12


def exp_divided_differences(eigvals: np.ndarray, dt: float) -> np.ndarray:
    """F[a, b] = (e^{-i la dt} - e^{-i lb dt}) / (la - lb), per step.

    Written as -i dt e^{-i (la+lb) dt / 2} sinc((la-lb) dt / 2), which is exact
    for distinct pairs and equals the analytic limit -i dt e^{-i la dt} on
    degenerate ones.

    Args:
        eigvals: (..., d) eigenvalues of each step Hamiltonian
        dt: Step length

    Returns:
        (..., d, d) complex divided-difference matrices
    """
    la = eigvals[..., :, None]
    lb = eigvals[..., None, :]
    mean_phase = np.exp(-0.5j * (la + lb) * dt)
    half_gap = 0.5 * (la - lb) * dt
    F = -1j * dt * mean_phase * np.sinc(half_gap / np.pi)

    scale = np.max(np.abs(eigvals), axis=-1, keepdims=True)[..., None]
    degenerate = np.abs(la - lb) <= DEGENERACY_TOL * scale
    limit = -1j * dt * np.exp(-1j * la * dt) * np.ones_like(lb)
    return np.where(degenerate, limit, F)


@dataclass
class GradientTape:
    """Forward pass of one schedule plus the products the adjoint sweep needs.

    ``prefix[k]`` is U_{k-1} ... U_1 (identity for the first step) and
    ``suffix[k]`` is U_target^dagger U_K ... U_{k+1}.
    """

    schedule: ControlSchedule
    hw: HardwareModel
    sim: SimResult
    prefix: np.ndarray
    suffix: np.ndarray

    @classmethod
    def record(
        cls,
        schedule: ControlSchedule,
        hw: HardwareModel,
        task: QuantumTask,
        pc: PhysicalConstants,
    ) -> "GradientTape":
        sim = propagate(schedule, hw, task, pc)
        steps = sim.step_unitaries
        n_steps, dim = steps.shape[0], steps.shape[-1]

        prefix = np.empty_like(steps)
        prefix[0] = np.eye(dim, dtype=complex)
        for k in range(1, n_steps):
            prefix[k] = steps[k - 1] @ prefix[k - 1]

        suffix = np.empty_like(steps)
        suffix[-1] = sim.target.conj().T
        for k in range(n_steps - 2, -1, -1):
            suffix[k] = suffix[k + 1] @ steps[k + 1]
        return cls(schedule=schedule, hw=hw, sim=sim, prefix=prefix, suffix=suffix)

    @property
    def overlap(self) -> complex:
        """tau = Tr(U_target^dagger U)."""
        return complex(np.trace(self.sim.target.conj().T @ self.sim.U_final))

    @property
    def cost(self) -> float:
        return 1.0 - self.sim.fidelity

    def replay_fidelity(self) -> float:
        """Fidelity rebuilt from the cached step unitaries."""
        U = self.sim.step_unitaries[-1] @ self.prefix[-1]
        return gate_fidelity(U, self.sim.target)

    def gradient(self) -> np.ndarray:
        """dC/dV with the schedule's shape (n_channels, 2, n_segments)."""
        sim = self.sim
        dim = sim.U_final.shape[0]
        tau = self.overlap

        # Sensitivity of tau to each step Hamiltonian: dtau = Tr(Q_k dH_k)
        G = self.prefix @ self.suffix
        V = sim.eigvecs
        Vh = np.conj(np.swapaxes(V, -1, -2))
        Y = Vh @ G @ V
        Q = V @ (Y * exp_divided_differences(sim.eigvals, sim.dt)) @ Vh

        raising = ladder_operators(sim.couplings.shape[1])
        lowering = np.conj(np.swapaxes(raising, -1, -2))
        p = np.einsum("kab,jba->kj", Q, raising)
        m = np.einsum("kab,jba->kj", Q, lowering)

        # g_kj = s * (sum_c K_kjc T_kc + e0_kj), s real
        chain = sim.chain
        s = sim.coupling_scale
        volts = self.schedule.voltages[:, :, chain.segment_of_step]  # (n_ch, 2, K)
        d0, d1 = drmzm_derivatives(volts[:, 0], volts[:, 1], self.hw.drmzm)
        dT = np.stack([d0.T, d1.T], axis=-1)  # (K, n_ch, 2)

        # (K, n_a, n_ch, 2)
        z = s * chain.sensitivity[:, :, :, None] * dT[:, None, :, :]
        dtau = np.einsum("kjca,kj->kca", z, p)
        dtau = dtau + np.einsum("kjca,kj->kca", np.conj(z), m)

        n_seg = self.schedule.n_segments
        per_step = -(2.0 / dim**2) * np.real(np.conj(tau) * dtau)
        per_seg = per_step.reshape(n_seg, -1, *per_step.shape[1:]).sum(axis=1)
        return np.transpose(per_seg, (1, 2, 0))


def grad_cost(
    schedule: ControlSchedule,
    hw: HardwareModel,
    task: QuantumTask,
    pc: PhysicalConstants,
) -> np.ndarray:
    """Exact dC_f/dV, shape (n_channels, 2, n_segments)."""
    return GradientTape.record(schedule, hw, task, pc).gradient()


def value_and_grad(problem: ControlProblem, x) -> Tuple[float, np.ndarray]:
    """Cost and flattened gradient of a control problem at ``x``."""
    tape = GradientTape.record(
        problem.schedule(x), problem.hw, problem.task, problem.pc
    )
    return tape.cost, tape.gradient().reshape(-1)


def central_difference(
    fn: Callable[[np.ndarray], float], x: np.ndarray, h: float
) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up = x.copy()
        down = x.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (fn(up) - fn(down)) / (2.0 * h)
    return grad


def finite_diff_grad(
    schedule: ControlSchedule,
    hw: HardwareModel,
    task: QuantumTask,
    pc: PhysicalConstants,
    h: float = 1e-4,
) -> np.ndarray:
    """Central differences of the gate error; voltages must stay h inside the bounds."""

    def error(v: np.ndarray) -> float:
        return 1.0 - propagate(ControlSchedule(v), hw, task, pc).fidelity

    return central_difference(error, schedule.voltages, h)
