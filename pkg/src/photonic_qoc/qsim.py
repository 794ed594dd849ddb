"""Qubit register simulation driven by the photonic chain.

Fields at the atom sites become Raman coupling strengths, the coupling
strengths build a piecewise-constant control Hamiltonian in the rotating
frame, and the register propagator is the time-ordered product of exact
step exponentials.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Dict, List, Optional

import numpy as np
from scipy import constants

from .exceptions import DimensionMismatch, GateStringError
from .hwmodel import (
    ChainTrace,
    ControlSchedule,
    HardwareModel,
    segment_of_steps,
    trace_chain,
)

logger = logging.getLogger(__name__)

__all__ = [
    "GATES",
    "ControlProblem",
    "ControlSchedule",
    "PhysicalConstants",
    "QuantumTask",
    "SimResult",
    "build_target",
    "control_hamiltonian",
    "cost",
    "coupling_strengths",
    "gate_fidelity",
    "global_field",
    "parse_gate_string",
    "propagate",
    "resolve_drive_scale",
]

_SQRT_HALF = 1.0 / math.sqrt(2.0)

GATES: Dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": _SQRT_HALF * np.array([[1, 1], [1, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
}

# |1><0| in the (|0>, |1>) basis
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.conj().T


@dataclass
class PhysicalConstants:
    """Atomic and laser constants of the two-photon Raman drive.

    Attributes:
        mu1e: Dipole moment of the first leg (C m)
        mu2e: Dipole moment of the second leg (C m)
        detuning: Raman detuning (rad/s)
        intensity: Global laser intensity (mW/cm^2)
        hyperfine: Hyperfine splitting (GHz); documentation only
        omega0: Atomic frequency (rad/s); unused in the rotating frame
        omega_r: Field frequency (rad/s); unused in the rotating frame
        drive_scale: Calibration factor; ``None`` calibrates |g| T_g = pi at |E| = 1
    """

    mu1e: float = 2.54e-29
    mu2e: float = 2.54e-29
    detuning: float = 2.0 * math.pi * 1e9
    intensity: float = 20.0
    hyperfine: float = 6.835
    omega0: float = 0.0
    omega_r: float = 0.0
    drive_scale: Optional[float] = None

    def __post_init__(self):
        if self.detuning == 0:
            raise ValueError("detuning must be non-zero")
        if self.drive_scale is not None and self.drive_scale <= 0:
            raise ValueError("drive_scale must be positive")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")


@dataclass
class QuantumTask:
    """Target gates per atom and the simulation time grid.

    Attributes:
        gate_strings: One string over {I,X,Y,Z,H,S,T} per atom
        T_g: Gate time (us)
        t_steps: Number of simulation steps
    """

    gate_strings: List[str] = field(default_factory=lambda: ["X", "I", "I"])
    T_g: float = 0.1
    t_steps: int = 100

    def __post_init__(self):
        if not self.gate_strings:
            raise ValueError("at least one atom is required")
        if any(not s for s in self.gate_strings):
            raise GateStringError("gate strings must be non-empty")
        if self.t_steps < 1:
            raise ValueError("t_steps must be at least 1")
        if self.T_g <= 0:
            raise ValueError("T_g must be positive")

    @property
    def n_atoms(self) -> int:
        return len(self.gate_strings)

    @property
    def dt_seconds(self) -> float:
        return self.T_g * 1e-6 / self.t_steps


@dataclass
class SimResult:
    """Final propagator, its fidelity and the per-step data gradients reuse."""

    U_final: np.ndarray
    fidelity: float
    target: np.ndarray
    fields: np.ndarray  # (n_atoms, t_steps)
    couplings: np.ndarray  # (t_steps, n_atoms), rad/s
    hamiltonians: np.ndarray  # (t_steps, d, d)
    eigvals: np.ndarray  # (t_steps, d)
    eigvecs: np.ndarray  # (t_steps, d, d)
    step_unitaries: np.ndarray  # (t_steps, d, d)
    dt: float
    drive_scale: float
    coupling_scale: float  # g / E, rad/s
    chain: ChainTrace


# Targets


def parse_gate_string(s: str) -> np.ndarray:
    """Compose a gate string; ``"HS"`` is the matrix product H @ S.

    Raises:
        GateStringError: On an empty string or an unknown character
    """
    if not s:
        raise GateStringError("empty gate string")
    unknown = sorted(set(s) - set(GATES))
    if unknown:
        raise GateStringError(f"Unknown gate symbol(s) {unknown} in '{s}'")
    return reduce(np.matmul, (GATES[c] for c in s))


def build_target(task: QuantumTask) -> np.ndarray:
    """Kronecker product of the per-atom gates, atom 1 leftmost."""
    return reduce(np.kron, (parse_gate_string(s) for s in task.gate_strings))


# Drive


def global_field(intensity_mw_cm2: float) -> float:
    """Peak field amplitude E = sqrt(2 I / (c eps0)) in V/m."""
    intensity_w_m2 = intensity_mw_cm2 * 10.0
    return math.sqrt(2.0 * intensity_w_m2 / (constants.c * constants.epsilon_0))


def _raw_coupling(pc: PhysicalConstants) -> float:
    """Coupling in rad/s for a unit normalized local field and unit drive_scale."""
    e_glob = global_field(pc.intensity)
    return pc.mu1e * pc.mu2e * e_glob * e_glob / (2.0 * constants.hbar**2 * pc.detuning)


def resolve_drive_scale(pc: PhysicalConstants, T_g: float) -> float:
    """The configured drive_scale, or the one giving |g| T_g = pi at |E| = 1."""
    if pc.drive_scale is not None:
        return pc.drive_scale
    raw = abs(_raw_coupling(pc))
    if raw == 0:
        raise ValueError("zero laser intensity cannot be calibrated")
    return math.pi / (raw * T_g * 1e-6)


def coupling_strengths(
    E, pc: PhysicalConstants, drive_scale: Optional[float] = None
) -> np.ndarray:
    """Raman coupling g_j (rad/s) for normalized local fields ``E``.

    One Raman leg is the global beam, the other the local field E_j * E_glob,
    so g_j is linear in E_j and keeps its phase. Without any drive_scale the
    bare physical coupling is returned.
    """
    scale = pc.drive_scale if drive_scale is None else drive_scale
    if scale is None:
        scale = 1.0
    return scale * _raw_coupling(pc) * np.asarray(E, dtype=complex)


# Dynamics


def _embedded(op: np.ndarray, j: int, n_atoms: int) -> np.ndarray:
    factors = [op if i == j else np.eye(2, dtype=complex) for i in range(n_atoms)]
    return reduce(np.kron, factors)


def ladder_operators(n_atoms: int) -> np.ndarray:
    """sigma_plus of every atom embedded in the register, shape (n_atoms, d, d)."""
    return np.stack([_embedded(SIGMA_PLUS, j, n_atoms) for j in range(n_atoms)])


def control_hamiltonian(g) -> np.ndarray:
    """H = sum_j (g_j sigma_plus_j + conj(g_j) sigma_minus_j).

    Accepts a vector of couplings or a (t_steps, n_atoms) array, in which case
    a stack of Hamiltonians is returned.
    """
    g = np.asarray(g, dtype=complex)
    n_atoms = g.shape[-1]
    raising = ladder_operators(n_atoms)
    H = np.tensordot(g, raising, axes=([-1], [0]))
    return H + np.conj(np.swapaxes(H, -1, -2))


def gate_fidelity(U: np.ndarray, U_target: np.ndarray) -> float:
    """F = |Tr(U_target^dagger U)|^2 / d^2."""
    if U.shape != U_target.shape:
        raise DimensionMismatch(f"propagator {U.shape} vs target {U_target.shape}")
    d = U.shape[0]
    overlap = np.trace(U_target.conj().T @ U)
    return float(min(1.0, abs(overlap) ** 2 / d**2))


def step_propagators(hamiltonians: np.ndarray, dt: float):
    """Eigendecompose every step Hamiltonian and exponentiate exp(-i H dt)."""
    eigvals, eigvecs = np.linalg.eigh(hamiltonians)
    phases = np.exp(-1j * eigvals * dt)
    unitaries = np.einsum("kab,kb,kcb->kac", eigvecs, phases, eigvecs.conj())
    return eigvals, eigvecs, unitaries


def propagate(
    schedule: ControlSchedule,
    hw: HardwareModel,
    task: QuantumTask,
    pc: PhysicalConstants,
) -> SimResult:
    """Simulate the register for the whole gate time.

    Raises:
        ConstraintViolation: If a voltage is out of range
        SegmentationError: If the segment count does not divide t_steps
        DimensionMismatch: If channel, atom and schedule counts disagree
    """
    if schedule.n_channels != task.n_atoms or hw.pic.n_channels != task.n_atoms:
        raise DimensionMismatch(
            f"{task.n_atoms} atoms need {task.n_atoms} channels; schedule has "
            f"{schedule.n_channels}, PIC has {hw.pic.n_channels}"
        )
    chain = trace_chain(schedule, hw, task.t_steps)
    scale = resolve_drive_scale(pc, task.T_g)
    g = coupling_strengths(chain.fields.T, pc, scale)
    hamiltonians = control_hamiltonian(g)
    dt = task.dt_seconds
    eigvals, eigvecs, unitaries = step_propagators(hamiltonians, dt)

    identity = np.eye(unitaries.shape[-1], dtype=complex)
    U = reduce(lambda acc, Uk: Uk @ acc, unitaries, identity)
    target = build_target(task)
    return SimResult(
        U_final=U,
        fidelity=gate_fidelity(U, target),
        target=target,
        fields=chain.fields,
        couplings=g,
        hamiltonians=hamiltonians,
        eigvals=eigvals,
        eigvecs=eigvecs,
        step_unitaries=unitaries,
        dt=dt,
        drive_scale=scale,
        coupling_scale=scale * _raw_coupling(pc),
        chain=chain,
    )


def cost(
    schedule: ControlSchedule,
    hw: HardwareModel,
    task: QuantumTask,
    pc: PhysicalConstants,
) -> float:
    """Gate error 1 - F of the schedule."""
    return 1.0 - propagate(schedule, hw, task, pc).fidelity


@dataclass
class ControlProblem:
    """A hardware model, a task and constants, seen as a function of voltages.

    Optimizers work on the flattened schedule vector of length
    ``n_channels * 2 * n_segments``; every method accepts either that vector or
    a :class:`ControlSchedule`.
    """

    hw: HardwareModel
    task: QuantumTask
    pc: PhysicalConstants = field(default_factory=PhysicalConstants)
    n_segments: int = 10

    def __post_init__(self):
        if self.hw.pic.n_channels != self.task.n_atoms:
            raise DimensionMismatch(
                f"PIC has {self.hw.pic.n_channels} channels "
                f"for {self.task.n_atoms} atoms"
            )
        segment_of_steps(self.task.t_steps, self.n_segments)
        scale = resolve_drive_scale(self.pc, self.task.T_g)
        logger.info(
            "drive_scale=%.6g (|g|T_g=%.4f rad at unit field, %d steps, %d segments)",
            scale,
            abs(_raw_coupling(self.pc)) * scale * self.task.T_g * 1e-6,
            self.task.t_steps,
            self.n_segments,
        )

    @property
    def n_channels(self) -> int:
        return self.task.n_atoms

    @property
    def dimension(self) -> int:
        return self.n_channels * 2 * self.n_segments

    def schedule(self, x) -> ControlSchedule:
        if isinstance(x, ControlSchedule):
            return x
        return ControlSchedule.from_flat(x, self.n_channels, self.n_segments)

    def simulate(self, x) -> SimResult:
        return propagate(self.schedule(x), self.hw, self.task, self.pc)

    def fidelity(self, x) -> float:
        return self.simulate(x).fidelity

    def cost(self, x) -> float:
        return 1.0 - self.fidelity(x)

    def with_resolution(
        self, n_segments: int, t_steps: Optional[int] = None
    ) -> "ControlProblem":
        """Same physics on another segment count and optionally another grid."""
        task = self.task if t_steps is None else replace(self.task, t_steps=t_steps)
        return ControlProblem(hw=self.hw, task=task, pc=self.pc, n_segments=n_segments)
