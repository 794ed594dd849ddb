"""Numerical self-checks behind the ``check``, ``gradcheck`` and ``leakage`` commands.

Every check returns a :class:`CheckResult` with the measured worst case and
the tolerance it was held to; nothing here raises on a failed property.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from scipy.linalg import expm

from ..diffengine import finite_diff_grad, grad_cost
from ..hwmodel import (
    V_MAX,
    ControlSchedule,
    CouplingFit,
    HardwareModel,
    ImperfectionConfig,
    PicGeometry,
    SlmConfig,
    build_pic_matrix,
    channel_stages,
    crosstalk_matrix,
    field_map,
    forward_chain,
    pi_pulse_schedule,
    segment_of_steps,
    transmission_to_voltages,
)
from ..optimizers.e2e import E2eConfig
from ..optimizers.factory import OptimizerFactory, SadeAdamSettings
from ..optimizers.ppo import PpoConfig
from ..optimizers.sade_adam import AdamRefineConfig, SadeConfig
from ..qsim import (
    ControlProblem,
    PhysicalConstants,
    QuantumTask,
    control_hamiltonian,
    gate_fidelity,
    propagate,
    resolve_drive_scale,
    step_propagators,
)
from .plots import emit_field_map
from .presets import random_gate_set

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def random_schedule(
    rng: np.random.Generator, n_channels: int, n_segments: int, bound: float = V_MAX
) -> ControlSchedule:
    return ControlSchedule(rng.uniform(-bound, bound, size=(n_channels, 2, n_segments)))


def _imperfect_hardware(dynamic: bool = False) -> HardwareModel:
    """Default chip with scattering, a non-trivial SLM and optional drifts."""
    return HardwareModel(
        slm=SlmConfig(amplitudes=[1.0, 0.9, 0.8], phases=[0.0, 0.3, -0.2]),
        imperfections=ImperfectionConfig(weak_scatter_eps=0.05, dynamic=dynamic),
    )


def check_unitarity(
    n_samples: int = 100, seed: int = 0, tol: float = 1e-10
) -> CheckResult:
    """Worst ||U^dagger U - I||_F over random schedules.

    Every other sample has the dynamic drifts switched on.
    """
    rng = np.random.default_rng(seed)
    task, pc = QuantumTask(), PhysicalConstants()
    worst = 0.0
    for i in range(n_samples):
        hw = _imperfect_hardware(dynamic=bool(i % 2))
        U = propagate(random_schedule(rng, 3, 10), hw, task, pc).U_final
        worst = max(worst, float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))))
    return CheckResult("unitarity", worst, tol, f"{n_samples} random schedules")


def check_propagator(
    n_samples: int = 20, seed: int = 0, tol: float = 1e-10
) -> CheckResult:
    """Eigendecomposed step propagators against ``scipy.linalg.expm``."""
    rng = np.random.default_rng(seed)
    dt = 1e-9
    shape = (n_samples, 3)
    g = 1e9 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    H = control_hamiltonian(g)
    _, _, U = step_propagators(H, dt)
    reference = np.stack([expm(-1j * h * dt) for h in H])
    worst = float(np.max(np.abs(U - reference)))
    return CheckResult("propagator", worst, tol, f"{n_samples} random drives")


def check_global_phase(
    n_samples: int = 20, seed: int = 0, tol: float = 1e-12
) -> CheckResult:
    rng = np.random.default_rng(seed)
    task, pc, hw = QuantumTask(), PhysicalConstants(), HardwareModel()
    worst = 0.0
    for _ in range(n_samples):
        sim = propagate(random_schedule(rng, 3, 10), hw, task, pc)
        phase = np.exp(1j * rng.uniform(0, 2 * math.pi))
        shifted = gate_fidelity(phase * sim.U_final, sim.target)
        worst = max(worst, abs(shifted - sim.fidelity))
    return CheckResult("global_phase", worst, tol, f"{n_samples} random phases")


def check_linearity(
    n_samples: int = 10, seed: int = 0, tol: float = 1e-12
) -> CheckResult:
    """Superposition of input amplitudes through the whole chain, relative error."""
    rng = np.random.default_rng(seed)
    hw = _imperfect_hardware(dynamic=True)
    worst = 0.0
    for _ in range(n_samples):
        schedule = random_schedule(rng, 3, 10)
        a1 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        a2 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        alpha, beta = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        combined = forward_chain(schedule, hw, alpha * a1 + beta * a2)
        separate = alpha * forward_chain(schedule, hw, a1)
        separate = separate + beta * forward_chain(schedule, hw, a2)
        scale = max(float(np.max(np.abs(combined))), 1e-300)
        worst = max(worst, float(np.max(np.abs(combined - separate))) / scale)
    return CheckResult("linearity", worst, tol, f"{n_samples} random input pairs")


def rabi_fidelity(
    transmission: float,
    hw: Optional[HardwareModel] = None,
    area_scale: float = 1.0,
) -> float:
    """Simulated X fidelity of one atom under a constant real transmission.

    ``area_scale`` multiplies the default calibration, so a unit field gives
    |g| T_g = area_scale * pi.
    """
    hw = hw or HardwareModel(pic=PicGeometry(n_channels=1))
    task = QuantumTask(gate_strings=["X"], t_steps=10)
    scale = area_scale * resolve_drive_scale(PhysicalConstants(), task.T_g)
    v0, v1 = transmission_to_voltages(transmission, hw.drmzm)
    voltages = np.empty((1, 2, 1))
    voltages[0, 0, 0], voltages[0, 1, 0] = float(v0), float(v1)
    pc = PhysicalConstants(drive_scale=scale)
    return propagate(ControlSchedule(voltages), hw, task, pc).fidelity


def check_rabi(n_points: int = 50, tol: float = 1e-9) -> CheckResult:
    """Constant drive on one atom against F = sin^2(2 pi T).

    The calibration is doubled so a unit field gives |g| T_g = 2 pi; a
    constant transmission T rotates by theta = 2 pi T and the X fidelity is
    sin^2(theta). The sweep covers theta in [0, 2 pi].
    """
    transmissions = np.linspace(0.0, 1.0, n_points)
    errors = [
        abs(rabi_fidelity(t, area_scale=2.0) - math.sin(2.0 * math.pi * t) ** 2)
        for t in transmissions
    ]
    detail = f"{n_points} drive areas in [0, 2 pi]"
    return CheckResult("rabi", float(max(errors)), tol, detail)


def check_pitch_limit(seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """A very wide pitch must behave exactly like a chip without coupling."""
    rng = np.random.default_rng(seed)
    wide = HardwareModel(pic=PicGeometry(d0=50.0))
    uncoupled = HardwareModel(coupling=CouplingFit(kappa0=0.0))
    task, pc = QuantumTask(gate_strings=["X", "H", "I"]), PhysicalConstants()
    worst = float(np.max(np.abs(crosstalk_matrix(wide))))
    for _ in range(5):
        schedule = random_schedule(rng, 3, 10)
        gap = propagate(schedule, wide, task, pc).fidelity
        gap -= propagate(schedule, uncoupled, task, pc).fidelity
        worst = max(worst, abs(gap))
    return CheckResult("pitch_limit", worst, tol, "d0 = 50 um against kappa0 = 0")


def check_optimizer_bounds(seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Short runs of every optimizer: voltages stay in range, fidelity re-simulates.

    The value is the worst re-simulation mismatch; a bound violation reports inf.
    """
    settings = {
        "sade_adam": SadeAdamSettings(
            sade=SadeConfig(popsize=6, max_generations=2),
            adam=AdamRefineConfig(max_steps=2),
        ),
        "ppo": PpoConfig(
            episodes=2,
            episode_length=4,
            rollout_steps=8,
            minibatch=4,
            epochs=1,
            hidden=[16],
        ),
        "e2e": E2eConfig(
            hidden=[8], latent_dim=4, phases=[5, 10], phase_episodes=[2, 2]
        ),
    }
    task = QuantumTask(gate_strings=["X", "I", "Z"], t_steps=20)
    worst = 0.0
    for kind, cfg in settings.items():
        n_segments = cfg.phases[-1] if kind == "e2e" else 5
        problem = ControlProblem(HardwareModel(), task, PhysicalConstants(), n_segments)
        report = OptimizerFactory.create_optimizer(kind, cfg).run(problem, seed)
        if np.max(np.abs(report.best_schedule)) > V_MAX:
            detail = f"{kind} left the bounds"
            return CheckResult("optimizer_bounds", math.inf, tol, detail)
        resimulated = problem.fidelity(report.best_schedule)
        worst = max(worst, abs(resimulated - report.best_fidelity))
    return CheckResult("optimizer_bounds", worst, tol, ", ".join(settings))


def run_property_suite(
    seed: int = 0, out_dir: Optional[PathLike] = None
) -> List[CheckResult]:
    """All fast property checks; writes ``checks.csv`` when ``out_dir`` is given."""
    results = [
        check_unitarity(seed=seed),
        check_propagator(seed=seed),
        check_global_phase(seed=seed),
        check_linearity(seed=seed),
        check_rabi(),
        check_pitch_limit(seed=seed),
        check_optimizer_bounds(seed=seed),
    ]
    for r in results:
        level = logging.INFO if r.passed else logging.ERROR
        logger.log(
            level,
            "%-16s %.3e (tol %.0e) %s",
            r.name,
            r.value,
            r.tolerance,
            r.detail,
        )
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _results_frame(results).to_csv(Path(out_dir) / "checks.csv", index=False)
    return results


def _results_frame(results: List[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.name, r.value, r.tolerance, r.passed, r.detail) for r in results],
        columns=["check", "value", "tolerance", "passed", "detail"],
    )


# Gradient oracle


@dataclass
class GradcheckResult:
    errors: List[float]
    tolerance: float
    points: List[Dict[str, object]] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def gradient_check(
    n_points: int = 20,
    seed: int = 0,
    h: float = 1e-4,
    tol: float = 1e-5,
    n_segments: int = 5,
    t_steps: int = 20,
    out_dir: Optional[PathLike] = None,
) -> GradcheckResult:
    """Adjoint gradients against central differences with crosstalk and leakage on.

    Each point draws its own target gates and voltages; the error is
    ||g - g_fd||_inf / ||g_fd||_inf. Voltages stay 1 V inside the bounds so
    the difference stencil never leaves them.
    """
    rng = np.random.default_rng(seed)
    hw, pc = HardwareModel(), PhysicalConstants()
    errors, points = [], []
    for i in range(n_points):
        gates = random_gate_set(3, 3, int(rng.integers(0, 2**31)))
        task = QuantumTask(gate_strings=gates, t_steps=t_steps)
        schedule = random_schedule(rng, 3, n_segments, bound=V_MAX - 1.0)
        exact = grad_cost(schedule, hw, task, pc)
        numeric = finite_diff_grad(schedule, hw, task, pc, h=h)
        scale = max(float(np.max(np.abs(numeric))), 1e-12)
        error = float(np.max(np.abs(exact - numeric))) / scale
        errors.append(error)
        points.append({"point": i, "gates": "/".join(gates), "relative_error": error})
        logger.debug("gradcheck point %d (%s): %.3e", i, "/".join(gates), error)
    result = GradcheckResult(errors=errors, tolerance=tol, points=points)
    logger.log(
        logging.INFO if result.passed else logging.ERROR,
        "gradcheck: max relative error %.3e over %d points (tol %.0e)",
        result.max_error,
        n_points,
        tol,
    )
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        pd.DataFrame(points).to_csv(Path(out_dir) / "gradcheck.csv", index=False)
    return result


# Open-loop leakage demonstration


@dataclass
class LeakageDemoResult:
    fidelities: Dict[str, float]
    field_map_path: Optional[Path] = None


def leakage_cases(hw: HardwareModel) -> Dict[str, HardwareModel]:
    """The chip isolated, with beam leakage only, and with leakage and crosstalk."""
    no_coupling = replace(hw, coupling=CouplingFit(kappa0=0.0))
    far_lattice = replace(hw.lattice, spacing=1e3, atom_positions=[], beam_centers=[])
    far_apart = replace(no_coupling, lattice=far_lattice)
    return {"isolated": far_apart, "leakage": no_coupling, "leakage_crosstalk": hw}


def leakage_demo(
    hw: Optional[HardwareModel] = None,
    task: Optional[QuantumTask] = None,
    pc: Optional[PhysicalConstants] = None,
    channel: int = 0,
    shape: str = "square",
    n_segments: int = 10,
    out_dir: Optional[PathLike] = None,
    grid_points: int = 61,
) -> LeakageDemoResult:
    """Fidelity of an open-loop pi pulse on one channel as imperfections are added.

    The idle channels stay at 0 V on both rings, which passes the full field
    and gives them a 2 pi rotation, i.e. the identity. With ``out_dir`` the
    cases go to ``leakage_cases.csv`` and the field on the atom plane at half
    the gate time to ``field_map.csv``.
    """
    hw = hw or HardwareModel()
    task = task or QuantumTask(gate_strings=["X", "I", "I"])
    pc = pc or PhysicalConstants()
    schedule = pi_pulse_schedule(
        hw.pic.n_channels, n_segments, channel, hw.drmzm, shape=shape
    )

    fidelities = {
        name: propagate(schedule, case, task, pc).fidelity
        for name, case in leakage_cases(hw).items()
    }
    for name, value in fidelities.items():
        logger.info("leakage demo %-18s F = %.6f", name, value)

    result = LeakageDemoResult(fidelities=fidelities)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(list(fidelities.items()), columns=["case", "fidelity"])
        frame.to_csv(out / "leakage_cases.csv", index=False)
        xs, ys, plane = half_time_field(schedule, hw, task.t_steps, grid_points)
        result.field_map_path = emit_field_map(plane, xs, ys, out / "field_map.csv")
    return result


def half_time_field(
    schedule: ControlSchedule, hw: HardwareModel, t_steps: int, grid_points: int
):
    """Field on a grid around the atoms at step t_steps // 2 (static chip)."""
    n = hw.pic.n_channels
    segment = segment_of_steps(t_steps, schedule.n_segments)[t_steps // 2]
    step_voltages = schedule.voltages[:, :, segment]
    M = build_pic_matrix(step_voltages, crosstalk_matrix(hw), hw.drmzm)
    b = channel_stages(M @ hw.input_amplitudes(), hw)
    sites = hw.lattice.sites(n)
    margin = 2.0 * hw.lattice.w0
    lo, hi = sites.min(axis=0) - margin, sites.max(axis=0) + margin
    xs = np.linspace(lo[0], hi[0], grid_points)
    ys = np.linspace(lo[1], hi[1], grid_points)
    return xs, ys, field_map(b, hw.lattice, xs, ys)
