"""Quantum optimal control of atom arrays addressed through an imperfect photonic chip.

The package models the photonic control chain (programmable PIC with
waveguide crosstalk, SLM, leaky Gaussian beams), simulates the qubit
register it drives, differentiates the gate error exactly and provides
three interchangeable schedule optimizers plus an experiment harness.
"""

# Hardware model
from .hwmodel import (
    BeamLattice,
    ControlSchedule,
    CouplingFit,
    DrmzmConfig,
    HardwareModel,
    ImperfectionConfig,
    PicGeometry,
    SlmConfig,
    forward_chain,
)

# Simulation
from .qsim import ControlProblem, PhysicalConstants, QuantumTask, SimResult, propagate

# Gradients
from .diffengine import GradientTape, grad_cost, value_and_grad

# Optimizers
from .optimizers import (
    E2eConfig,
    EndToEndOptimizer,
    HybridSadeAdam,
    Optimizer,
    OptimizerFactory,
    OptimizerReport,
    PpoConfig,
    PpoOptimizer,
)

# Harness
from .harness import ExperimentConfig, load_config, preset, run_experiment

__version__ = "1.0.0"

__all__ = [
    # Hardware
    "BeamLattice",
    "ControlSchedule",
    "CouplingFit",
    "DrmzmConfig",
    "HardwareModel",
    "ImperfectionConfig",
    "PicGeometry",
    "SlmConfig",
    "forward_chain",
    # Simulation
    "ControlProblem",
    "PhysicalConstants",
    "QuantumTask",
    "SimResult",
    "propagate",
    # Gradients
    "GradientTape",
    "grad_cost",
    "value_and_grad",
    # Optimizers
    "E2eConfig",
    "EndToEndOptimizer",
    "HybridSadeAdam",
    "Optimizer",
    "OptimizerFactory",
    "OptimizerReport",
    "PpoConfig",
    "PpoOptimizer",
    # Harness
    "ExperimentConfig",
    "load_config",
    "preset",
    "run_experiment",
]
