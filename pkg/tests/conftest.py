"""Pytest configuration and fixtures."""

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from photonic_qoc.harness.config import ExperimentConfigBuilder  # noqa: E402
from photonic_qoc.hwmodel import (  # noqa: E402
    BeamLattice,
    CouplingFit,
    HardwareModel,
    ImperfectionConfig,
    PicGeometry,
    SlmConfig,
)
from photonic_qoc.optimizers.factory import SadeAdamSettings  # noqa: E402
from photonic_qoc.optimizers.sade_adam import AdamRefineConfig, SadeConfig  # noqa: E402
from photonic_qoc.qsim import (  # noqa: E402
    ControlProblem,
    PhysicalConstants,
    QuantumTask,
)

# ===============================================================================
# Hardware Fixtures
# ===============================================================================


@pytest.fixture
def hardware():
    """Default three-channel chip: crosstalk and beam leakage on, no drifts."""
    return HardwareModel()


@pytest.fixture
def imperfect_hardware():
    """Chip with weak scattering, a non-trivial SLM and time-varying drifts."""
    return HardwareModel(
        slm=SlmConfig(amplitudes=[1.0, 0.9, 0.8], phases=[0.0, 0.3, -0.2]),
        imperfections=ImperfectionConfig(weak_scatter_eps=0.05, dynamic=True),
    )


@pytest.fixture
def isolated_hardware():
    """Chip without crosstalk whose beams do not overlap."""
    return HardwareModel(
        coupling=CouplingFit(kappa0=0.0),
        lattice=BeamLattice(spacing=1e3),
    )


@pytest.fixture
def single_channel_hardware():
    """One channel, one atom: the constant-drive Rabi setting."""
    return HardwareModel(pic=PicGeometry(n_channels=1))


@pytest.fixture
def exact_geometry():
    """Three channels with no fabrication spread."""
    return PicGeometry(n_channels=3, delta_d_range=0.0, delta_L_range=0.0)


# ===============================================================================
# Problem Fixtures
# ===============================================================================


@pytest.fixture
def physics():
    """Default Raman constants with the unit-field calibration."""
    return PhysicalConstants()


@pytest.fixture
def small_task():
    """Three-atom task on a coarse time grid."""
    return QuantumTask(gate_strings=["X", "I", "Z"], t_steps=10)


@pytest.fixture
def small_problem(hardware, small_task, physics):
    """Three-atom control problem with 5 segments (30 voltages)."""
    return ControlProblem(hw=hardware, task=small_task, pc=physics, n_segments=5)


@pytest.fixture
def rng():
    """Seeded generator for random schedules and inputs."""
    return np.random.default_rng(1234)


# ===============================================================================
# Experiment Fixtures
# ===============================================================================


@pytest.fixture
def tiny_sade_adam():
    """Hybrid settings small enough for a run in well under a second."""
    return SadeAdamSettings(
        sade=SadeConfig(popsize=4, max_generations=1),
        adam=AdamRefineConfig(max_steps=1),
    )


@pytest.fixture
def tiny_experiment(tiny_sade_adam, tmp_path):
    """Five-seed experiment on a coarse grid writing under a temporary directory."""
    return (
        ExperimentConfigBuilder()
        .set_name("tiny")
        .set_gates(["X", "I", "I"])
        .set_time_grid(0.1, 10)
        .set_optimizer("sade_adam", tiny_sade_adam, n_segments=5)
        .set_output_dir(str(tmp_path / "runs"))
        .build()
    )


@pytest.fixture
def quiet_logging():
    """Restore the root logger after tests that reconfigure logging."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers = handlers
    root.setLevel(level)


# ===============================================================================
# Test Configuration
# ===============================================================================


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line("markers", "integration: marks tests as integration tests")
