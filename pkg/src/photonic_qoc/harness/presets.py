"""Named experiment presets and random target-gate sets."""

from typing import Callable, Dict, List

import numpy as np

from ..hwmodel import HardwareModel, ImperfectionConfig
from ..optimizers import AdamRefineConfig, SadeAdamSettings
from .config import ExperimentConfig, ExperimentConfigBuilder

GATE_POOL: List[str] = [
    "I", "X", "Y", "Z", "H", "S", "T",
    "SH", "HS", "ZH", "YH", "XH", "XS", "YS", "ZS", "SZ", "HX", "SY",
    "HSX", "HSY", "HSZ", "XHS", "YHS", "ZHS",
]  # fmt: skip

PITCH_VALUES = [0.25, 0.5, 1.0, 2.0, 4.0]

METHODS = ["sade_adam", "ppo", "e2e"]

# Seeds the preset gate sets are drawn with
GATE_SEEDS = {"intermediate_ng2": 11, "hard_ng3": 13}

# Adam steps of the easy preset
EASY_ADAM_STEPS = 40000


def random_gate_set(n_gates: int, n_atoms: int, seed: int) -> List[str]:
    """Draw ``n_gates`` non-identity targets for the first atoms; the rest get ``"I"``.

    ``"I"`` is never drawn, so ``n_gates`` is exactly the number of atoms with
    a non-trivial target.

    Raises:
        ValueError: If ``n_gates`` is negative or exceeds ``n_atoms``
    """
    if not 0 <= n_gates <= n_atoms:
        raise ValueError(f"cannot place {n_gates} gates on {n_atoms} atoms")
    candidates = [g for g in GATE_POOL if g != "I"]
    rng = np.random.default_rng(seed)
    drawn = [candidates[i] for i in rng.integers(0, len(candidates), size=n_gates)]
    return drawn + ["I"] * (n_atoms - n_gates)


def _base(name: str) -> ExperimentConfigBuilder:
    return ExperimentConfigBuilder().set_name(name).set_output_dir(f"runs/{name}")


def easy_x1() -> ExperimentConfig:
    """X on the first atom, identity on the other two, hybrid optimizer."""
    settings = SadeAdamSettings(adam=AdamRefineConfig(max_steps=EASY_ADAM_STEPS))
    return (
        _base("easy_x1")
        .set_gates(["X", "I", "I"])
        .set_optimizer("sade_adam", settings)
        .build()
    )


def intermediate_ng2() -> ExperimentConfig:
    gates = random_gate_set(2, 3, GATE_SEEDS["intermediate_ng2"])
    return _base("intermediate_ng2").set_gates(gates).set_optimizer("e2e").build()


def hard_ng3() -> ExperimentConfig:
    gates = random_gate_set(3, 3, GATE_SEEDS["hard_ng3"])
    return _base("hard_ng3").set_gates(gates).set_optimizer("e2e").build()


def pitch_sweep() -> ExperimentConfig:
    return (
        _base("pitch_sweep")
        .set_gates(random_gate_set(3, 3, GATE_SEEDS["hard_ng3"]))
        .set_optimizer("e2e")
        .sweep("hardware.pic.d0", PITCH_VALUES)
        .build()
    )


def dynamic_imperfections() -> ExperimentConfig:
    hardware = HardwareModel(
        imperfections=ImperfectionConfig(
            dynamic=True, delta_kappa=0.5, delta_alpha=0.2, delta_w=0.1
        )
    )
    return (
        _base("dynamic_imperfections")
        .set_hardware(hardware)
        .set_gates(random_gate_set(3, 3, GATE_SEEDS["hard_ng3"]))
        .set_optimizer("e2e")
        .build()
    )


def _method_comparison(name: str, gates: List[str]) -> ExperimentConfig:
    return _base(name).set_gates(gates).sweep("optimizer.kind", METHODS).build()


def method_comparison_ng2() -> ExperimentConfig:
    """The three optimizers with default settings on the two-gate targets."""
    gates = random_gate_set(2, 3, GATE_SEEDS["intermediate_ng2"])
    return _method_comparison("method_comparison_ng2", gates)


def method_comparison_ng3() -> ExperimentConfig:
    """The three optimizers with default settings on the three-gate targets."""
    gates = random_gate_set(3, 3, GATE_SEEDS["hard_ng3"])
    return _method_comparison("method_comparison_ng3", gates)


def leakage_demo() -> ExperimentConfig:
    """Hardware and target of the open-loop pulse demonstration.

    Only the hardware, task and physics sections are used; the pulse is not
    optimized.
    """
    return _base("leakage_demo").set_gates(["X", "I", "I"]).set_seeds([0]).build()


PRESETS: Dict[str, Callable[[], ExperimentConfig]] = {
    "easy_x1": easy_x1,
    "intermediate_ng2": intermediate_ng2,
    "hard_ng3": hard_ng3,
    "pitch_sweep": pitch_sweep,
    "dynamic_imperfections": dynamic_imperfections,
    "method_comparison_ng2": method_comparison_ng2,
    "method_comparison_ng3": method_comparison_ng3,
    "leakage_demo": leakage_demo,
}


def preset(name: str) -> ExperimentConfig:
    """Build a named preset.

    Raises:
        ValueError: If the name is unknown
    """
    if name not in PRESETS:
        available = ", ".join(sorted(PRESETS))
        raise ValueError(f"Unknown preset: {name}. Available: {available}")
    return PRESETS[name]()
