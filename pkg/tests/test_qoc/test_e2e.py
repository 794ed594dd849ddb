"""Tests for end-to-end policy training."""

import numpy as np
import pytest

from photonic_qoc.hwmodel import V_MAX
from photonic_qoc.nn import MlpParams, mlp_init
from photonic_qoc.optimizers.base import TerminationReason
from photonic_qoc.optimizers.e2e import (
    E2eConfig,
    EndToEndOptimizer,
    policy_schedule,
    policy_spec,
    refine_resolution,
    train_e2e,
)
from photonic_qoc.qsim import QuantumTask


@pytest.fixture
def tiny_e2e():
    """Two short curriculum phases on a small network."""
    return E2eConfig(hidden=[8], latent_dim=4, phases=[1, 5], phase_episodes=[2, 3])


class TestE2eConfig:
    """Test end-to-end settings."""

    def test_defaults(self):
        """Test the default curriculum."""
        cfg = E2eConfig()

        assert cfg.phases == [20, 50, 100]
        assert cfg.lr == 3e-3
        assert cfg.latent_mode == "first_phase"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"phases": [20, 20], "phase_episodes": [1, 1]},
            {"phases": [20, 50], "phase_episodes": [1]},
            {"latent_dim": 0},
            {"latent_mode": "never"},
            {"lr_decay": 1.0},
            {"stagnation_rel": 1.0},
        ],
    )
    def test_invalid(self, kwargs):
        """Test settings validation."""
        with pytest.raises(ValueError):
            E2eConfig(**kwargs)


class TestPolicy:
    """Test the latent-to-schedule network."""

    def test_schedule_is_bounded(self, rng):
        """Test that tanh output keeps every voltage inside the range."""
        cfg = E2eConfig(hidden=[8], latent_dim=4)
        params = mlp_init(policy_spec(cfg, 3, 6), 0)
        schedule = policy_schedule(params, rng.standard_normal(4) * 100, 3)

        assert schedule.voltages.shape == (3, 2, 6)
        assert np.all(np.abs(schedule.voltages) <= V_MAX)

    def test_refinement_holds_schedule(self, rng):
        """Test that a doubled grid repeats every old segment twice."""
        cfg = E2eConfig(hidden=[8], latent_dim=4)
        params = mlp_init(policy_spec(cfg, 3, 5), 2)
        z = rng.standard_normal(4)

        coarse = policy_schedule(params, z, 3).voltages
        fine = policy_schedule(refine_resolution(params, 5, 10, 3), z, 3).voltages

        np.testing.assert_allclose(fine, np.repeat(coarse, 2, axis=-1))

    def test_refinement_uneven_grid(self, rng):
        """Test that every new segment copies one of the old ones."""
        cfg = E2eConfig(hidden=[8], latent_dim=4)
        params = mlp_init(policy_spec(cfg, 2, 2), 3)
        z = rng.standard_normal(4)

        coarse = policy_schedule(params, z, 2).voltages
        fine = policy_schedule(refine_resolution(params, 2, 5, 2), z, 2).voltages

        np.testing.assert_allclose(fine, coarse[..., [0, 0, 1, 1, 1]])

    def test_refinement_keeps_fidelity(self, small_problem, rng):
        """Test that switching a smooth policy from 20 to 50 segments keeps F."""
        cfg = E2eConfig(hidden=[8], latent_dim=4)
        params = mlp_init(policy_spec(cfg, 3, 20), 0)
        rows = np.arange(6)[:, None]
        centres = (np.arange(20)[None, :] + 0.5) / 20
        smooth = 0.2 * np.sin(2.0 * np.pi * centres + rows)
        params = MlpParams(
            weights=params.weights[:-1] + [np.zeros_like(params.weights[-1])],
            biases=params.biases[:-1] + [smooth.reshape(-1)],
            activations=params.activations,
        )
        z = rng.standard_normal(4)

        coarse = small_problem.with_resolution(20, t_steps=20)
        fine = small_problem.with_resolution(50, t_steps=50)
        before = coarse.fidelity(policy_schedule(params, z, 3))
        refined = refine_resolution(params, 20, 50, 3)
        after = fine.fidelity(policy_schedule(refined, z, 3))

        assert abs(after - before) <= 2e-2

    def test_refinement_checks_width(self):
        """Test that the output layer must match the old grid."""
        params = mlp_init(policy_spec(E2eConfig(hidden=[8], latent_dim=4), 3, 5), 0)

        with pytest.raises(ValueError):
            refine_resolution(params, 4, 8, 3)


class TestEndToEndOptimizer:
    """Test curriculum training."""

    def test_run(self, small_problem, tiny_e2e):
        """Test that every phase runs its budget and the report is consistent."""
        report = EndToEndOptimizer(tiny_e2e).run(small_problem, seed=0)
        final_problem = small_problem.with_resolution(5)

        assert report.optimizer == "e2e"
        assert report.episodes == 5
        assert len(report.trace) == 5
        assert [p["segments"] for p in report.details["phases"]] == [1, 5]
        assert report.best_schedule.shape == (3, 2, 5)
        assert report.best_fidelity == pytest.approx(
            final_problem.fidelity(report.best_schedule), abs=1e-12
        )

    def test_trace_is_monotone(self, small_problem, tiny_e2e):
        """Test that the best cost never increases across phases."""
        report = EndToEndOptimizer(tiny_e2e).run(small_problem, seed=1)
        costs = [p.best_cost for p in report.trace]

        assert all(b <= a for a, b in zip(costs, costs[1:]))
        assert [p.phase for p in report.trace] == ["S=1"] * 2 + ["S=5"] * 3

    def test_deterministic(self, small_problem, tiny_e2e):
        """Test that a seed fixes the result."""
        first = EndToEndOptimizer(tiny_e2e).run(small_problem, seed=4)
        second = EndToEndOptimizer(tiny_e2e).run(small_problem, seed=4)

        np.testing.assert_array_equal(first.best_schedule, second.best_schedule)

    def test_stagnation_decays_then_stops(self, small_problem):
        """Test that a frozen network decays its rate twice and then stops."""
        cfg = E2eConfig(
            hidden=[8],
            latent_dim=4,
            phases=[5],
            phase_episodes=[20],
            lr=1e-12,
            stagnation_window=1,
            stagnation_rel=0.5,
            latent_mode="fixed",
        )
        report = EndToEndOptimizer(cfg).run(small_problem, seed=0)
        phase = report.details["phases"][0]

        assert phase["termination"] == TerminationReason.STAGNATION.value
        assert phase["episodes"] == 4
        assert phase["final_lr"] == pytest.approx(0.25e-12)

    def test_zero_learning_rate(self, small_problem):
        """Test that lr=0 freezes the network and the fidelity trace."""
        cfg = E2eConfig(
            hidden=[8],
            latent_dim=4,
            phases=[5],
            phase_episodes=[6],
            lr=0.0,
            latent_mode="fixed",
        )
        report = EndToEndOptimizer(cfg).run(small_problem, seed=2)
        fidelities = [p.fidelity for p in report.trace]

        assert len(fidelities) == 6
        assert fidelities == pytest.approx([fidelities[0]] * 6, abs=1e-15)
        assert report.best_fidelity == pytest.approx(fidelities[0], abs=1e-12)

    def test_convenience_wrapper(self, hardware, physics, tiny_e2e):
        """Test that train_e2e builds the problem on the finest grid."""
        task = QuantumTask(gate_strings=["X", "I", "I"], t_steps=10)
        report = train_e2e(task, hardware, tiny_e2e, seed=0, pc=physics)

        assert report.best_schedule.shape == (3, 2, 5)
