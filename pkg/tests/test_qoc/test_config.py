"""Tests for experiment configuration."""

import json
import math

import pytest

from photonic_qoc.exceptions import ConfigError, DimensionMismatch
from photonic_qoc.harness.config import (
    ExperimentConfig,
    ExperimentConfigBuilder,
    OptimizerSection,
    SweepSpec,
    config_from_dict,
    config_hash,
    dump_config,
    expand_sweep,
    load_config,
    parse_config,
)
from photonic_qoc.harness.presets import preset
from photonic_qoc.hwmodel import HardwareModel, PicGeometry
from photonic_qoc.optimizers.e2e import E2eConfig
from photonic_qoc.optimizers.ppo import PpoConfig, RewardBand
from photonic_qoc.optimizers.sade_adam import SadeConfig
from photonic_qoc.qsim import QuantumTask


class TestExperimentConfig:
    """Test the configuration dataclasses."""

    def test_defaults(self):
        """Test that an empty document gives the full default config."""
        cfg = config_from_dict({})

        assert cfg.optimizer.kind == "sade_adam"
        assert cfg.optimizer.n_segments == 10
        assert cfg.seeds == [0, 1, 2, 3, 4]
        assert cfg.task.gate_strings == ["X", "I", "I"]

    def test_e2e_resolution(self):
        """Test that e2e runs on its last curriculum phase."""
        settings = E2eConfig(phases=[5, 10], phase_episodes=[1, 1])
        section = OptimizerSection(kind="e2e", settings=settings)

        assert section.n_segments == 10
        with pytest.raises(ValueError):
            OptimizerSection(kind="e2e", n_segments=20)

    def test_channel_count_must_match(self):
        """Test that the PIC needs one channel per gate string."""
        with pytest.raises(DimensionMismatch):
            ExperimentConfig(
                hardware=HardwareModel(pic=PicGeometry(n_channels=2)),
                task=QuantumTask(gate_strings=["X", "I", "I"]),
            )

    @pytest.mark.parametrize(
        "kwargs",
        [{"seeds": []}, {"seeds": [1, 1]}, {"log_every": 0}],
    )
    def test_invalid(self, kwargs):
        """Test experiment validation."""
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_segments_must_divide_steps(self):
        """Test that the segment count must divide the time grid."""
        with pytest.raises(ValueError):
            ExperimentConfig(
                task=QuantumTask(t_steps=100), optimizer=OptimizerSection(n_segments=7)
            )

    def test_problem(self, tiny_experiment):
        """Test the control problem built from a config."""
        problem = tiny_experiment.problem()

        assert problem.n_segments == 5
        assert problem.dimension == 30


class TestParsing:
    """Test JSON parsing and validation."""

    def test_misspelled_key(self):
        """Test that a misspelled key is reported with its dotted path."""
        with pytest.raises(ConfigError) as info:
            config_from_dict({"physics": {"detunning": 1.0}})

        assert info.value.field == "physics.detunning"
        assert "detunning" in str(info.value)

    def test_nested_unknown_key(self):
        """Test unknown keys inside optimizer settings."""
        with pytest.raises(ConfigError) as info:
            config_from_dict(
                {"optimizer": {"kind": "ppo", "settings": {"learning_rate": 1.0}}}
            )

        assert info.value.field == "optimizer.settings.learning_rate"

    def test_rejected_value(self):
        """Test that schema violations carry the section path."""
        with pytest.raises(ConfigError) as info:
            config_from_dict({"hardware": {"pic": {"n_channels": 0}}})

        assert info.value.field == "hardware.pic"

    def test_malformed_json(self):
        """Test that parse errors carry line and column."""
        with pytest.raises(ConfigError) as info:
            parse_config('{\n  "name": "x",\n  "seeds": [1,]\n}')

        assert info.value.line == 3
        assert info.value.column is not None

    def test_top_level_must_be_object(self):
        """Test that a JSON list is rejected."""
        with pytest.raises(ConfigError):
            parse_config("[1, 2]")

    def test_unknown_optimizer_kind(self):
        """Test that an unknown optimizer kind is a config error."""
        with pytest.raises(ConfigError):
            config_from_dict({"optimizer": {"kind": "grape", "settings": {}}})

    def test_settings_follow_kind(self):
        """Test that settings are parsed with the class of their kind."""
        cfg = config_from_dict(
            {
                "task": {"gate_strings": ["X", "I", "I"], "t_steps": 100},
                "optimizer": {
                    "kind": "ppo",
                    "settings": {
                        "lr": 0.001,
                        "reward_bands": [{"upper": math.inf, "a": 1, "b": 0, "p": 1}],
                    },
                },
            }
        )

        assert isinstance(cfg.optimizer.settings, PpoConfig)
        assert cfg.optimizer.settings.lr == 0.001
        bands = cfg.optimizer.settings.reward_bands
        assert bands == [RewardBand(math.inf, 1.0, 0.0, 1.0)]

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a config error."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")


class TestDump:
    """Test the canonical dump and hash."""

    @pytest.mark.parametrize("name", ["easy_x1", "hard_ng3", "pitch_sweep"])
    def test_dump_load_is_stable(self, name, tmp_path):
        """Test that load(dump(cfg)) dumps to the same text."""
        cfg = preset(name)
        text = dump_config(cfg, tmp_path / "config.json")
        reloaded = load_config(tmp_path / "config.json")

        assert dump_config(reloaded) == text
        assert config_hash(reloaded) == config_hash(cfg)

    def test_dump_is_complete(self):
        """Test that defaults appear in the dump."""
        data = json.loads(dump_config(ExperimentConfig()))

        assert data["hardware"]["coupling"]["kappa0"] == 10.145
        assert data["optimizer"]["settings"]["sade"]["popsize"] == 32
        assert data["physics"]["drive_scale"] is None

    def test_infinite_reward_band(self):
        """Test that the open reward band survives a round trip."""
        cfg = ExperimentConfigBuilder().set_optimizer("ppo").build()
        reloaded = parse_config(dump_config(cfg))

        assert reloaded.optimizer.settings.reward_bands[-1].upper == math.inf

    def test_hash_changes_with_content(self):
        """Test that any change moves the hash."""
        base = ExperimentConfig()
        other = ExperimentConfig(name="other")

        assert len(config_hash(base)) == 64
        assert config_hash(base) != config_hash(other)


class TestBuilder:
    """Test the fluent builder."""

    def test_build(self):
        """Test a fully specified build."""
        cfg = (
            ExperimentConfigBuilder()
            .set_name("demo")
            .set_gates(["H", "X"])
            .set_time_grid(0.2, 50)
            .set_optimizer("sade_adam", n_segments=5)
            .set_seeds([7])
            .build()
        )

        assert cfg.name == "demo"
        assert cfg.hardware.pic.n_channels == 2
        assert cfg.task.T_g == 0.2
        assert cfg.optimizer.n_segments == 5
        assert cfg.seeds == [7]

    def test_unknown_optimizer(self):
        """Test that the builder rejects unknown kinds at once."""
        with pytest.raises(ValueError):
            ExperimentConfigBuilder().set_optimizer("grape")

    def test_reset(self):
        """Test that reset restores the defaults."""
        builder = ExperimentConfigBuilder().set_name("x").set_seeds([9])

        cfg = builder.reset().build()

        assert cfg.name == "experiment"
        assert cfg.seeds == [0, 1, 2, 3, 4]

    def test_settings(self):
        """Test that optimizer settings are kept."""
        settings = E2eConfig(phases=[5], phase_episodes=[3])
        cfg = ExperimentConfigBuilder().set_optimizer("e2e", settings).build()

        assert cfg.optimizer.n_segments == 5
        assert cfg.optimizer.settings.phase_episodes == [3]


class TestSweep:
    """Test sweep expansion."""

    def test_pitch_sweep_points(self):
        """Test that the pitch preset expands to five configs."""
        points = expand_sweep(preset("pitch_sweep"))

        assert [label for label, _ in points] == [
            "d0=0.25",
            "d0=0.5",
            "d0=1.0",
            "d0=2.0",
            "d0=4.0",
        ]
        assert [cfg.hardware.pic.d0 for _, cfg in points] == [0.25, 0.5, 1.0, 2.0, 4.0]
        assert all(cfg.sweep is None for _, cfg in points)

    def test_sweep_optimizer_kind(self):
        """Test that sweeping the optimizer kind gives each point its own defaults."""
        points = expand_sweep(preset("method_comparison_ng3"))
        kinds = [cfg.optimizer.kind for _, cfg in points]

        assert [label for label, _ in points] == [
            "kind=sade_adam",
            "kind=ppo",
            "kind=e2e",
        ]
        assert kinds == ["sade_adam", "ppo", "e2e"]
        assert isinstance(points[1][1].optimizer.settings, PpoConfig)
        assert isinstance(points[2][1].optimizer.settings, E2eConfig)
        assert points[2][1].optimizer.n_segments == E2eConfig().phases[-1]
        assert len({tuple(cfg.task.gate_strings) for _, cfg in points}) == 1

    def test_no_sweep(self):
        """Test that a config without sweep yields itself."""
        cfg = ExperimentConfig()

        assert expand_sweep(cfg) == [("", cfg)]

    def test_unknown_path(self):
        """Test that a swept path must exist."""
        cfg = ExperimentConfig(sweep=SweepSpec("hardware.pic.pitch", [1.0]))

        with pytest.raises(ConfigError):
            expand_sweep(cfg)

    def test_rejected_value(self):
        """Test that a swept value must pass validation."""
        cfg = ExperimentConfig(
            optimizer=OptimizerSection(settings=None),
            sweep=SweepSpec("optimizer.settings.sade.popsize", [2]),
        )

        with pytest.raises(ConfigError):
            expand_sweep(cfg)

    def test_sweep_spec_validation(self):
        """Test sweep validation."""
        with pytest.raises(ValueError):
            SweepSpec("hardware.pic.d0", [])
        with pytest.raises(ValueError):
            SweepSpec("seeds", [1])

    def test_sweep_leaves_original(self):
        """Test that expansion does not touch the swept config."""
        cfg = ExperimentConfig(sweep=SweepSpec("optimizer.settings.sade.popsize", [8]))

        points = expand_sweep(cfg)

        assert points[0][1].optimizer.settings.sade.popsize == 8
        assert cfg.optimizer.settings.sade.popsize == SadeConfig().popsize
