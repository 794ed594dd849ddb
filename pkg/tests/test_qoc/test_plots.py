"""Tests for plot-shaped CSV emission."""

import numpy as np
import pandas as pd
import pytest

from photonic_qoc.harness.plots import (
    emit_comparison_data,
    emit_crosstalk_data,
    emit_field_map,
    emit_plot_data,
    emit_sweep_data,
    emit_sweep_scatter,
    error_curve,
)


def _trace(iterations, costs):
    return pd.DataFrame(
        {
            "iteration": iterations,
            "best_cost": costs,
            "fidelity": [1.0 - c for c in costs],
            "wall_ms": np.arange(len(costs), dtype=float),
        }
    )


class TestErrorCurves:
    """Test error-versus-iteration curves."""

    def test_duplicates_keep_last(self):
        """Test that a repeated iteration keeps its last value."""
        curve = error_curve(_trace([1, 2, 2, 3], [0.5, 0.4, 0.3, 0.2]))

        assert curve.index.tolist() == [1, 2, 3]
        assert curve.tolist() == [0.5, 0.3, 0.2]

    def test_mean_curve_holds_finished_runs(self, tmp_path):
        """Test alignment of curves of different length."""
        traces = {0: _trace([1, 2, 3], [0.4, 0.2, 0.1]), 1: _trace([1, 2], [0.6, 0.4])}

        written = emit_plot_data(traces, tmp_path)
        mean = pd.read_csv(tmp_path / "curve_mean.csv")

        assert [p.name for p in written] == [
            "curve_seed_0.csv",
            "curve_seed_1.csv",
            "curve_mean.csv",
        ]
        assert mean["error_mean"].tolist() == pytest.approx([0.5, 0.3, 0.25])
        assert mean["error_std"].tolist() == pytest.approx([0.1, 0.1, 0.15])
        assert mean["n_seeds"].tolist() == [2, 2, 2]

    def test_emitting_twice_is_identical(self, tmp_path):
        """Test that emission overwrites with the same content."""
        traces = {0: _trace([1, 2], [0.4, 0.2])}
        emit_plot_data(traces, tmp_path)
        first = (tmp_path / "curve_mean.csv").read_text()
        emit_plot_data(traces, tmp_path)

        assert (tmp_path / "curve_mean.csv").read_text() == first

    def test_no_traces(self, tmp_path):
        """Test that nothing is written without traces."""
        assert emit_plot_data({}, tmp_path) == []

    def test_comparison_table(self, tmp_path):
        """Test mean curves of several points stacked in one table."""
        point_traces = {
            "kind=sade_adam": {0: _trace([1, 2], [0.4, 0.2]), 1: _trace([1], [0.6])},
            "kind=e2e": {0: _trace([1, 2, 3], [0.3, 0.1, 0.05])},
            "kind=ppo": {},
        }

        frame = pd.read_csv(emit_comparison_data(point_traces, tmp_path))
        sade = frame[frame["point"] == "kind=sade_adam"]

        assert frame["point"].unique().tolist() == ["kind=sade_adam", "kind=e2e"]
        assert sade["error_mean"].tolist() == pytest.approx([0.5, 0.4])
        assert sade["n_seeds"].tolist() == [2, 2]
        assert len(frame[frame["point"] == "kind=e2e"]) == 3


class TestSweepData:
    """Test sweep tables."""

    def test_sweep_table(self, tmp_path):
        """Test one row per sweep point with missing statistics left empty."""
        points = [
            {"parameter": "hardware.pic.d0", "value": 0.5, "final_error_mean": 0.1},
            {"parameter": "hardware.pic.d0", "value": 1.0, "final_error_mean": 0.2},
        ]
        frame = pd.read_csv(emit_sweep_data(points, tmp_path))

        assert frame["value"].tolist() == [0.5, 1.0]
        assert frame["final_error_mean"].tolist() == [0.1, 0.2]
        assert frame["episodes_mean"].isna().all()

    def test_scatter(self, tmp_path):
        """Test one row per seed and point."""
        points = [{"value": 0.5}, {"value": 1.0}]
        frame = pd.read_csv(emit_sweep_scatter(points, [[0.1, 0.2], [0.3]], tmp_path))

        assert frame["value"].tolist() == [0.5, 0.5, 1.0]
        assert frame["final_error"].tolist() == [0.1, 0.2, 0.3]


class TestHardwareData:
    """Test crosstalk and field tables."""

    def test_crosstalk_grids(self, hardware, tmp_path):
        """Test that the diagonal is empty and the phase is -pi/2."""
        amplitude_path, phase_path = emit_crosstalk_data(hardware, tmp_path)
        amplitude = pd.read_csv(amplitude_path).set_index("channel")
        phase = pd.read_csv(phase_path).set_index("channel")

        assert amplitude.shape == (3, 3)
        assert amplitude.loc["ch1", "ch1"] == 0.0
        assert amplitude.loc["ch1", "ch2"] > 0.0
        assert phase.loc["ch1", "ch2"] == pytest.approx(-np.pi / 2)

    def test_field_map(self, tmp_path):
        """Test the long-format field table."""
        field = np.array([[1.0, 1j], [-1.0, 0.5]])
        path = emit_field_map(field, [0.0, 1.0], [2.0, 3.0], tmp_path / "f.csv")
        frame = pd.read_csv(path)

        assert len(frame) == 4
        assert frame["amplitude"].tolist() == pytest.approx([1.0, 1.0, 1.0, 0.5])
        assert frame.loc[1, "phase"] == pytest.approx(np.pi / 2)
        assert frame["y"].tolist() == [2.0, 2.0, 3.0, 3.0]
