"""CSV files shaped for plotting; nothing here draws.

Every emitter overwrites its files, so emitting twice gives identical output.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from ..hwmodel import HardwareModel, crosstalk_matrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("wrote %s", path)
    return path


def error_curve(trace: pd.DataFrame) -> pd.Series:
    """Best-so-far gate error indexed by iteration; later duplicates win."""
    curve = trace.set_index("iteration")["best_cost"]
    return curve[~curve.index.duplicated(keep="last")].sort_index()


def emit_plot_data(traces: Mapping[int, pd.DataFrame], out_dir: PathLike) -> List[Path]:
    """Error-versus-iteration curves, one file per seed plus a mean/std file.

    Curves of different length are aligned on the union of their iterations;
    a finished run holds its last best error.

    Args:
        traces: Trace frame per seed, as stored by the report repository
        out_dir: Directory for the CSV files

    Returns:
        Paths written
    """
    out = Path(out_dir)
    written = []
    curves: Dict[int, pd.Series] = {}
    for seed in sorted(traces):
        curve = error_curve(traces[seed])
        curves[seed] = curve
        frame = pd.DataFrame({"iteration": curve.index, "error": curve.to_numpy()})
        written.append(_write(frame, out / f"curve_seed_{seed}.csv"))

    if curves:
        written.append(_write(_mean_curve(curves), out / "curve_mean.csv"))
    return written


def emit_comparison_data(
    point_traces: Mapping[str, Mapping[int, pd.DataFrame]], out_dir: PathLike
) -> Path:
    """Mean error curves of several sweep points in one long table.

    Used to compare points on one figure, e.g. the three optimizers of a sweep
    over ``optimizer.kind``. Points without a successful seed are left out.

    Args:
        point_traces: Trace frames per seed, keyed by point label
        out_dir: Directory for ``sweep_curves.csv``

    Returns:
        Path written
    """
    frames = []
    for label, traces in point_traces.items():
        curves = {seed: error_curve(traces[seed]) for seed in sorted(traces)}
        if curves:
            frames.append(_mean_curve(curves).assign(point=label))
    columns = ["point", "iteration", "error_mean", "error_std", "n_seeds"]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    return _write(frame.reindex(columns=columns), Path(out_dir) / "sweep_curves.csv")


def _mean_curve(curves: Mapping[int, pd.Series]) -> pd.DataFrame:
    table = pd.concat(curves, axis=1).sort_index().ffill()
    return pd.DataFrame(
        {
            "iteration": table.index,
            "error_mean": table.mean(axis=1).to_numpy(),
            "error_std": table.std(axis=1, ddof=0).to_numpy(),
            "n_seeds": table.count(axis=1).to_numpy(),
        }
    )


def emit_sweep_data(points: Sequence[Dict[str, object]], out_dir: PathLike) -> Path:
    """One row per sweep point with error and episode statistics.

    Each point carries ``parameter``, ``value`` and the aggregate keys of that
    point's run.
    """
    columns = [
        "parameter",
        "value",
        "final_error_mean",
        "final_error_std",
        "episodes_mean",
        "episodes_std",
        "n_succeeded",
    ]
    frame = pd.DataFrame([{c: p.get(c, np.nan) for c in columns} for p in points])
    return _write(frame, Path(out_dir) / "sweep.csv")


def emit_sweep_scatter(
    points: Sequence[Dict[str, object]],
    finals: Sequence[Sequence[float]],
    out_dir: PathLike,
) -> Path:
    """Per-seed final errors of every sweep point, for dot plots."""
    rows = [
        {"value": p["value"], "final_error": e}
        for p, errors in zip(points, finals)
        for e in errors
    ]
    frame = pd.DataFrame(rows, columns=["value", "final_error"])
    return _write(frame, Path(out_dir) / "sweep_dots.csv")


def emit_crosstalk_data(hw: HardwareModel, out_dir: PathLike) -> List[Path]:
    """Amplitude and phase of the static crosstalk matrix as channel grids."""
    C = crosstalk_matrix(hw)
    labels = [f"ch{i + 1}" for i in range(C.shape[0])]
    out = Path(out_dir)
    amplitude = pd.DataFrame(np.abs(C), index=labels, columns=labels)
    angles = np.where(np.abs(C) > 0, np.angle(C), 0.0)
    phase = pd.DataFrame(angles, index=labels, columns=labels)
    return [
        _write(
            amplitude.rename_axis("channel").reset_index(),
            out / "crosstalk_amplitude.csv",
        ),
        _write(phase.rename_axis("channel").reset_index(), out / "crosstalk_phase.csv"),
    ]


def emit_field_map(
    field: np.ndarray, xs: Sequence[float], ys: Sequence[float], path: PathLike
) -> Path:
    """Long-format amplitude/phase table of a complex field on a grid."""
    gx, gy = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    frame = pd.DataFrame(
        {
            "x": gx.ravel(),
            "y": gy.ravel(),
            "amplitude": np.abs(field).ravel(),
            "phase": np.angle(field).ravel(),
        }
    )
    return _write(frame, Path(path))
