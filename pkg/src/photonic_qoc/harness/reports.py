"""Report storage.

Run outputs go through a repository interface so the runner does not care
where they end up. The file repository lays a run out as::

    <root>/config.json
    <root>/aggregate.json
    <root>/seed_<s>/trace.csv
    <root>/seed_<s>/summary.json
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..optimizers.base import TracePoint

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iteration", "best_cost", "fidelity", "wall_ms"]


def _to_builtin(value: Any) -> Any:
    """JSON fallback for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def trace_frame(points: Sequence[TracePoint]) -> pd.DataFrame:
    """Trace points as a DataFrame with exactly the trace CSV columns."""
    rows = [[p.iteration, p.best_cost, p.fidelity, p.wall_ms] for p in points]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def aggregate_summaries(summaries: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Mean and population std of final error and episodes over successful seeds."""
    ok = [s for s in summaries if s.get("status") == "ok"]
    failed = [s["seed"] for s in summaries if s.get("status") != "ok"]
    aggregate: Dict[str, Any] = {
        "n_seeds": len(summaries),
        "n_succeeded": len(ok),
        "failed_seeds": failed,
    }
    if ok:
        errors = np.array([s["final_error"] for s in ok], dtype=float)
        episodes = np.array([s["episodes"] for s in ok], dtype=float)
        aggregate.update(
            {
                "final_error_mean": float(errors.mean()),
                "final_error_std": float(errors.std()),
                "final_error_median": float(np.median(errors)),
                "episodes_mean": float(episodes.mean()),
                "episodes_std": float(episodes.std()),
                "best_seed": int(ok[int(np.argmin(errors))]["seed"]),
            }
        )
    return aggregate


class ReportRepository(ABC):
    """Where run configs, traces, summaries and aggregates are stored."""

    @abstractmethod
    def save_config(self, config: Dict[str, Any]) -> None:
        pass

    @abstractmethod
    def save_trace(self, seed: int, points: Sequence[TracePoint]) -> None:
        pass

    @abstractmethod
    def save_summary(self, seed: int, summary: Dict[str, Any]) -> None:
        pass

    @abstractmethod
    def save_aggregate(self, aggregate: Dict[str, Any]) -> None:
        pass

    @abstractmethod
    def find_summary(self, seed: int) -> Optional[Dict[str, Any]]:
        """Summary of ``seed``, or ``None`` if it was never stored."""
        pass

    @abstractmethod
    def find_all_summaries(self) -> List[Dict[str, Any]]:
        pass

    @abstractmethod
    def load_trace(self, seed: int) -> pd.DataFrame:
        pass


class InMemoryReportRepository(ReportRepository):
    """Keeps everything in dictionaries; used by tests and dry runs."""

    def __init__(self):
        self.config: Optional[Dict[str, Any]] = None
        self.aggregate: Optional[Dict[str, Any]] = None
        self._traces: Dict[int, pd.DataFrame] = {}
        self._summaries: Dict[int, Dict[str, Any]] = {}

    def save_config(self, config: Dict[str, Any]) -> None:
        self.config = config

    def save_trace(self, seed: int, points: Sequence[TracePoint]) -> None:
        self._traces[seed] = trace_frame(points)

    def save_summary(self, seed: int, summary: Dict[str, Any]) -> None:
        self._summaries[seed] = summary

    def save_aggregate(self, aggregate: Dict[str, Any]) -> None:
        self.aggregate = aggregate

    def find_summary(self, seed: int) -> Optional[Dict[str, Any]]:
        return self._summaries.get(seed)

    def find_all_summaries(self) -> List[Dict[str, Any]]:
        return [self._summaries[s] for s in sorted(self._summaries)]

    def load_trace(self, seed: int) -> pd.DataFrame:
        if seed not in self._traces:
            raise KeyError(f"no trace stored for seed {seed}")
        return self._traces[seed]


class FileReportRepository(ReportRepository):
    """JSON summaries and CSV traces under a root directory."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def seed_dir(self, seed: int) -> Path:
        return self.root / f"seed_{seed}"

    def _write_json(self, path: Path, payload: Dict[str, Any]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(payload, indent=2, sort_keys=True, default=_to_builtin)
        path.write_text(text + "\n")
        logger.info("wrote %s", path)

    def save_config(self, config: Dict[str, Any]) -> None:
        self._write_json(self.root / "config.json", config)

    def save_trace(self, seed: int, points: Sequence[TracePoint]) -> None:
        path = self.seed_dir(seed) / "trace.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        trace_frame(points).to_csv(path, index=False, float_format="%.17g")
        logger.info("wrote %s (%d rows)", path, len(points))

    def save_summary(self, seed: int, summary: Dict[str, Any]) -> None:
        self._write_json(self.seed_dir(seed) / "summary.json", summary)

    def save_aggregate(self, aggregate: Dict[str, Any]) -> None:
        self._write_json(self.root / "aggregate.json", aggregate)

    def find_summary(self, seed: int) -> Optional[Dict[str, Any]]:
        path = self.seed_dir(seed) / "summary.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def find_all_summaries(self) -> List[Dict[str, Any]]:
        paths = self.root.glob("seed_*/summary.json")
        summaries = [json.loads(p.read_text()) for p in paths]
        return sorted(summaries, key=lambda s: s["seed"])

    def load_trace(self, seed: int) -> pd.DataFrame:
        return pd.read_csv(self.seed_dir(seed) / "trace.csv")
