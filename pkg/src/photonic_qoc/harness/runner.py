"""Experiment orchestration: seeds and sweep points in parallel, reports in order."""

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from ..hwmodel import ControlSchedule
from ..optimizers.base import LoggingObserver, TracePoint
from ..optimizers.factory import OptimizerFactory
from .config import ExperimentConfig, config_hash, config_to_dict, expand_sweep
from .plots import (
    emit_comparison_data,
    emit_crosstalk_data,
    emit_plot_data,
    emit_sweep_data,
    emit_sweep_scatter,
)
from .reports import (
    FileReportRepository,
    ReportRepository,
    aggregate_summaries,
    trace_frame,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class SeedOutcome:
    """What one seed produced; ``trace`` is empty for a failed seed."""

    seed: int
    summary: Dict[str, Any]
    trace: List[TracePoint] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.summary.get("status") == "ok"


@dataclass
class PointResult:
    """All seeds of one configuration (one sweep point, or the whole run)."""

    label: str
    root: Path
    config: ExperimentConfig
    outcomes: List[SeedOutcome]
    aggregate: Dict[str, Any]

    @property
    def summaries(self) -> List[Dict[str, Any]]:
        return [o.summary for o in self.outcomes]


@dataclass
class ExperimentResult:
    out_dir: Path
    points: List[PointResult]

    @property
    def any_failed(self) -> bool:
        return any(not o.ok for p in self.points for o in p.outcomes)


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedOutcome:
    """Optimize one seed; failures are caught and recorded, never raised."""
    digest = config_hash(cfg)
    try:
        problem = cfg.problem()
        optimizer = OptimizerFactory.create_optimizer(
            cfg.optimizer.kind, cfg.optimizer.settings
        )
        optimizer.register_observer(
            LoggingObserver(f"{cfg.name}/seed{seed}", cfg.log_every)
        )
        report = optimizer.run(problem, seed)
        resimulated = problem.fidelity(ControlSchedule(report.best_schedule))
    except Exception as exc:  # noqa: BLE001 - recorded per seed
        logger.error("%s: seed %d failed\n%s", cfg.name, seed, traceback.format_exc())
        summary = {
            "seed": seed,
            "status": "failed",
            "optimizer": cfg.optimizer.kind,
            "error": f"{type(exc).__name__}: {exc}",
            "config_hash": digest,
        }
        return SeedOutcome(seed=seed, summary=summary)

    summary = report.summary()
    summary["config_hash"] = digest
    summary["experiment"] = cfg.name
    summary["resimulated_fidelity"] = resimulated
    logger.info(
        "%s: seed %d finished with error %.3e after %d episodes (%s)",
        cfg.name,
        seed,
        report.final_error,
        report.episodes,
        report.termination.value,
    )
    return SeedOutcome(seed=seed, summary=summary, trace=report.trace)


def _execute(
    jobs: List[Tuple[int, ExperimentConfig, int]], threads: int
) -> Dict[Tuple[int, int], SeedOutcome]:
    outcomes: Dict[Tuple[int, int], SeedOutcome] = {}
    if threads <= 1 or len(jobs) == 1:
        for index, cfg, seed in jobs:
            outcomes[(index, seed)] = run_seed(cfg, seed)
        return outcomes

    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {
            pool.submit(run_seed, cfg, seed): (index, seed)
            for index, cfg, seed in jobs
        }
        for future in as_completed(futures):
            outcomes[futures[future]] = future.result()
    return outcomes


def _write_point(
    point: PointResult, repository: ReportRepository, emit_plots: bool
) -> None:
    repository.save_config(
        {
            "config": config_to_dict(point.config),
            "config_hash": config_hash(point.config),
        }
    )
    for outcome in point.outcomes:
        if outcome.ok:
            repository.save_trace(outcome.seed, outcome.trace)
        repository.save_summary(outcome.seed, outcome.summary)
    repository.save_aggregate(point.aggregate)
    if emit_plots:
        traces = {o.seed: trace_frame(o.trace) for o in point.outcomes if o.ok}
        emit_plot_data(traces, point.root / "plots")
        emit_crosstalk_data(point.config.hardware, point.root / "plots")


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[PathLike] = None,
    threads: int = 1,
    repository_factory: Callable[[Path], ReportRepository] = FileReportRepository,
    emit_plots: bool = True,
) -> ExperimentResult:
    """Run every seed of every sweep point and write the reports.

    Seeds and sweep points run in parallel up to ``threads`` processes;
    reports are written afterwards by this process, in seed order.

    Args:
        cfg: Experiment configuration
        out_dir: Report directory; defaults to ``cfg.output_dir``
        threads: Worker processes
        repository_factory: Builds the repository for a report directory
        emit_plots: Also write the plot-shaped CSV files

    Returns:
        Per-point outcomes and aggregates
    """
    root = Path(out_dir if out_dir is not None else cfg.output_dir)
    points = expand_sweep(cfg)
    jobs = [
        (i, point, seed)
        for i, (_, point) in enumerate(points)
        for seed in point.seeds
    ]
    logger.info(
        "experiment '%s': %d point(s) x %d seed(s), %s, %d worker(s)",
        cfg.name,
        len(points),
        len(cfg.seeds),
        "/".join(dict.fromkeys(p.optimizer.kind for _, p in points)),
        threads,
    )
    outcomes = _execute(jobs, threads)

    results = []
    for i, (label, point_cfg) in enumerate(points):
        point_root = root / label if label else root
        seed_outcomes = [outcomes[(i, seed)] for seed in point_cfg.seeds]
        result = PointResult(
            label=label,
            root=point_root,
            config=point_cfg,
            outcomes=seed_outcomes,
            aggregate=aggregate_summaries([o.summary for o in seed_outcomes]),
        )
        _write_point(result, repository_factory(point_root), emit_plots)
        results.append(result)

    if cfg.sweep is not None and emit_plots:
        rows = [
            {"parameter": cfg.sweep.parameter, "value": value, **r.aggregate}
            for value, r in zip(cfg.sweep.values, results)
        ]
        finals = [
            [s["final_error"] for s in r.summaries if s["status"] == "ok"]
            for r in results
        ]
        emit_sweep_data(rows, root)
        emit_sweep_scatter(rows, finals, root)
        point_traces = {
            r.label: {o.seed: trace_frame(o.trace) for o in r.outcomes if o.ok}
            for r in results
        }
        emit_comparison_data(point_traces, root)

    experiment = ExperimentResult(out_dir=root, points=results)
    if experiment.any_failed:
        logger.warning("experiment '%s' finished with failed seeds", cfg.name)
    return experiment
