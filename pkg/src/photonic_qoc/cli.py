"""Command-line entry point.

Subcommands: ``run``, ``preset``, ``check``, ``gradcheck`` and ``leakage``.
Exit codes: 0 on success, 1 when a seed or check failed, 2 on a bad config.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from .exceptions import ConfigError
from .harness.checks import gradient_check, leakage_demo, run_property_suite
from .harness.config import ExperimentConfig, dump_config, load_config
from .harness.presets import PRESETS, preset
from .harness.runner import run_experiment

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def configure_logging(
    level: Union[int, str] = logging.INFO, log_file: Optional[Path] = None
) -> None:
    """Log to stderr and, when ``log_file`` is given, to that file as well."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    return Path(args.out_dir if args.out_dir else default)


def _experiment(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed])
    out = _out_dir(args, cfg.output_dir)
    configure_logging(args.log_level, out / "run.log")
    result = run_experiment(cfg, out, threads=args.threads)
    for point in result.points:
        agg = point.aggregate
        if agg.get("n_succeeded"):
            logger.info(
                "%s%s: error %.3e +- %.3e, episodes %.1f over %d seed(s)",
                cfg.name,
                f" [{point.label}]" if point.label else "",
                agg["final_error_mean"],
                agg["final_error_std"],
                agg["episodes_mean"],
                agg["n_succeeded"],
            )
    return EXIT_FAILED if result.any_failed else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    return _experiment(load_config(args.config), args)


def cmd_preset(args: argparse.Namespace) -> int:
    cfg = preset(args.name)
    out = _out_dir(args, cfg.output_dir)
    if args.dump:
        dump_config(cfg, out / "config.json")
        logger.info("wrote %s", out / "config.json")
        return EXIT_OK
    if args.name == "leakage_demo":
        configure_logging(args.log_level, out / "run.log")
        return _leakage(cfg.hardware, cfg, out)
    return _experiment(cfg, args)


def cmd_check(args: argparse.Namespace) -> int:
    out = _out_dir(args, "runs/check")
    configure_logging(args.log_level, out / "run.log")
    results = run_property_suite(seed=args.seed or 0, out_dir=out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_gradcheck(args: argparse.Namespace) -> int:
    out = _out_dir(args, "runs/gradcheck")
    configure_logging(args.log_level, out / "run.log")
    result = gradient_check(n_points=args.points, seed=args.seed or 0, out_dir=out)
    return EXIT_OK if result.passed else EXIT_FAILED


def cmd_leakage(args: argparse.Namespace) -> int:
    cfg = preset("leakage_demo")
    out = _out_dir(args, cfg.output_dir)
    configure_logging(args.log_level, out / "run.log")
    return _leakage(cfg.hardware, cfg, out, shape=args.shape)


def _leakage(hw, cfg: ExperimentConfig, out: Path, shape: str = "square") -> int:
    result = leakage_demo(hw, cfg.task, cfg.physics, shape=shape, out_dir=out)
    f = result.fidelities
    degrades = f["leakage_crosstalk"] <= f["leakage"] < f["isolated"]
    if not degrades:
        logger.error("fidelity did not degrade monotonically: %s", f)
    return EXIT_OK if degrades else EXIT_FAILED


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Override the seeds")
    parser.add_argument(
        "--out-dir", "--out", dest="out_dir", default=None, help="Report directory"
    )
    parser.add_argument("--threads", type=int, default=1, help="Worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonic-qoc",
        description=(
            "Optimize photonic control schedules for parallel single-qubit gates"
        ),
    )
    parser.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    commands: Dict[str, Callable[[argparse.Namespace], int]] = {}

    p = sub.add_parser("run", help="Run an experiment from a JSON config")
    p.add_argument("config", type=Path)
    commands["run"] = cmd_run

    p_preset = sub.add_parser("preset", help="Run a named preset")
    p_preset.add_argument("name", choices=sorted(PRESETS))
    p_preset.add_argument(
        "--dump", action="store_true", help="Only write the preset config"
    )
    commands["preset"] = cmd_preset

    sub.add_parser("check", help="Run the property suite")
    commands["check"] = cmd_check

    p_grad = sub.add_parser(
        "gradcheck", help="Compare adjoint and finite-difference gradients"
    )
    p_grad.add_argument("--points", type=int, default=20)
    commands["gradcheck"] = cmd_gradcheck

    p_leak = sub.add_parser(
        "leakage", help="Open-loop pi pulse under leakage and crosstalk"
    )
    p_leak.add_argument("--shape", choices=["square", "gaussian"], default="square")
    commands["leakage"] = cmd_leakage

    for name, subparser in sub.choices.items():
        _common(subparser)
        subparser.set_defaults(func=commands[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
