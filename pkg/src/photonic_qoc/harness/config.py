"""Experiment configuration: schema, JSON load/dump and a fluent builder.

The canonical text format is JSON. Every section maps onto one of the
package dataclasses, unknown keys are rejected with their dotted path and
every default is filled in, so ``dump_config`` always echoes the complete
configuration a run used.
"""

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Optional,
    Tuple,
    Union,
    get_args,
    get_origin,
    get_type_hints,
)

from ..exceptions import ConfigError, DimensionMismatch
from ..hwmodel import HardwareModel
from ..optimizers.factory import OptimizerFactory
from ..qsim import ControlProblem, PhysicalConstants, QuantumTask

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class OptimizerSection:
    """Which optimizer runs and with what settings.

    Attributes:
        kind: ``"sade_adam"``, ``"ppo"`` or ``"e2e"``
        n_segments: Schedule resolution; ``None`` picks 10, or the last
            curriculum phase for ``e2e``
        settings: Settings object of the kind; ``None`` means defaults
    """

    kind: str = "sade_adam"
    n_segments: Optional[int] = None
    settings: Any = None

    def __post_init__(self):
        settings_type = OptimizerFactory.settings_type(self.kind)
        if self.settings is None:
            self.settings = settings_type()
        elif not isinstance(self.settings, settings_type):
            raise ValueError(
                f"settings of {self.kind} must be {settings_type.__name__}"
            )
        if self.kind == "e2e":
            final = self.settings.phases[-1]
            if self.n_segments not in (None, final):
                raise ValueError(
                    "e2e runs on the resolution of its last curriculum phase"
                )
            self.n_segments = final
        elif self.n_segments is None:
            self.n_segments = 10
        if self.n_segments < 1:
            raise ValueError("n_segments must be positive")


@dataclass
class SweepSpec:
    """One parameter varied over a list of values, e.g. ``hardware.pic.d0``."""

    parameter: str
    values: List[Any] = field(default_factory=list)

    def __post_init__(self):
        if not self.values:
            raise ValueError("a sweep needs at least one value")
        if "." not in self.parameter:
            raise ValueError(
                "sweep parameter must be a dotted path such as hardware.pic.d0"
            )


@dataclass
class ExperimentConfig:
    """Everything one experiment needs.

    Attributes:
        name: Experiment name, used in logs and reports
        hardware: Photonic chain model
        task: Target gates and time grid
        physics: Atomic and laser constants
        optimizer: Optimizer section
        seeds: Master seeds, one independent run each
        output_dir: Default report directory
        sweep: Optional one-parameter sweep
        log_every: Trace points between INFO progress lines
    """

    name: str = "experiment"
    hardware: HardwareModel = field(default_factory=HardwareModel)
    task: QuantumTask = field(default_factory=QuantumTask)
    physics: PhysicalConstants = field(default_factory=PhysicalConstants)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "runs"
    sweep: Optional[SweepSpec] = None
    log_every: int = 100

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")
        if self.hardware.pic.n_channels != self.task.n_atoms:
            raise DimensionMismatch(
                f"{self.task.n_atoms} gate strings need {self.task.n_atoms} channels, "
                f"hardware has {self.hardware.pic.n_channels}"
            )
        if self.task.t_steps % self.optimizer.n_segments:
            raise ValueError(
                f"{self.optimizer.n_segments} segments do not divide "
                f"{self.task.t_steps} steps"
            )
        if self.log_every < 1:
            raise ValueError("log_every must be positive")

    def problem(self) -> ControlProblem:
        """The control problem every seed of this experiment optimizes."""
        return ControlProblem(
            hw=self.hardware,
            task=self.task,
            pc=self.physics,
            n_segments=self.optimizer.n_segments,
        )


# Dict conversion


def _dataclass_of(hint: Any) -> Optional[type]:
    """The dataclass wrapped by a field hint (plain or Optional), if any."""
    if is_dataclass(hint):
        return hint
    if get_origin(hint) is Union:
        inner = [a for a in get_args(hint) if a is not type(None)]
        if len(inner) == 1 and is_dataclass(inner[0]):
            return inner[0]
    return None


def _list_item_dataclass(hint: Any) -> Optional[type]:
    if get_origin(hint) in (list, List):
        args = get_args(hint)
        if args and is_dataclass(args[0]):
            return args[0]
    return None


def _build(cls: type, data: Any, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", field=path)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            dotted = f"{path}.{key}" if path else key
            raise ConfigError(f"Unknown key '{key}'", field=dotted)

    hints = get_type_hints(cls)
    kwargs: Dict[str, Any] = {}
    for name, value in data.items():
        where = f"{path}.{name}" if path else name
        if cls is OptimizerSection and name == "settings":
            continue
        target = _dataclass_of(hints[name])
        item = _list_item_dataclass(hints[name])
        if target is not None and value is not None:
            kwargs[name] = _build(target, value, where)
        elif item is not None and isinstance(value, list):
            kwargs[name] = [
                v if is_dataclass(v) else _build(item, v, f"{where}[{i}]")
                for i, v in enumerate(value)
            ]
        else:
            kwargs[name] = value

    if cls is OptimizerSection and data.get("settings") is not None:
        kind = data.get("kind", "sade_adam")
        try:
            settings_type = OptimizerFactory.settings_type(kind)
        except ValueError as exc:
            raise ConfigError(str(exc), field=f"{path}.kind") from exc
        kwargs["settings"] = _build(settings_type, data["settings"], f"{path}.settings")

    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field=path or cls.__name__) from exc


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a parsed document and fill every default.

    Raises:
        ConfigError: On an unknown key or a value the schema rejects
    """
    return _build(ExperimentConfig, data, "")


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    return asdict(cfg)


def dump_config(cfg: ExperimentConfig, path: Optional[PathLike] = None) -> str:
    """Serialize the complete configuration; also write it when ``path`` is given."""
    text = json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def parse_config(text: str) -> ExperimentConfig:
    """Parse JSON text into a validated configuration.

    Raises:
        ConfigError: With ``line``/``column`` set for malformed JSON
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(
            "the top level of a config must be an object", line=1, column=1
        )
    return config_from_dict(data)


def load_config(path: PathLike) -> ExperimentConfig:
    """Load and validate a configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = parse_config(path.read_text())
    logger.info(
        "loaded config '%s' from %s (hash %s)", cfg.name, path, config_hash(cfg)[:12]
    )
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical dump."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# Sweeps


def _replace_path(obj: Any, parts: List[str], value: Any) -> Any:
    head = parts[0]
    if not is_dataclass(obj) or head not in {f.name for f in fields(obj)}:
        raise ConfigError(f"cannot sweep unknown field '{head}'", field=head)
    if len(parts) == 1:
        if isinstance(obj, OptimizerSection) and head == "kind" and value != obj.kind:
            # settings are typed per kind; a new kind starts from its defaults
            return OptimizerSection(kind=value)
        return replace(obj, **{head: copy.deepcopy(value)})
    return replace(obj, **{head: _replace_path(getattr(obj, head), parts[1:], value)})


def expand_sweep(cfg: ExperimentConfig) -> List[Tuple[str, ExperimentConfig]]:
    """One ``(label, config)`` per sweep value; a config without sweep yields itself.

    Sweeping ``optimizer.kind`` gives every point the default settings and
    resolution of its optimizer.

    Raises:
        ConfigError: If the swept path does not exist or a value is rejected
    """
    if cfg.sweep is None:
        return [("", cfg)]
    parts = cfg.sweep.parameter.split(".")
    points = []
    for value in cfg.sweep.values:
        try:
            point = _replace_path(replace(cfg, sweep=None), parts, value)
        except ConfigError as exc:
            raise ConfigError(str(exc), field="sweep.parameter") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field=cfg.sweep.parameter) from exc
        points.append((f"{parts[-1]}={value}", point))
    return points


class ExperimentConfigBuilder:
    """Fluent builder for :class:`ExperimentConfig`."""

    def __init__(self):
        self.reset()

    def reset(self) -> "ExperimentConfigBuilder":
        self._name = "experiment"
        self._hardware = HardwareModel()
        self._task = QuantumTask()
        self._physics = PhysicalConstants()
        self._kind = "sade_adam"
        self._n_segments: Optional[int] = None
        self._settings: Any = None
        self._seeds = [0, 1, 2, 3, 4]
        self._output_dir = "runs"
        self._sweep: Optional[SweepSpec] = None
        return self

    def set_name(self, name: str) -> "ExperimentConfigBuilder":
        self._name = name
        return self

    def set_hardware(self, hardware: HardwareModel) -> "ExperimentConfigBuilder":
        self._hardware = hardware
        return self

    def set_gates(self, gate_strings: List[str]) -> "ExperimentConfigBuilder":
        """Set the target gates; the PIC gets one channel per atom."""
        self._task = replace(self._task, gate_strings=list(gate_strings))
        self._hardware = replace(
            self._hardware,
            pic=replace(self._hardware.pic, n_channels=len(gate_strings)),
        )
        return self

    def set_time_grid(self, T_g: float, t_steps: int) -> "ExperimentConfigBuilder":
        self._task = replace(self._task, T_g=T_g, t_steps=t_steps)
        return self

    def set_physics(self, physics: PhysicalConstants) -> "ExperimentConfigBuilder":
        self._physics = physics
        return self

    def set_optimizer(
        self, kind: str, settings: Any = None, n_segments: Optional[int] = None
    ) -> "ExperimentConfigBuilder":
        OptimizerFactory.settings_type(kind)
        self._kind = kind
        self._settings = settings
        self._n_segments = n_segments
        return self

    def set_seeds(self, seeds: List[int]) -> "ExperimentConfigBuilder":
        self._seeds = list(seeds)
        return self

    def set_output_dir(self, output_dir: str) -> "ExperimentConfigBuilder":
        self._output_dir = output_dir
        return self

    def sweep(self, parameter: str, values: List[Any]) -> "ExperimentConfigBuilder":
        self._sweep = SweepSpec(parameter=parameter, values=list(values))
        return self

    def build(self) -> ExperimentConfig:
        """Validate and return the configuration."""
        return ExperimentConfig(
            name=self._name,
            hardware=self._hardware,
            task=self._task,
            physics=self._physics,
            optimizer=OptimizerSection(
                kind=self._kind, n_segments=self._n_segments, settings=self._settings
            ),
            seeds=list(self._seeds),
            output_dir=self._output_dir,
            sweep=self._sweep,
        )
