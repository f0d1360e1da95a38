# MIT License
# Copyright (c) 2026 ambicuity
"""
Experiment configuration.

A config file is YAML with flat sections (``traces``, ``energy``,
``constraints``, ``penalty``, ``sweep``, ``evaluation``). Every section maps
onto a frozen dataclass; unknown keys and values of the wrong type raise
ConfigError naming the section and key.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from dualexit.energy import Constraints, EnergyModel, dbm_to_watts
from dualexit.errors import ConfigError, DualExitError
from dualexit.optimizer import PenaltyConfig
from dualexit.traces import ScoreProfile, SyntheticSpec

SWEEP_AXES = ("offload_constraint", "energy_constraint", "snr", "imbalance_ratio")
SECTIONS = ("traces", "energy", "constraints", "penalty", "sweep", "evaluation")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class TraceConfig:
    """Trace source: a CSV ``path`` or, when it is unset, a synthetic population."""

    path: Optional[str] = None
    n_events: int = 200
    n_blocks: int = 4
    imbalance_ratio: float = 4.0
    server_accuracy: float = 0.9
    seed: int = 0
    correlation: float = 0.5
    imbalance_penalty: float = 0.0
    head_first_logit: float = -0.5
    head_last_logit: float = -3.0
    head_first_spread: float = 1.2
    head_last_spread: float = 1.0
    tail_first_logit: float = 0.5
    tail_last_logit: float = 3.0
    tail_first_spread: float = 1.2
    tail_last_spread: float = 1.0

    def synthetic_spec(
        self,
        seed: Optional[int] = None,
        imbalance_ratio: Optional[float] = None,
        n_events: Optional[int] = None,
    ) -> SyntheticSpec:
        return SyntheticSpec(
            n_events=self.n_events if n_events is None else n_events,
            n_blocks=self.n_blocks,
            imbalance_ratio=self.imbalance_ratio if imbalance_ratio is None else imbalance_ratio,
            head_params=ScoreProfile(
                self.head_first_logit, self.head_last_logit,
                self.head_first_spread, self.head_last_spread,
            ),
            tail_params=ScoreProfile(
                self.tail_first_logit, self.tail_last_logit,
                self.tail_first_spread, self.tail_last_spread,
            ),
            server_accuracy=self.server_accuracy,
            seed=self.seed if seed is None else seed,
            correlation=self.correlation,
            imbalance_penalty=self.imbalance_penalty,
        )


@dataclass(frozen=True)
class EnergyConfig:
    mem_ops: Tuple[int, ...] = (1_000_000, 1_000_000, 1_000_000, 1_000_000)
    energy_per_access: float = 1e-9
    payload_bits: float = 75264.0
    tx_power_dbm: float = 30.0
    bandwidth_hz: float = 30e6

    def to_model(self) -> EnergyModel:
        return EnergyModel(
            mem_ops=self.mem_ops,
            energy_per_access=self.energy_per_access,
            payload_bits=self.payload_bits,
            tx_power=dbm_to_watts(self.tx_power_dbm),
        )


@dataclass(frozen=True)
class ConstraintConfig:
    """Interval budgets; ``data_volume_limit`` wins over ``offload_fraction``."""

    n_events: int = 100
    energy_limit: float = 1.0
    offload_fraction: Optional[float] = 0.3
    data_volume_limit: Optional[float] = None

    def resolve(
        self,
        model: EnergyModel,
        offload_fraction: Optional[float] = None,
        energy_limit: Optional[float] = None,
    ) -> Constraints:
        """Constraints with theta = D * M * fraction unless an explicit limit is set."""
        if offload_fraction is not None:
            theta = model.payload_bits * self.n_events * offload_fraction
        elif self.data_volume_limit is not None:
            theta = self.data_volume_limit
        elif self.offload_fraction is not None:
            theta = model.payload_bits * self.n_events * self.offload_fraction
        else:
            raise ConfigError("constraints: set offload_fraction or data_volume_limit")
        return Constraints(
            data_volume_limit=theta,
            energy_limit=self.energy_limit if energy_limit is None else energy_limit,
            n_events=self.n_events,
        )


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "offload_constraint"
    grid: Tuple[float, ...] = (0.16, 0.25, 0.35, 0.45)
    snr_db: float = 10.0
    snr_low_db: float = -10.0
    snr_high_db: float = 20.0
    intervals: int = 20
    baseline_points: int = 50
    workers: int = 1
    out_dir: str = "results"


@dataclass(frozen=True)
class EvaluationConfig:
    """Hold-out evaluation on a separately seeded test population split into groups."""

    groups: int = 1
    test_events: int = 1000
    test_seed: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    traces: TraceConfig = field(default_factory=TraceConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self) -> None:
        if self.sweep.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {', '.join(SWEEP_AXES)}, got {self.sweep.axis!r}")
        grid = self.sweep.grid
        if not grid:
            raise ConfigError("sweep.grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sweep.grid must be sorted in strictly increasing order")
        if self.sweep.axis == "imbalance_ratio" and self.traces.path is not None:
            raise ConfigError("sweep.axis imbalance_ratio needs synthetic traces, not traces.path")
        if self.sweep.workers < 1:
            raise ConfigError("sweep.workers must be >= 1")
        if self.evaluation.groups < 1:
            raise ConfigError("evaluation.groups must be >= 1")

    def with_overrides(
        self,
        axis: Optional[str] = None,
        out_dir: Optional[str] = None,
        workers: Optional[int] = None,
        seed: Optional[int] = None,
    ) -> "ExperimentConfig":
        sweep = self.sweep
        if axis is not None:
            sweep = dataclasses.replace(sweep, axis=axis)
        if out_dir is not None:
            sweep = dataclasses.replace(sweep, out_dir=out_dir)
        if workers is not None:
            sweep = dataclasses.replace(sweep, workers=workers)
        traces = self.traces if seed is None else dataclasses.replace(self.traces, seed=seed)
        return dataclasses.replace(self, sweep=sweep, traces=traces)


def _convert(value: Any, hint: Any, where: str) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(value, inner[0], where)
    if origin in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list")
        return tuple(_convert(v, args[0], where) for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if hint is float:
        # YAML 1.1 reads exponent literals such as 1e-9 as strings
        if isinstance(value, bool):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be a number, got {value!r}") from None
        if math.isnan(number):
            raise ConfigError(f"{where} must not be NaN")
        return number
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported setting type {hint!r}")


def _section(cls: type, raw: Any, name: str) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section {name!r} must be a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"section {name!r}: unknown key(s) {', '.join(map(str, unknown))}")
    values = {key: _convert(value, hints[key], f"{name}.{key}") for key, value in raw.items()}
    try:
        return cls(**values)
    except DualExitError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


def parse_config(document: Optional[Mapping[str, Any]]) -> ExperimentConfig:
    document = document or {}
    if not isinstance(document, Mapping):
        raise ConfigError("config must be a mapping of sections")
    unknown = sorted(set(document) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(map(str, unknown))}")
    classes: Dict[str, type] = {
        "traces": TraceConfig,
        "energy": EnergyConfig,
        "constraints": ConstraintConfig,
        "penalty": PenaltyConfig,
        "sweep": SweepConfig,
        "evaluation": EvaluationConfig,
    }
    sections = {name: _section(cls, document.get(name), name) for name, cls in classes.items()}
    return ExperimentConfig(**sections)


def load_config(path: PathLike) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            document = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(document)
