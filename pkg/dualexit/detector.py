# MIT License
# Copyright (c) 2026 ambicuity
"""
Dual-threshold sequential detection.

Hard decisions drive the simulator; logistic-smoothed indicators and their
analytic gradients drive the optimizer. Population metrics come from the
vectorised kernel in ``dualexit.indicators``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.special import expit

from dualexit.energy import ChannelState, EnergyModel, offload_energy
from dualexit.errors import DegeneratePopulationError, InvalidArgumentError
from dualexit.indicators import MetricValues, exit_masses, reduce_metrics
from dualexit.traces import ConfidenceTrace, Label, TracePopulation


@dataclass(frozen=True)
class ThresholdPair:
    """Lower and upper confidence thresholds, 0 < beta_low < beta_up < 1."""

    beta_low: float
    beta_up: float

    def __post_init__(self) -> None:
        low, up = float(self.beta_low), float(self.beta_up)
        if not (math.isfinite(low) and math.isfinite(up) and 0.0 < low < up < 1.0):
            raise InvalidArgumentError(
                f"thresholds must satisfy 0 < beta_low < beta_up < 1, got ({low}, {up})"
            )
        object.__setattr__(self, "beta_low", low)
        object.__setattr__(self, "beta_up", up)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ThresholdPair":
        return cls(float(values[0]), float(values[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.beta_low, self.beta_up])


@dataclass(frozen=True)
class Decision:
    label: Label
    exit_block: int


@dataclass(frozen=True)
class DetectionMetrics:
    """Population-level detection probabilities, accuracy and energy expectations."""

    p_miss: float
    p_false: float
    p_off: float
    f_acc: float
    p_tail: float
    p_head: float
    e_loc_mean: float = 0.0
    e_off_mean: float = 0.0
    head_exit_mean: float = 0.0
    tail_exit_mean: float = 0.0

    @property
    def e_total_mean(self) -> float:
        return self.e_loc_mean + self.e_off_mean

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["e_total_mean"] = self.e_total_mean
        return record


@dataclass(frozen=True)
class MetricGradients:
    """Gradients (d/d beta_low, d/d beta_up) of the smooth metrics."""

    f_acc: np.ndarray
    p_off: np.ndarray
    e_loc: np.ndarray
    e_off: np.ndarray


def _check_alpha(alpha: float) -> None:
    if not (math.isfinite(alpha) and alpha > 0):
        raise InvalidArgumentError(f"slope alpha must be positive and finite, got {alpha}")


def logistic(y: float, alpha: float) -> float:
    """1 / (1 + exp(-alpha * y))."""
    _check_alpha(alpha)
    return float(expit(alpha * y))


def hard_classify(trace: ConfidenceTrace, thr: ThresholdPair) -> Decision:
    """Scan blocks in order and stop at the first confident exit."""
    last = trace.n_blocks
    for block, score in enumerate(trace.scores, start=1):
        if score < thr.beta_low:
            return Decision(Label.HEAD, block)
        if score > thr.beta_up:
            return Decision(Label.TAIL, block)
        if block == last:
            # forced head: C_N in [beta_low, beta_up]
            return Decision(Label.HEAD, block)
    raise AssertionError("unreachable: a trace always has at least one block")


def _continue_product(trace: ConfidenceTrace, thr: ThresholdPair, alpha: float, n: int) -> float:
    product = 1.0
    for score in trace.scores[: n - 1]:
        product *= logistic(thr.beta_up - score, alpha) * logistic(score - thr.beta_low, alpha)
    return product


def _check_block(trace: ConfidenceTrace, n: int) -> None:
    if not 1 <= n <= trace.n_blocks:
        raise InvalidArgumentError(f"block index must lie in [1, {trace.n_blocks}], got {n}")


def smooth_head_indicator(trace: ConfidenceTrace, thr: ThresholdPair, alpha: float, n: int) -> float:
    _check_alpha(alpha)
    _check_block(trace, n)
    score = trace.scores[n - 1]
    if n == trace.n_blocks:
        exit_factor = logistic(thr.beta_up - score, alpha)
    else:
        exit_factor = logistic(thr.beta_low - score, alpha)
    return exit_factor * _continue_product(trace, thr, alpha, n)


def smooth_tail_indicator(trace: ConfidenceTrace, thr: ThresholdPair, alpha: float, n: int) -> float:
    _check_alpha(alpha)
    _check_block(trace, n)
    score = trace.scores[n - 1]
    return logistic(score - thr.beta_up, alpha) * _continue_product(trace, thr, alpha, n)


def evaluate(
    population: TracePopulation,
    thr: ThresholdPair,
    alpha: Optional[float] = None,
    model: Optional[EnergyModel] = None,
    channel: Optional[ChannelState] = None,
    with_grad: bool = False,
) -> MetricValues:
    """Raw kernel reduction; e_loc needs ``model`` and e_off needs ``channel`` too."""
    if alpha is not None:
        _check_alpha(alpha)
    local_energy = None
    e_off = 0.0
    if model is not None:
        if model.n_blocks != population.n_blocks:
            raise InvalidArgumentError(
                f"energy model has {model.n_blocks} blocks, population has {population.n_blocks}"
            )
        local_energy = model.local_energy_profile()
        if channel is not None:
            e_off = offload_energy(model, channel)
    masses = exit_masses(
        population.score_matrix, thr.beta_low, thr.beta_up, alpha, with_grad=with_grad
    )
    return reduce_metrics(
        masses, population.tail_mask, population.server_mask, local_energy, e_off
    )


def _require_tail(population: TracePopulation) -> None:
    if population.n_tail == 0:
        raise DegeneratePopulationError(
            f"population of {population.n_events} events has no tail events"
        )


def population_metrics(
    population: TracePopulation,
    thr: ThresholdPair,
    alpha: Optional[float] = None,
    model: Optional[EnergyModel] = None,
    channel: Optional[ChannelState] = None,
) -> DetectionMetrics:
    """Detection metrics; hard mode when ``alpha`` is None, smooth otherwise."""
    _require_tail(population)
    values = evaluate(population, thr, alpha, model, channel)
    return DetectionMetrics(
        p_miss=float(values.p_miss),
        p_false=values.p_false,
        p_off=values.p_off,
        f_acc=float(values.f_acc),
        p_tail=population.p_tail,
        p_head=population.p_head,
        e_loc_mean=values.e_loc,
        e_off_mean=values.e_off,
        head_exit_mean=values.head_exit_mean,
        tail_exit_mean=values.tail_exit_mean,
    )


def metrics_gradient(
    population: TracePopulation,
    thr: ThresholdPair,
    alpha: float,
    model: Optional[EnergyModel] = None,
    channel: Optional[ChannelState] = None,
) -> MetricGradients:
    """Analytic gradients of f_acc, p_off, e_loc and e_off in smooth mode."""
    _require_tail(population)
    values = evaluate(population, thr, alpha, model, channel, with_grad=True)
    return MetricGradients(
        f_acc=values.grad_f_acc,
        p_off=values.grad_p_off,
        e_loc=values.grad_e_loc,
        e_off=values.grad_e_off,
    )
