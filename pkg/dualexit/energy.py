# MIT License
# Copyright (c) 2026 ambicuity
"""Local and offload energy accounting plus the Shannon-rate channel model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from dualexit.errors import InfeasibleBudgetError, InfeasibleChannelError, InvalidArgumentError
from dualexit.indicators import exit_masses, reduce_metrics

if TYPE_CHECKING:
    from dualexit.detector import ThresholdPair
    from dualexit.traces import TracePopulation

# 3 x 56 x 56 input features at 8 bits per channel-pixel
DEFAULT_PAYLOAD_BITS = 3 * 56 * 56 * 8


@dataclass(frozen=True)
class EnergyModel:
    """Per-block memory accesses, energy per access, payload and transmit power."""

    mem_ops: Tuple[int, ...]
    energy_per_access: float
    payload_bits: float = float(DEFAULT_PAYLOAD_BITS)
    tx_power: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mem_ops", tuple(int(s) for s in self.mem_ops))
        if not self.mem_ops or any(s <= 0 for s in self.mem_ops):
            raise InvalidArgumentError("mem_ops must be a nonempty sequence of positive counts")
        for name in ("energy_per_access", "payload_bits", "tx_power"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgumentError(f"{name} must be positive and finite, got {value}")

    @property
    def n_blocks(self) -> int:
        return len(self.mem_ops)

    def local_energy_profile(self) -> np.ndarray:
        """E_loc(n) for n = 1..N."""
        return self.energy_per_access * np.cumsum(np.asarray(self.mem_ops, dtype=np.float64))


@dataclass(frozen=True)
class ChannelState:
    snr: float
    bandwidth: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.snr) and self.snr >= 0):
            raise InvalidArgumentError(f"snr must be finite and non-negative, got {self.snr}")
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidArgumentError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class Constraints:
    """Per-coherence-interval budgets: theta bits, xi joules, M events."""

    data_volume_limit: float
    energy_limit: float
    n_events: int

    def __post_init__(self) -> None:
        if not self.data_volume_limit > 0:
            raise InvalidArgumentError("data_volume_limit must be positive")
        if not self.energy_limit > 0:
            raise InvalidArgumentError("energy_limit must be positive")
        if self.n_events < 1:
            raise InvalidArgumentError("n_events must be >= 1")


@dataclass(frozen=True)
class EnergyBreakdown:
    """Expected joules per event."""

    e_loc: float
    e_off: float

    @property
    def e_total(self) -> float:
        return self.e_loc + self.e_off


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise InvalidArgumentError(f"power must be positive, got {watts}")
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    if linear < 0:
        raise InvalidArgumentError(f"linear ratio must be non-negative, got {linear}")
    if linear == 0:
        return -math.inf
    return 10.0 * math.log10(linear)


def cumulative_local_energy(model: EnergyModel, n: int) -> float:
    """E_loc(n) = energy_per_access * sum of mem_ops over blocks 1..n."""
    if not 1 <= n <= model.n_blocks:
        raise InvalidArgumentError(f"block index must lie in [1, {model.n_blocks}], got {n}")
    return model.energy_per_access * float(sum(model.mem_ops[:n]))


def transmission_rate(channel: ChannelState) -> float:
    """Shannon rate in bits per second."""
    return channel.bandwidth * math.log2(1.0 + channel.snr)


def offload_energy(model: EnergyModel, channel: ChannelState) -> float:
    """Joules to transmit one payload."""
    rate = transmission_rate(channel)
    if rate <= 0:
        raise InfeasibleChannelError(f"channel with snr={channel.snr} carries no data")
    return model.tx_power * model.payload_bits / rate


def expected_energy(
    population: "TracePopulation",
    thr: "ThresholdPair",
    model: EnergyModel,
    channel: ChannelState,
    alpha: Optional[float] = None,
) -> EnergyBreakdown:
    """Per-event expected local and offload energy; hard mode when ``alpha`` is None."""
    if model.n_blocks != population.n_blocks:
        raise InvalidArgumentError(
            f"energy model has {model.n_blocks} blocks, population has {population.n_blocks}"
        )
    masses = exit_masses(population.score_matrix, thr.beta_low, thr.beta_up, alpha)
    values = reduce_metrics(
        masses,
        population.tail_mask,
        population.server_mask,
        local_energy=model.local_energy_profile(),
        offload_energy=offload_energy(model, channel),
    )
    return EnergyBreakdown(e_loc=values.e_loc, e_off=values.e_off)


def interval_energy(constraints: Constraints, e_total: float) -> float:
    """f_energy = M * e_total, joules per coherence interval."""
    return constraints.n_events * e_total


def data_volume(model: EnergyModel, constraints: Constraints, p_off: float) -> float:
    """v = D * M * p_off, bits per coherence interval."""
    return model.payload_bits * constraints.n_events * p_off


def residual_budget(model: EnergyModel, constraints: Constraints) -> float:
    """Energy left after every event runs block 1 locally."""
    return constraints.energy_limit - constraints.n_events * cumulative_local_energy(model, 1)


def feasibility_snr_floor(model: EnergyModel, constraints: Constraints, bandwidth: float) -> float:
    """Smallest linear SNR at which one offload fits the residual budget."""
    budget = residual_budget(model, constraints)
    if budget <= 0:
        raise InfeasibleBudgetError(
            f"energy limit {constraints.energy_limit:.6g} J cannot cover block 1 "
            f"for {constraints.n_events} events ({budget:.6g} J left)"
        )
    exponent = model.tx_power * model.payload_bits / (bandwidth * budget)
    if exponent > 1023:
        return math.inf
    return 2.0 ** exponent - 1.0


def offload_affordable(model: EnergyModel, constraints: Constraints, channel: ChannelState) -> bool:
    """True when one block-1 offload fits within the residual budget."""
    if transmission_rate(channel) <= 0:
        return False
    return offload_energy(model, channel) <= residual_budget(model, constraints)
