# MIT License
# Copyright (c) 2026 ambicuity
"""Shared fixtures: small populations, energy models and channels."""

import os
import sys
from typing import Sequence

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from dualexit.energy import ChannelState, Constraints, EnergyModel  # noqa: E402 # pylint: disable=wrong-import-position
from dualexit.traces import SyntheticSpec, TracePopulation, generate_population  # noqa: E402 # pylint: disable=wrong-import-position


def make_population(
    scores: Sequence[Sequence[float]],
    is_tail: Sequence[bool],
    server_correct: Sequence[bool],
) -> TracePopulation:
    return TracePopulation.from_arrays(np.asarray(scores, dtype=float), is_tail, server_correct)


def random_population(rng: np.random.Generator, m: int, n: int) -> TracePopulation:
    """Uniform scores in (0.01, 0.99) with at least one tail and one head event."""
    scores = rng.uniform(0.01, 0.99, size=(m, n))
    is_tail = rng.random(m) < 0.4
    is_tail[0] = True
    if m > 1:
        is_tail[-1] = False
    server = rng.random(m) < 0.8
    return TracePopulation.from_arrays(scores, is_tail, server)


def separable_population(seed: int, m: int = 40, n: int = 3) -> TracePopulation:
    """Heads score below 0.2 and tails above 0.8 at every block."""
    rng = np.random.default_rng(seed)
    is_tail = np.zeros(m, dtype=bool)
    is_tail[: max(1, m // 5)] = True
    is_tail = rng.permutation(is_tail)
    head_scores = rng.uniform(0.02, 0.19, size=(m, n))
    tail_scores = rng.uniform(0.81, 0.98, size=(m, n))
    scores = np.where(is_tail[:, None], tail_scores, head_scores)
    server = is_tail & (rng.random(m) < 0.7)
    return TracePopulation.from_arrays(scores, is_tail, server)


@pytest.fixture
def synthetic_population() -> TracePopulation:
    return generate_population(SyntheticSpec(n_events=60, n_blocks=4, seed=3))


@pytest.fixture
def unit_energy_model() -> EnergyModel:
    """About one joule per block and half a joule per offload at snr=3, B=1 MHz."""
    return EnergyModel(
        mem_ops=(1_000_000, 1_000_000, 1_000_000, 1_000_000),
        energy_per_access=1e-6,
        payload_bits=1e6,
        tx_power=1.0,
    )


@pytest.fixture
def unit_channel() -> ChannelState:
    return ChannelState(snr=3.0, bandwidth=1e6)


@pytest.fixture
def loose_setup():
    """Cheap local processing and budgets that never bind for 40 events."""
    model = EnergyModel(
        mem_ops=(1000, 1000, 1000),
        energy_per_access=1e-9,
        payload_bits=1e4,
        tx_power=0.1,
    )
    channel = ChannelState(snr=10.0, bandwidth=1e6)
    constraints = Constraints(data_volume_limit=1e4 * 40, energy_limit=1.0, n_events=40)
    return model, channel, constraints
