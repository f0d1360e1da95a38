# MIT License
# Copyright (c) 2026 ambicuity
"""
Unit tests for dualexit.energy
Covers local energy, Shannon rate, offload energy and the feasibility floor.
"""

import math
import unittest

import pytest

from dualexit.detector import ThresholdPair
from dualexit.energy import (
    ChannelState,
    Constraints,
    EnergyModel,
    cumulative_local_energy,
    data_volume,
    db_to_linear,
    dbm_to_watts,
    expected_energy,
    feasibility_snr_floor,
    interval_energy,
    linear_to_db,
    offload_affordable,
    offload_energy,
    residual_budget,
    transmission_rate,
    watts_to_dbm,
)
from dualexit.errors import InfeasibleBudgetError, InfeasibleChannelError, InvalidArgumentError
from tests.conftest import make_population

SMALL = EnergyModel(mem_ops=(100, 200, 300), energy_per_access=1e-6)


class TestLocalEnergy(unittest.TestCase):
    def test_single_block(self):
        self.assertAlmostEqual(cumulative_local_energy(SMALL, 1), 1e-4, places=15)

    def test_all_blocks(self):
        self.assertAlmostEqual(cumulative_local_energy(SMALL, 3), 6e-4, places=15)

    def test_telescoping(self):
        for n in range(1, 3):
            step = cumulative_local_energy(SMALL, n + 1) - cumulative_local_energy(SMALL, n)
            self.assertAlmostEqual(step, SMALL.energy_per_access * SMALL.mem_ops[n], places=15)

    def test_profile_matches_scalar(self):
        profile = SMALL.local_energy_profile()
        for n in range(1, 4):
            self.assertEqual(profile[n - 1], cumulative_local_energy(SMALL, n))

    def test_block_out_of_range(self):
        with self.assertRaises(InvalidArgumentError):
            cumulative_local_energy(SMALL, 4)
        with self.assertRaises(InvalidArgumentError):
            cumulative_local_energy(SMALL, 0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mem_ops": (), "energy_per_access": 1e-9},
        {"mem_ops": (10, 0), "energy_per_access": 1e-9},
        {"mem_ops": (10,), "energy_per_access": 0.0},
        {"mem_ops": (10,), "energy_per_access": 1e-9, "payload_bits": -1.0},
        {"mem_ops": (10,), "energy_per_access": 1e-9, "tx_power": math.inf},
    ],
)
def test_energy_model_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        EnergyModel(**kwargs)


@pytest.mark.parametrize("snr, bandwidth", [(-1.0, 1e6), (math.inf, 1e6), (1.0, 0.0)])
def test_channel_validation(snr, bandwidth):
    with pytest.raises(InvalidArgumentError):
        ChannelState(snr=snr, bandwidth=bandwidth)


@pytest.mark.parametrize(
    "snr, bandwidth, rate",
    [(0.0, 1e6, 0.0), (1.0, 1e6, 1e6), (3.0, 30e6, 60e6)],
)
def test_transmission_rate(snr, bandwidth, rate):
    assert transmission_rate(ChannelState(snr, bandwidth)) == pytest.approx(rate, abs=1e-6)


def test_offload_energy_unit_ratio():
    model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=1e6, tx_power=1.0)
    assert offload_energy(model, ChannelState(1.0, 1e6)) == pytest.approx(1.0)


def test_doubling_rate_halves_offload_energy():
    model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=1e6, tx_power=1.0)
    low = offload_energy(model, ChannelState(1.0, 1e6))
    high = offload_energy(model, ChannelState(3.0, 1e6))
    assert high == pytest.approx(low / 2.0)


def test_offload_energy_at_evaluation_settings():
    model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, tx_power=dbm_to_watts(30.0))
    assert model.payload_bits == 3 * 56 * 56 * 8
    assert offload_energy(model, ChannelState(1.0, 30e6)) == pytest.approx(2.5088e-3, rel=1e-12)


def test_offload_energy_on_dead_channel():
    with pytest.raises(InfeasibleChannelError):
        offload_energy(SMALL, ChannelState(0.0, 1e6))


@pytest.mark.parametrize("dbm, watts", [(30.0, 1.0), (0.0, 1e-3), (20.0, 0.1)])
def test_dbm_conversions(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts)
    assert watts_to_dbm(watts) == pytest.approx(dbm)


def test_db_conversions():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(0.0) == 1.0
    assert linear_to_db(100.0) == pytest.approx(20.0)
    assert linear_to_db(0.0) == -math.inf
    with pytest.raises(InvalidArgumentError):
        linear_to_db(-1.0)
    with pytest.raises(InvalidArgumentError):
        watts_to_dbm(0.0)


class TestExpectedEnergy(unittest.TestCase):
    def setUp(self):
        self.model = EnergyModel(mem_ops=(1000, 2000), energy_per_access=1e-6, payload_bits=1e6, tx_power=1.0)
        self.channel = ChannelState(3.0, 1e6)
        self.population = make_population(
            [[0.5, 0.5], [0.6, 0.7], [0.3, 0.8]], [True, False, True], [True, False, False]
        )

    def test_all_head_at_first_block(self):
        breakdown = expected_energy(self.population, ThresholdPair(0.98, 0.99), self.model, self.channel)
        self.assertAlmostEqual(breakdown.e_total, 1e-3, places=15)
        self.assertEqual(breakdown.e_off, 0.0)

    def test_all_tail_at_first_block(self):
        breakdown = expected_energy(self.population, ThresholdPair(0.01, 0.02), self.model, self.channel)
        self.assertEqual(breakdown.e_off, offload_energy(self.model, self.channel))
        self.assertAlmostEqual(breakdown.e_loc, 1e-3, places=15)

    def test_smooth_mode_is_close_to_hard_mode_at_steep_slope(self):
        thr = ThresholdPair(0.2, 0.9)
        hard = expected_energy(self.population, thr, self.model, self.channel)
        smooth = expected_energy(self.population, thr, self.model, self.channel, alpha=500.0)
        self.assertAlmostEqual(hard.e_total, smooth.e_total, places=6)

    def test_block_count_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            expected_energy(self.population, ThresholdPair(0.2, 0.9), SMALL, self.channel)


def test_interval_views():
    model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=1000.0)
    constraints = Constraints(data_volume_limit=5e3, energy_limit=2.0, n_events=10)
    assert interval_energy(constraints, 0.05) == pytest.approx(0.5)
    assert data_volume(model, constraints, 0.3) == pytest.approx(3000.0)


class TestFeasibilityFloor:
    """The offload floor solves E_off(snr) = residual budget."""

    def setup_method(self):
        # block-1 energy 1e-9 J per event, so the residual budget is 1 J
        self.model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=1e6, tx_power=1.0)
        self.constraints = Constraints(data_volume_limit=1e7, energy_limit=1.0 + 1e-9, n_events=1)

    def test_floor_at_zero_db(self):
        assert residual_budget(self.model, self.constraints) == pytest.approx(1.0)
        assert feasibility_snr_floor(self.model, self.constraints, 1e6) == pytest.approx(1.0, rel=1e-9)

    def test_doubling_bandwidth(self):
        floor = feasibility_snr_floor(self.model, self.constraints, 2e6)
        assert floor == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-9)

    def test_tiny_payload_makes_every_channel_feasible(self):
        model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=1e-6, tx_power=1.0)
        assert feasibility_snr_floor(model, self.constraints, 1e6) == pytest.approx(0.0, abs=1e-11)

    def test_overwhelming_payload_gives_infinite_floor(self):
        model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=1e12, tx_power=1.0)
        assert feasibility_snr_floor(model, self.constraints, 1e6) == math.inf

    def test_exhausted_budget(self):
        constraints = Constraints(data_volume_limit=1e7, energy_limit=1e-9, n_events=2)
        with pytest.raises(InfeasibleBudgetError):
            feasibility_snr_floor(self.model, constraints, 1e6)

    @pytest.mark.parametrize("bandwidth, budget", [(1e6, 1.0), (30e6, 0.05), (5e5, 3.0), (2e7, 0.01)])
    def test_affordability_flips_at_the_floor(self, bandwidth, budget):
        model = EnergyModel(mem_ops=(1,), energy_per_access=1e-9, payload_bits=75264.0, tx_power=1.0)
        constraints = Constraints(data_volume_limit=1e7, energy_limit=budget, n_events=1)
        floor = feasibility_snr_floor(model, constraints, bandwidth)
        assert offload_affordable(model, constraints, ChannelState(floor * (1 + 1e-6), bandwidth))
        assert not offload_affordable(model, constraints, ChannelState(floor * (1 - 1e-6), bandwidth))

    def test_dead_channel_is_never_affordable(self):
        assert not offload_affordable(self.model, self.constraints, ChannelState(0.0, 1e6))
