# MIT License
# Copyright (c) 2026 ambicuity
"""
Property tests: analytic gradients against central finite differences,
Lipschitz bounds of the smooth metrics and convexity of the penalised
subproblem.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualexit.detector import ThresholdPair, evaluate, hard_classify
from dualexit.energy import ChannelState, Constraints, EnergyModel, offload_energy
from dualexit.indicators import hard_exit_masses
from dualexit.optimizer import PenaltyConfig, build_problem, gamma_constant, penalty_value_and_grad
from dualexit.traces import Label
from tests.conftest import random_population

STEP = 1e-5
REL_TOL = 1e-4

MODEL = EnergyModel(
    mem_ops=(1_000_000,) * 5,
    energy_per_access=1e-6,
    payload_bits=1e6,
    tx_power=1.0,
)
CHANNEL = ChannelState(snr=3.0, bandwidth=1e6)

populations = st.builds(
    lambda seed, m, n: random_population(np.random.default_rng(seed), m, n),
    st.integers(0, 2**32 - 1),
    st.integers(2, 50),
    st.integers(1, 5),
)
pairs = st.builds(ThresholdPair, st.floats(0.05, 0.45), st.floats(0.55, 0.95))
slopes = st.floats(1.0, 20.0)


def model_for(n_blocks):
    return EnergyModel(MODEL.mem_ops[:n_blocks], MODEL.energy_per_access, MODEL.payload_bits, MODEL.tx_power)


def smooth_terms(population, x, alpha, model):
    values = evaluate(population, ThresholdPair(float(x[0]), float(x[1])), alpha, model, CHANNEL)
    return np.array([values.f_acc, values.p_off, values.e_loc + values.e_off])


def central_difference(fn, x):
    grads = []
    for axis in range(2):
        offset = np.zeros(2)
        offset[axis] = STEP
        grads.append((fn(x + offset) - fn(x - offset)) / (2.0 * STEP))
    return np.stack(grads, axis=-1)


def assert_gradient_close(analytic, numeric, floor=1e-3):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(float(np.linalg.norm(numeric)), floor)
    assert float(np.linalg.norm(analytic - numeric)) <= REL_TOL * scale


@settings(max_examples=100, deadline=None)
@given(population=populations, thr=pairs, alpha=slopes)
def test_metric_gradients_match_finite_differences(population, thr, alpha):
    model = model_for(population.n_blocks)
    values = evaluate(population, thr, alpha, model, CHANNEL, with_grad=True)
    numeric = central_difference(lambda x: smooth_terms(population, x, alpha, model), thr.as_array())

    assert_gradient_close(values.grad_f_acc, numeric[0])
    assert_gradient_close(values.grad_p_off, numeric[1])
    assert_gradient_close(values.grad_e_loc + values.grad_e_off, numeric[2])


@settings(max_examples=100, deadline=None)
@given(
    population=populations,
    thr=pairs,
    anchor=pairs,
    alpha=slopes,
    fraction=st.floats(0.05, 1.0),
    budget=st.floats(0.5, 20.0),
)
def test_penalised_objective_gradient_matches_finite_differences(population, thr, anchor, alpha, fraction, budget):
    model = model_for(population.n_blocks)
    m = population.n_events
    constraints = Constraints(data_volume_limit=model.payload_bits * m * fraction, energy_limit=budget * m, n_events=m)
    cfg = PenaltyConfig(slope=alpha)
    problem = build_problem(population, model, CHANNEL, constraints, cfg)

    _, grad = problem.value_and_grad(thr.as_array(), anchor.as_array())
    numeric = central_difference(lambda x: problem.value_and_grad(x, anchor.as_array())[0], thr.as_array())
    assert_gradient_close(grad, numeric)


def test_penalised_objective_at_its_anchor_with_slack_constraints(synthetic_population, unit_energy_model, unit_channel):
    m = synthetic_population.n_events
    constraints = Constraints(data_volume_limit=1e6 * m * 10, energy_limit=1e3 * m, n_events=m)
    cfg = PenaltyConfig(slope=10.0)
    thr = ThresholdPair(0.3, 0.7)
    value, grad = penalty_value_and_grad(
        thr, thr, synthetic_population, unit_energy_model, unit_channel, constraints, cfg
    )
    smooth = evaluate(synthetic_population, thr, 10.0, with_grad=True)
    assert value == pytest.approx(-smooth.f_acc, rel=1e-12)
    np.testing.assert_allclose(grad, -smooth.grad_f_acc, rtol=1e-12)


class TestLipschitzBounds:
    """Gradient differences never exceed the closed-form smoothness constants."""

    @pytest.mark.parametrize("n_blocks, alpha", [(1, 4.0), (3, 10.0), (4, 1.0), (5, 20.0)])
    def test_random_pairs(self, n_blocks, alpha):
        rng = np.random.default_rng(n_blocks)
        population = random_population(rng, 30, n_blocks)
        model = model_for(n_blocks)
        m = population.n_events
        gamma = gamma_constant(n_blocks, alpha)
        e_tx = offload_energy(model, CHANNEL)
        e_last = float(model.local_energy_profile()[-1])
        bound_volume = 2.0 * model.payload_bits * m * gamma
        bound_energy = 2.0 * m * gamma * (e_last + e_tx / 2.0)

        def grads(x):
            v = evaluate(population, ThresholdPair(*x), alpha, model, CHANNEL, with_grad=True)
            volume = model.payload_bits * m * v.grad_p_off
            energy = m * (v.grad_e_loc + v.grad_e_off)
            return v.grad_f_acc, volume, energy

        for _ in range(1000):
            a = np.sort(rng.uniform(0.01, 0.99, 2))
            b = np.sort(rng.uniform(0.01, 0.99, 2))
            if a[1] - a[0] < 1e-3 or b[1] - b[0] < 1e-3:
                continue
            distance = float(np.linalg.norm(a - b))
            ga, gb = grads(a), grads(b)
            assert np.linalg.norm(ga[0] - gb[0]) <= gamma * distance + 1e-12
            assert np.linalg.norm(ga[1] - gb[1]) <= bound_volume * distance + 1e-9
            assert np.linalg.norm(ga[2] - gb[2]) <= bound_energy * distance + 1e-9


def _segments(rng, count):
    for _ in range(count):
        a = np.sort(rng.uniform(0.02, 0.98, 2))
        b = np.sort(rng.uniform(0.02, 0.98, 2))
        if a[1] - a[0] > 1e-3 and b[1] - b[0] > 1e-3:
            yield a, b


def test_accuracy_is_gamma_weakly_convex():
    rng = np.random.default_rng(21)
    population = random_population(rng, 40, 4)
    alpha = 8.0
    gamma = gamma_constant(4, alpha)

    def shifted(x):
        value = evaluate(population, ThresholdPair(*x), alpha).f_acc
        return -value + 0.5 * gamma * float(x @ x)

    for a, b in _segments(rng, 1000):
        mid = 0.5 * (a + b)
        assert shifted(mid) <= 0.5 * shifted(a) + 0.5 * shifted(b) + 1e-9


def test_penalised_objective_is_eta_strongly_convex():
    rng = np.random.default_rng(22)
    population = random_population(rng, 40, 4)
    model = model_for(4)
    m = population.n_events
    constraints = Constraints(
        data_volume_limit=model.payload_bits * m * 0.3, energy_limit=1e3 * m, n_events=m
    )
    problem = build_problem(population, model, CHANNEL, constraints, PenaltyConfig(slope=6.0))
    anchor = np.array([0.3, 0.7])
    eta = problem.constants.eta

    def f(x):
        return problem.value_and_grad(x, anchor)[0]

    for a, b in _segments(rng, 1000):
        mid = 0.5 * (a + b)
        gap = float(np.linalg.norm(a - b)) ** 2
        assert f(mid) <= 0.5 * f(a) + 0.5 * f(b) - eta / 8.0 * gap + 1e-9


@settings(max_examples=50, deadline=None)
@given(population=populations, thr=pairs)
def test_hard_kernel_partition_and_scan_agree(population, thr):
    masses = hard_exit_masses(population.score_matrix, thr.beta_low, thr.beta_up)
    assert np.all((masses.tail + masses.head).sum(axis=1) == 1.0)
    for m, item in enumerate(population.traces):
        decision = hard_classify(item, thr)
        fired = masses.tail[m] if decision.label is Label.TAIL else masses.head[m]
        assert fired[decision.exit_block - 1] == 1.0
    assert math.isfinite(float(masses.tail.sum()))
