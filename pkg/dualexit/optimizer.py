# MIT License
# Copyright (c) 2026 ambicuity
"""
Channel-adaptive dual-threshold optimisation.

This module:
1. Computes the smoothness constants of the proximal penalty objective
2. Runs the accelerated proximal gradient inner loop and the proximal-point
   outer loop, escalating the penalty weights until the smooth constraints hold
3. Refines the smooth solution with an exact search of the hard-mode frontier
4. Builds the SNR-indexed threshold lookup table consumed by the policy

The solver works in budget-normalised units (data volume in multiples of
theta, energy in multiples of xi). The objective is the same function in both
unit systems; only the step-size constant differs.

By default each outer step sizes lam from the local curvature of the
objective and moves towards the closed-form weight only when the inner solve
fails to descend.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from dualexit.detector import ThresholdPair, evaluate, population_metrics
from dualexit.energy import (
    ChannelState,
    Constraints,
    EnergyModel,
    data_volume,
    db_to_linear,
    feasibility_snr_floor,
    interval_energy,
    linear_to_db,
    offload_energy,
)
from dualexit.errors import (
    DegeneratePopulationError,
    DualExitError,
    InfeasibleBudgetError,
    InfeasibleChannelError,
    InvalidArgumentError,
    LambdaTooSmallError,
    NumericalFailureError,
)
from dualexit.parallel import ordered_map
from dualexit.traces import TracePopulation

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)

BOX_EPSILON = 1e-4
MIN_GAP = 1e-3
DIVERGENCE_PATIENCE = 10
INITIAL_THRESHOLDS = ThresholdPair(0.3, 0.7)
CURVATURE_STEP = 1e-4
LIMIT_SLACK = 1e-12
# round-off allowed when comparing f_t at the new point with f_t at the anchor
DESCENT_SLACK = 1e-13

LAMBDA_LOCAL = "local"
LAMBDA_BOUND = "bound"
LAMBDA_RULES = (LAMBDA_LOCAL, LAMBDA_BOUND)

STATUS_OK = "ok"
STATUS_BELOW_FLOOR = "below_floor"
STATUS_VIOLATION = "constraint_violation"
STATUS_FLOOR_ROW = "floor"

PathLike = Union[str, Path]


@dataclass(frozen=True)
class PenaltyConfig:
    """Proximal, penalty and slope parameters plus iteration budgets.

    ``lam`` None means 1.5x the smallest weight that keeps the subproblem
    strongly convex. ``kappa`` and ``rho`` are in the caller's units (1/bits^2
    and 1/J^2); None means ``penalty_scale`` in budget-normalised units.

    ``lambda_rule`` "local" sizes every outer step from the curvature at its
    anchor (never below ``lambda_floor``, never above the bound); "bound" uses
    the closed-form weight throughout. An explicit ``lam`` always wins.
    ``refine`` enables the hard-mode frontier search, which is exact while the
    distinct candidate thresholds per axis stay within ``refine_points``.
    """

    lam: Optional[float] = None
    kappa: Optional[float] = None
    rho: Optional[float] = None
    penalty_scale: float = 1.0
    lambda_factor: float = 1.5
    slope: float = 50.0
    outer_iters: int = 400
    inner_iters: int = 20
    snr_bins: int = 16
    convergence_tol: float = 1e-2
    stationarity_tol: float = 1e-3
    max_penalty_doublings: int = 8
    lambda_rule: str = LAMBDA_LOCAL
    lambda_floor: float = 1.0
    refine: bool = True
    refine_points: int = 1024

    def __post_init__(self) -> None:
        if self.lambda_rule not in LAMBDA_RULES:
            raise InvalidArgumentError(
                f"lambda_rule must be one of {', '.join(LAMBDA_RULES)}, got {self.lambda_rule!r}"
            )
        if not self.lambda_floor > 0:
            raise InvalidArgumentError(f"lambda_floor must be positive, got {self.lambda_floor}")
        if self.refine_points < 2:
            raise InvalidArgumentError(f"refine_points must be >= 2, got {self.refine_points}")
        for name in ("lam", "kappa", "rho"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {value}")
        for name in ("penalty_scale", "slope", "convergence_tol", "stationarity_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.lambda_factor > 1.0:
            raise InvalidArgumentError("lambda_factor must exceed 1 so that eta > 0")
        for name in ("outer_iters", "inner_iters", "snr_bins"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.max_penalty_doublings < 0:
            raise InvalidArgumentError("max_penalty_doublings must be >= 0")


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float
    a_const: float
    b_const: float
    psi: float
    eta: float
    lam: float
    min_lambda: float
    kappa: float
    rho: float


def gamma_constant(n_blocks: int, slope: float) -> float:
    """Lipschitz constant of the smooth accuracy gradient: k^2 N(N+1)(N+4*sqrt(3)-1)/24."""
    if n_blocks < 1:
        raise InvalidArgumentError(f"n_blocks must be >= 1, got {n_blocks}")
    if not slope > 0:
        raise InvalidArgumentError(f"slope must be positive, got {slope}")
    n = n_blocks
    return slope ** 2 * n * (n + 1) * (n + 4.0 * SQRT3 - 1.0) / 24.0


def _derive(
    n_blocks: int,
    n_events: int,
    slope: float,
    theta: float,
    xi: float,
    payload: float,
    e_loc_last: float,
    e_tx: float,
    kappa: float,
    rho: float,
    lam: Optional[float],
    lambda_factor: float,
) -> DerivedConstants:
    gamma = gamma_constant(n_blocks, slope)
    n, m = n_blocks, n_events
    a_const = max(theta, payload * m * (n - 1) / (2.0 * SQRT2))
    b_const = max(
        xi,
        (n * n + 1) * e_loc_last / (2.0 * SQRT2) + (n + 2) * (n - 1) * e_tx / (4.0 * SQRT2),
    )
    energy_lipschitz = e_loc_last + e_tx / 2.0
    min_lambda = gamma + 2.0 * m * gamma * (
        kappa * a_const * payload + rho * b_const * energy_lipschitz
    )
    if lam is None:
        lam = lambda_factor * min_lambda
    psi = (
        gamma
        + lam
        + kappa * payload * m * a_const * (a_const + 2.0 * gamma)
        + rho * b_const * (b_const + 2.0 * m * gamma * energy_lipschitz)
    )
    eta = lam - min_lambda
    if eta <= 0:
        raise LambdaTooSmallError(lam, min_lambda)
    return DerivedConstants(
        gamma=gamma,
        a_const=a_const,
        b_const=b_const,
        psi=psi,
        eta=eta,
        lam=lam,
        min_lambda=min_lambda,
        kappa=kappa,
        rho=rho,
    )


def _raw_weights(cfg: PenaltyConfig, constraints: Constraints) -> Tuple[float, float]:
    kappa = cfg.kappa if cfg.kappa is not None else cfg.penalty_scale / constraints.data_volume_limit ** 2
    rho = cfg.rho if cfg.rho is not None else cfg.penalty_scale / constraints.energy_limit ** 2
    return kappa, rho


def penalty_constants(
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    cfg: PenaltyConfig,
) -> DerivedConstants:
    """gamma, A, B, psi, eta and the minimal lambda, in the caller's units."""
    kappa, rho = _raw_weights(cfg, constraints)
    return _derive(
        n_blocks=population.n_blocks,
        n_events=constraints.n_events,
        slope=cfg.slope,
        theta=constraints.data_volume_limit,
        xi=constraints.energy_limit,
        payload=model.payload_bits,
        e_loc_last=float(model.local_energy_profile()[-1]),
        e_tx=offload_energy(model, channel),
        kappa=kappa,
        rho=rho,
        lam=cfg.lam,
        lambda_factor=cfg.lambda_factor,
    )


@dataclass(frozen=True)
class PenaltyProblem:
    """One penalised subproblem family: fixed channel, fixed weights, varying anchor."""

    population: TracePopulation
    model: EnergyModel
    channel: ChannelState
    constraints: Constraints
    slope: float
    kappa_n: float
    rho_n: float
    constants: DerivedConstants

    @property
    def lam(self) -> float:
        return self.constants.lam

    def _scaled(self, x: np.ndarray):
        values = evaluate(
            self.population,
            _UncheckedPair(float(x[0]), float(x[1])),
            self.slope,
            self.model,
            self.channel,
            with_grad=True,
        )
        m = self.constraints.n_events
        volume_scale = self.model.payload_bits * m / self.constraints.data_volume_limit
        energy_scale = m / self.constraints.energy_limit
        volume = volume_scale * values.p_off
        energy = energy_scale * (values.e_loc + values.e_off)
        return values, volume, energy, volume_scale, energy_scale

    def excess(self, x: np.ndarray) -> Tuple[float, float]:
        """Relative constraint excess (v/theta - 1, f_energy/xi - 1) in smooth mode."""
        _, volume, energy, _, _ = self._scaled(x)
        return volume - 1.0, energy - 1.0

    def penalised(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """-f_acc plus both quadratic penalties, without the proximal term."""
        values, volume, energy, volume_scale, energy_scale = self._scaled(x)
        hinge_v = max(0.0, volume - 1.0)
        hinge_e = max(0.0, energy - 1.0)
        value = -values.f_acc + 0.5 * self.kappa_n * hinge_v ** 2 + 0.5 * self.rho_n * hinge_e ** 2
        grad = (
            -values.grad_f_acc
            + self.kappa_n * hinge_v * volume_scale * values.grad_p_off
            + self.rho_n * hinge_e * energy_scale * (values.grad_e_loc + values.grad_e_off)
        )
        return value, grad

    def value_and_grad(
        self, x: np.ndarray, anchor: np.ndarray, lam: Optional[float] = None
    ) -> Tuple[float, np.ndarray]:
        lam = self.lam if lam is None else lam
        value, grad = self.penalised(x)
        offset = x - anchor
        return value + 0.5 * lam * float(offset @ offset), grad + lam * offset

    def curvature(self, x: np.ndarray, step: float = CURVATURE_STEP) -> Tuple[float, float]:
        """Extreme Hessian eigenvalues of the penalised objective, by central differences."""
        hessian = np.empty((2, 2))
        for i in range(2):
            offset = np.zeros(2)
            offset[i] = step
            hessian[:, i] = (self.penalised(x + offset)[1] - self.penalised(x - offset)[1]) / (2.0 * step)
        low, high = np.linalg.eigvalsh(0.5 * (hessian + hessian.T))
        return float(low), float(high)

    @property
    def bound_step(self) -> "StepConstants":
        return StepConstants(lam=self.constants.lam, psi=self.constants.psi, eta=self.constants.eta)


@dataclass(frozen=True)
class StepConstants:
    """Proximal weight and the smoothness / strong-convexity constants it implies."""

    lam: float
    psi: float
    eta: float


@dataclass(frozen=True)
class _UncheckedPair:
    """Threshold pair for extrapolated points that may leave the valid box."""

    beta_low: float
    beta_up: float


def build_problem(
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    cfg: PenaltyConfig,
    kappa_n: Optional[float] = None,
    rho_n: Optional[float] = None,
) -> PenaltyProblem:
    """Subproblem with normalised weights; defaults come from ``cfg``."""
    if population.n_tail == 0:
        raise DegeneratePopulationError("cannot optimise accuracy without tail events")
    theta, xi = constraints.data_volume_limit, constraints.energy_limit
    kappa, rho = _raw_weights(cfg, constraints)
    kappa_n = kappa * theta ** 2 if kappa_n is None else kappa_n
    rho_n = rho * xi ** 2 if rho_n is None else rho_n
    constants = _derive(
        n_blocks=population.n_blocks,
        n_events=constraints.n_events,
        slope=cfg.slope,
        theta=1.0,
        xi=1.0,
        payload=model.payload_bits / theta,
        e_loc_last=float(model.local_energy_profile()[-1]) / xi,
        e_tx=offload_energy(model, channel) / xi,
        kappa=kappa_n,
        rho=rho_n,
        lam=cfg.lam,
        lambda_factor=cfg.lambda_factor,
    )
    return PenaltyProblem(
        population=population,
        model=model,
        channel=channel,
        constraints=constraints,
        slope=cfg.slope,
        kappa_n=kappa_n,
        rho_n=rho_n,
        constants=constants,
    )


def penalty_value_and_grad(
    thr: ThresholdPair,
    anchor: ThresholdPair,
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    cfg: PenaltyConfig,
) -> Tuple[float, np.ndarray]:
    """f_t(thr) = -f_acc + lam/2 |thr - anchor|^2 + kappa/2 h(v - theta)^2 + rho/2 h(f_energy - xi)^2."""
    problem = build_problem(population, model, channel, constraints, cfg)
    return problem.value_and_grad(thr.as_array(), anchor.as_array())


def project_to_box(x: np.ndarray, epsilon: float = BOX_EPSILON, gap: float = MIN_GAP) -> np.ndarray:
    """Map onto eps <= beta_low, beta_up <= 1 - eps, beta_up - beta_low >= gap."""
    low, up = np.clip(x, epsilon, 1.0 - epsilon)
    if up - low < gap:
        mid = min(max(0.5 * (low + up), epsilon + 0.5 * gap), 1.0 - epsilon - 0.5 * gap)
        low, up = mid - 0.5 * gap, mid + 0.5 * gap
    return np.array([low, up])


@dataclass(frozen=True)
class DescentResult:
    x: np.ndarray
    iterates: List[np.ndarray]
    values: List[float]


def accelerated_descent(
    value_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    psi: float,
    eta: float,
    iters: int,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    y0: Optional[np.ndarray] = None,
) -> DescentResult:
    """Nesterov descent for a psi-smooth, eta-strongly convex function.

    Gradient step 1/psi at the extrapolated point, then momentum
    (sqrt(psi) - sqrt(eta)) / (sqrt(psi) + sqrt(eta)). Raises
    NumericalFailureError when the value rises DIVERGENCE_PATIENCE times in a row.
    """
    if not psi >= eta > 0:
        raise InvalidArgumentError(f"need psi >= eta > 0, got psi={psi}, eta={eta}")
    momentum = (math.sqrt(psi) - math.sqrt(eta)) / (math.sqrt(psi) + math.sqrt(eta))
    project = project or (lambda z: z)

    x = np.asarray(x0, dtype=np.float64)
    y = x.copy() if y0 is None else np.asarray(y0, dtype=np.float64)
    value, _ = value_and_grad(x)
    iterates, values = [x], [value]
    rises = 0
    for _ in range(iters):
        _, grad = value_and_grad(y)
        x_next = project(y - grad / psi)
        y = x_next + momentum * (x_next - x)
        x = x_next
        next_value, _ = value_and_grad(x)
        iterates.append(x)
        values.append(next_value)
        if not math.isfinite(next_value):
            raise NumericalFailureError("objective became non-finite", iterates)
        rises = rises + 1 if next_value > value else 0
        if rises >= DIVERGENCE_PATIENCE:
            raise NumericalFailureError(
                f"objective rose for {DIVERGENCE_PATIENCE} consecutive iterations", iterates
            )
        value = next_value
    return DescentResult(x=x, iterates=iterates, values=values)


def _descend(problem: PenaltyProblem, anchor: np.ndarray, iters: int, step: StepConstants,
             start: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """APG on f_t around ``anchor``; None when it ends above f_t at the anchor."""
    result = accelerated_descent(
        lambda z: problem.value_and_grad(z, anchor, step.lam),
        anchor,
        step.psi,
        step.eta,
        iters,
        project=project_to_box,
        y0=start,
    )
    start_value = result.values[0]
    if result.values[-1] > start_value + DESCENT_SLACK * max(1.0, abs(start_value)):
        return None
    return result.x


def local_step_constants(problem: PenaltyProblem, x: np.ndarray, cfg: PenaltyConfig) -> StepConstants:
    """lam from the curvature at ``x``: lambda_factor times the most negative eigenvalue.

    Falls back to the closed-form constants when the estimate reaches them or
    is not finite.
    """
    bound = problem.bound_step
    mu_min, mu_max = problem.curvature(x)
    if not (math.isfinite(mu_min) and math.isfinite(mu_max)):
        return bound
    lam = max(cfg.lambda_floor, -cfg.lambda_factor * mu_min)
    if lam >= bound.lam:
        return bound
    return StepConstants(
        lam=lam,
        psi=lam + cfg.lambda_factor * max(mu_max, 0.0),
        eta=lam + min(mu_min, 0.0),
    )


def _widen(step: StepConstants, bound: StepConstants) -> StepConstants:
    lam = 2.0 * step.lam
    if lam >= bound.lam:
        return bound
    # doubling lam shifts both Hessian extremes by the old lam
    return StepConstants(lam=lam, psi=step.psi + step.lam, eta=step.eta + step.lam)


@dataclass(frozen=True)
class ProximalStep:
    x: np.ndarray
    step: StepConstants
    descended: bool


def proximal_step(
    problem: PenaltyProblem,
    anchor: np.ndarray,
    cfg: PenaltyConfig,
    start: Optional[np.ndarray] = None,
) -> ProximalStep:
    """One outer step: approximately minimise f_t around ``anchor``.

    The returned point never has a larger f_t than the anchor itself. Under the
    local rule lam doubles until the inner solve descends; when even the
    closed-form weight fails the anchor comes back with ``descended`` False.
    """
    bound = problem.bound_step
    if cfg.lambda_rule == LAMBDA_BOUND or cfg.lam is not None:
        step = bound
    else:
        step = local_step_constants(problem, anchor, cfg)
    while True:
        try:
            x = _descend(problem, anchor, cfg.inner_iters, step, start)
        except NumericalFailureError:
            if step == bound:
                raise
            x = None
        if x is not None:
            return ProximalStep(x=x, step=step, descended=True)
        if step == bound:
            return ProximalStep(x=anchor, step=step, descended=False)
        step = _widen(step, bound)


def solve_subproblem(
    anchor: ThresholdPair,
    problem: PenaltyProblem,
    cfg: PenaltyConfig,
    start: Optional[ThresholdPair] = None,
) -> ThresholdPair:
    """Approximately minimise f_t around ``anchor`` with ``cfg.inner_iters`` APG steps."""
    result = proximal_step(
        problem,
        project_to_box(anchor.as_array()),
        cfg,
        None if start is None else start.as_array(),
    )
    return ThresholdPair.from_array(result.x)


@dataclass(frozen=True)
class OptimizationResult:
    """``thresholds`` is the pair to deploy; ``smooth_thresholds`` the proximal-point output.

    ``feasible`` is judged on the hard-mode volume and energy of ``thresholds``.
    """

    thresholds: ThresholdPair
    history: Tuple[Tuple[float, float], ...]
    feasible: bool
    converged: bool
    escalations: int
    constants: DerivedConstants
    kappa_n: float
    rho_n: float
    smooth_thresholds: Optional[ThresholdPair] = None
    refined: bool = False
    last_lambda: float = math.nan


def _proximal_point(problem: PenaltyProblem, x0: np.ndarray, cfg: PenaltyConfig):
    x = x0
    best_x, best_step = x0, math.inf
    history = []
    converged = False
    lam = math.nan
    for _ in range(cfg.outer_iters):
        result = proximal_step(problem, x, cfg)
        lam = result.step.lam
        if not result.descended:
            logger.debug("outer loop stalled at (%.6f, %.6f)", x[0], x[1])
            break
        step = float(np.linalg.norm(result.x - x))
        history.append(result.x)
        if step < best_step:
            best_x, best_step = result.x, step
        x = result.x
        if lam * step <= cfg.stationarity_tol:
            converged = True
            break
    return best_x, history, converged, lam


def within_limit(value, limit: float, slack: float = LIMIT_SLACK):
    """value <= limit up to a relative slack; works elementwise on arrays."""
    return value <= limit * (1.0 + slack)


@dataclass(frozen=True)
class HardOutcome:
    """Hard-mode accuracy, miss rate and per-interval volume and energy of one pair."""

    f_acc: float
    p_miss: float
    v_bits: float
    energy_j: float

    def feasible(self, constraints: Constraints, tol: float = LIMIT_SLACK) -> bool:
        return bool(
            within_limit(self.v_bits, constraints.data_volume_limit, tol)
            and within_limit(self.energy_j, constraints.energy_limit, tol)
        )


def hard_outcome(
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    thr: ThresholdPair,
) -> HardOutcome:
    metrics = population_metrics(population, thr, None, model, channel)
    return HardOutcome(
        f_acc=metrics.f_acc,
        p_miss=metrics.p_miss,
        v_bits=data_volume(model, constraints, metrics.p_off),
        energy_j=interval_energy(constraints, metrics.e_total_mean),
    )


def _candidates(values: np.ndarray, low: float, high: float, max_points: int) -> np.ndarray:
    """``low`` followed by the distinct values in (low, high], thinned evenly to max_points in total."""
    inside = np.unique(values[(values > low) & (values <= high)])
    if inside.size >= max_points:
        keep = np.unique(np.linspace(0, inside.size - 1, max_points - 1).round().astype(int))
        inside = inside[keep]
    return np.concatenate(([low], inside))


def _count_above(values: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    return values.size - np.searchsorted(np.sort(values), cuts, side="right")


def refine_thresholds(
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    near: ThresholdPair,
    max_points: int = 1024,
) -> Optional[ThresholdPair]:
    """Best hard-mode pair: highest f_acc, then lowest p_miss, then closest to ``near``.

    The hard rule sees beta_low only through the set {C < beta_low}, so the
    smallest beta_low of every such class is tried. For a fixed beta_low an
    event ends tail iff the largest confidence it shows before its first score
    below beta_low exceeds beta_up. Between two consecutive such peaks the tail
    set is fixed and energy only rises with beta_up, so the left end of each
    interval is tried. Every candidate beta_up is scored at once with sorted
    counts. Returns None when no pair in the box meets both budgets.
    """
    scores = population.score_matrix
    m, n = scores.shape
    profile = model.local_energy_profile()
    e_off = offload_energy(model, channel)
    tail_mask, server_mask = population.tail_mask, population.server_mask
    running = np.maximum.accumulate(scores, axis=1)
    blocks = np.arange(n)
    ceiling = 1.0 - BOX_EPSILON
    target = near.as_array()

    lows = _candidates(np.nextafter(scores.ravel(), np.inf), BOX_EPSILON, ceiling - MIN_GAP, max_points)
    best_key: Optional[Tuple[int, int, float]] = None
    best: Optional[Tuple[float, float]] = None
    for low in lows:
        below = scores < low
        first_low = np.where(below.any(axis=1), np.argmax(below, axis=1), n)
        last_seen = np.minimum(blocks[None, :], first_low[:, None] - 1)
        # largest confidence up to each block, blind past the first score below beta_low
        reach = np.where(
            last_seen >= 0,
            np.take_along_axis(running, np.maximum(last_seen, 0), axis=1),
            0.0,
        )
        peak = reach[:, -1]
        ups = _candidates(peak, low + MIN_GAP, ceiling, max_points)

        tail_by_block = np.stack([_count_above(reach[:, j], ups) for j in range(n)])
        detected = tail_by_block[-1]
        tail_local = profile @ np.diff(tail_by_block, axis=0, prepend=0)
        order = np.argsort(peak, kind="stable")
        head_energy = profile[np.minimum(first_low, n - 1)][order]
        head_local = np.concatenate(([0.0], np.cumsum(head_energy)))[
            np.searchsorted(peak[order], ups, side="right")
        ]
        volume = data_volume(model, constraints, detected / m)
        energy = interval_energy(constraints, (tail_local + head_local + e_off * detected) / m)
        ok = np.flatnonzero(
            within_limit(volume, constraints.data_volume_limit)
            & within_limit(energy, constraints.energy_limit)
        )
        if ok.size == 0:
            continue
        accurate = _count_above(peak[server_mask], ups[ok])
        caught = _count_above(peak[tail_mask], ups[ok])
        distance = np.hypot(low - target[0], ups[ok] - target[1])
        pick = np.lexsort((distance, -caught, -accurate))[0]
        key = (int(accurate[pick]), int(caught[pick]), -float(distance[pick]))
        if best_key is None or key > best_key:
            best_key, best = key, (float(low), float(ups[ok][pick]))

    if best is None:
        return None
    return ThresholdPair(*best)


def optimize_thresholds(
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    cfg: PenaltyConfig,
    init: Optional[ThresholdPair] = None,
) -> OptimizationResult:
    """Proximal-point penalty method with warm-started penalty escalation.

    The smooth stage returns the outer iterate with the smallest successive
    step (earliest on ties) of the last escalation round. With ``cfg.refine``
    the hard-mode frontier search then starts from it, and the better of the
    two pairs in hard mode is kept.
    """
    floor = feasibility_snr_floor(model, constraints, channel.bandwidth)
    if channel.snr < floor:
        raise InfeasibleChannelError(
            f"snr {channel.snr:.6g} is below the feasibility floor {floor:.6g}"
        )
    x = project_to_box((init or INITIAL_THRESHOLDS).as_array())
    history: List[Tuple[float, float]] = [(float(x[0]), float(x[1]))]

    problem = build_problem(population, model, channel, constraints, cfg)
    kappa_n, rho_n = problem.kappa_n, problem.rho_n
    escalations = 0
    while True:
        x, outer, converged, last_lambda = _proximal_point(problem, x, cfg)
        history.extend((float(p[0]), float(p[1])) for p in outer)
        volume_excess, energy_excess = problem.excess(x)
        if max(volume_excess, energy_excess) <= cfg.convergence_tol or escalations >= cfg.max_penalty_doublings:
            break
        escalations += 1
        if volume_excess > cfg.convergence_tol:
            kappa_n *= 2.0
        if energy_excess > cfg.convergence_tol:
            rho_n *= 2.0
        logger.warning(
            "constraints violated (volume %+.4f, energy %+.4f); doubling penalty, round %d",
            volume_excess, energy_excess, escalations,
        )
        problem = build_problem(population, model, channel, constraints, cfg, kappa_n, rho_n)

    smooth = ThresholdPair.from_array(x)
    thresholds, outcome = smooth, hard_outcome(population, model, channel, constraints, smooth)
    refined = False
    if cfg.refine:
        found = refine_thresholds(population, model, channel, constraints, smooth, cfg.refine_points)
        if found is not None:
            candidate = hard_outcome(population, model, channel, constraints, found)
            if (candidate.feasible(constraints), candidate.f_acc, -candidate.p_miss) >= (
                outcome.feasible(constraints), outcome.f_acc, -outcome.p_miss
            ):
                thresholds, outcome, refined = found, candidate, True
    feasible = outcome.feasible(constraints, cfg.convergence_tol)

    logger.debug(
        "optimised thresholds (%.6f, %.6f) after %d outer steps, refined=%s, feasible=%s",
        thresholds.beta_low, thresholds.beta_up, len(history) - 1, refined, feasible,
    )
    return OptimizationResult(
        thresholds=thresholds,
        history=tuple(history),
        feasible=feasible,
        converged=converged,
        escalations=escalations,
        constants=problem.constants,
        kappa_n=kappa_n,
        rho_n=rho_n,
        smooth_thresholds=smooth,
        refined=refined,
        last_lambda=last_lambda,
    )


@dataclass(frozen=True)
class TableEntry:
    """One SNR bin; ``thresholds`` is None unless the bin is usable."""

    snr_db: float
    status: str
    thresholds: Optional[ThresholdPair] = None
    f_acc: float = math.nan
    v_bits: float = math.nan
    energy_j: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


TABLE_COLUMNS = ["snr_db", "beta_low", "beta_up", "f_acc", "v_bits", "energy_j", "status"]


@dataclass(frozen=True)
class LookupTable:
    """Per-SNR-bin thresholds; ``rows`` keeps failed bins for the record."""

    floor_snr: float
    rows: Tuple[TableEntry, ...]

    def __post_init__(self) -> None:
        edges = [row.snr_db for row in self.rows]
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidArgumentError("lookup table bin edges must be strictly increasing")

    @property
    def entries(self) -> Tuple[TableEntry, ...]:
        return tuple(row for row in self.rows if row.ok)

    def lookup(self, snr: float) -> Tuple[Optional[TableEntry], bool]:
        """Entry for a linear SNR and whether a fallback was needed.

        Uses the greatest bin edge <= snr; when that bin failed, falls back to
        the nearest lower usable bin. Below the floor returns (None, False).
        """
        if snr < self.floor_snr:
            return None, False
        snr_db = linear_to_db(snr)
        candidates = [row for row in self.rows if row.snr_db <= snr_db]
        if candidates and candidates[-1].ok:
            return candidates[-1], False
        usable = [row for row in candidates if row.ok]
        return (usable[-1] if usable else None), True

    def to_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(TABLE_COLUMNS)
            writer.writerow([repr(linear_to_db(self.floor_snr)), "", "", "", "", "", STATUS_FLOOR_ROW])
            for row in self.rows:
                if row.thresholds is None:
                    writer.writerow([repr(row.snr_db), "", "", "", "", "", row.status])
                    continue
                writer.writerow([
                    repr(row.snr_db),
                    repr(row.thresholds.beta_low),
                    repr(row.thresholds.beta_up),
                    repr(row.f_acc),
                    repr(row.v_bits),
                    repr(row.energy_j),
                    row.status,
                ])

    @classmethod
    def from_csv(cls, path: PathLike) -> "LookupTable":
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != TABLE_COLUMNS:
                raise InvalidArgumentError(
                    f"{path}: expected columns {','.join(TABLE_COLUMNS)}"
                )
            floor_snr = math.inf
            rows = []
            for record in reader:
                if record["status"] == STATUS_FLOOR_ROW:
                    floor_snr = db_to_linear(float(record["snr_db"]))
                elif record["beta_low"]:
                    rows.append(TableEntry(
                        snr_db=float(record["snr_db"]),
                        status=record["status"],
                        thresholds=ThresholdPair(float(record["beta_low"]), float(record["beta_up"])),
                        f_acc=float(record["f_acc"]),
                        v_bits=float(record["v_bits"]),
                        energy_j=float(record["energy_j"]),
                    ))
                else:
                    rows.append(TableEntry(snr_db=float(record["snr_db"]), status=record["status"]))
        return cls(floor_snr=floor_snr, rows=tuple(rows))


def snr_grid(low_db: float, high_db: float, bins: int) -> List[float]:
    """Evenly spaced bin edges in dB."""
    if bins == 1:
        return [float(low_db)]
    return [float(v) for v in np.linspace(low_db, high_db, bins)]


def _table_entry(
    snr_db: float,
    population: TracePopulation,
    model: EnergyModel,
    channel: ChannelState,
    constraints: Constraints,
    result: OptimizationResult,
    tol: float,
) -> TableEntry:
    """Usable only when the stored hard-mode volume and energy meet the budgets within ``tol``."""
    outcome = hard_outcome(population, model, channel, constraints, result.thresholds)
    return TableEntry(
        snr_db=snr_db,
        status=STATUS_OK if outcome.feasible(constraints, tol) else STATUS_VIOLATION,
        thresholds=result.thresholds,
        f_acc=outcome.f_acc,
        v_bits=outcome.v_bits,
        energy_j=outcome.energy_j,
    )


def _solve_bin(task) -> Tuple[TableEntry, Optional[str]]:
    snr_db, population, model, bandwidth, constraints, cfg, init = task
    channel = ChannelState(snr=db_to_linear(snr_db), bandwidth=bandwidth)
    try:
        result = optimize_thresholds(population, model, channel, constraints, cfg, init)
    except DualExitError as exc:
        return TableEntry(snr_db=snr_db, status=type(exc).__name__), str(exc)
    return _table_entry(snr_db, population, model, channel, constraints, result, cfg.convergence_tol), None


def build_lookup_table(
    population: TracePopulation,
    model: EnergyModel,
    snr_grid_db: Sequence[float],
    constraints: Constraints,
    cfg: PenaltyConfig,
    bandwidth: float,
    warm_start: bool = True,
    workers: int = 1,
    init: Optional[ThresholdPair] = None,
) -> LookupTable:
    """Optimise thresholds for every SNR bin at or above the feasibility floor.

    Warm-started tables run bins in ascending order, seeding each bin with the
    previous usable solution. Cold-started tables solve every bin from
    ``init`` and may run bins in parallel.
    """
    grid = [float(v) for v in snr_grid_db]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("snr grid must be nonempty and strictly increasing")
    try:
        floor = feasibility_snr_floor(model, constraints, bandwidth)
    except InfeasibleBudgetError as exc:
        logger.warning("no bin can offload: %s", exc)
        rows = tuple(TableEntry(snr_db=v, status=type(exc).__name__) for v in grid)
        return LookupTable(floor_snr=math.inf, rows=rows)

    start = init or INITIAL_THRESHOLDS
    feasible_bins = [v for v in grid if db_to_linear(v) >= floor]
    solved = {}
    if warm_start:
        for snr_db in feasible_bins:
            entry, error = _solve_bin((snr_db, population, model, bandwidth, constraints, cfg, start))
            solved[snr_db] = (entry, error)
            if entry.thresholds is not None:
                start = entry.thresholds
    else:
        tasks = [(v, population, model, bandwidth, constraints, cfg, start) for v in feasible_bins]
        solved = dict(zip(feasible_bins, ordered_map(_solve_bin, tasks, workers)))

    rows = []
    for snr_db in grid:
        if snr_db not in solved:
            rows.append(TableEntry(snr_db=snr_db, status=STATUS_BELOW_FLOOR))
            continue
        entry, error = solved[snr_db]
        if error is not None:
            logger.warning("bin %.2f dB failed: %s", snr_db, error)
        rows.append(entry)
        record = {"snr_db": snr_db, "status": entry.status}
        if entry.thresholds is not None:
            record.update(
                beta_low=entry.thresholds.beta_low,
                beta_up=entry.thresholds.beta_up,
                f_acc=entry.f_acc,
                v_bits=entry.v_bits,
                energy_j=entry.energy_j,
            )
        logger.info(json.dumps(record))
    return LookupTable(floor_snr=floor, rows=tuple(rows))
