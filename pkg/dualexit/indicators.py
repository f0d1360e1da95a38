# MIT License
# Copyright (c) 2026 ambicuity
"""
Vectorised exit-indicator kernel.

Every population metric is a reduction over a pair of (M, N) matrices: the
mass with which event m exits as tail at block n and the mass with which it
exits as head. In hard mode the masses are one-hot rows produced by the
sequential scan; in smooth mode they are products of logistic factors and the
kernel also returns their derivatives with respect to (beta_low, beta_up).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class ExitMasses:
    """Per-event, per-block exit masses and (smooth mode only) their gradients."""

    tail: np.ndarray
    head: np.ndarray
    d_tail_low: Optional[np.ndarray] = None
    d_tail_up: Optional[np.ndarray] = None
    d_head_low: Optional[np.ndarray] = None
    d_head_up: Optional[np.ndarray] = None

    @property
    def has_gradient(self) -> bool:
        return self.d_tail_low is not None


@dataclass(frozen=True)
class MetricValues:
    """Raw reductions; tail-class metrics are None when the population has no tail events."""

    f_acc: Optional[float]
    p_miss: Optional[float]
    p_false: float
    p_off: float
    e_loc: float
    e_off: float
    head_exit_mean: float
    tail_exit_mean: float
    grad_f_acc: Optional[np.ndarray] = None
    grad_p_off: Optional[np.ndarray] = None
    grad_e_loc: Optional[np.ndarray] = None
    grad_e_off: Optional[np.ndarray] = None


def hard_exit_masses(scores: np.ndarray, beta_low: float, beta_up: float) -> ExitMasses:
    """One-hot exit rows from the sequential dual-threshold scan."""
    m, n = scores.shape
    decided = (scores < beta_low) | (scores > beta_up)
    decided[:, n - 1] = True
    exit_idx = np.argmax(decided, axis=1)
    rows = np.arange(m)
    # strict inequality: C_N == beta_up is head
    is_tail = scores[rows, exit_idx] > beta_up

    tail = np.zeros((m, n))
    head = np.zeros((m, n))
    tail[rows, exit_idx] = is_tail
    head[rows, exit_idx] = ~is_tail
    return ExitMasses(tail=tail, head=head)


def smooth_exit_masses(
    scores: np.ndarray,
    beta_low: float,
    beta_up: float,
    alpha: float,
    with_grad: bool = False,
) -> ExitMasses:
    """Logistic-product exit masses.

    tail_n = s(C_n - up) * P_n, head_n = s(lo - C_n) * P_n for n < N and
    head_N = s(up - C_N) * P_N, where P_n is the product over k < n of
    s(up - C_k) * s(C_k - lo) and s(y) = 1 / (1 + exp(-alpha * y)).
    """
    below_up = expit(alpha * (beta_up - scores))
    above_low = expit(alpha * (scores - beta_low))
    above_up = expit(alpha * (scores - beta_up))
    below_low = expit(alpha * (beta_low - scores))

    m, n = scores.shape
    cont = below_up * above_low
    reach = np.ones((m, n))
    if n > 1:
        reach[:, 1:] = np.cumprod(cont[:, :-1], axis=1)

    tail = above_up * reach
    head = below_low * reach
    head[:, n - 1] = below_up[:, n - 1] * reach[:, n - 1]
    if not with_grad:
        return ExitMasses(tail=tail, head=head)

    # d log P_n / d up and d log P_n / d lo
    log_reach_up = np.zeros((m, n))
    log_reach_low = np.zeros((m, n))
    if n > 1:
        log_reach_up[:, 1:] = alpha * np.cumsum(above_up[:, :-1], axis=1)
        log_reach_low[:, 1:] = -alpha * np.cumsum(below_low[:, :-1], axis=1)

    # s'(y) = alpha * s(y) * s(-y), written with the complementary factor
    slope_up = alpha * above_up * below_up
    slope_low = alpha * below_low * above_low

    d_tail_up = -slope_up * reach + tail * log_reach_up
    d_tail_low = tail * log_reach_low
    d_head_up = head * log_reach_up
    d_head_low = slope_low * reach + head * log_reach_low
    d_head_up[:, n - 1] += slope_up[:, n - 1] * reach[:, n - 1]
    d_head_low[:, n - 1] -= slope_low[:, n - 1] * reach[:, n - 1]

    return ExitMasses(
        tail=tail,
        head=head,
        d_tail_low=d_tail_low,
        d_tail_up=d_tail_up,
        d_head_low=d_head_low,
        d_head_up=d_head_up,
    )


def exit_masses(
    scores: np.ndarray,
    beta_low: float,
    beta_up: float,
    alpha: Optional[float] = None,
    with_grad: bool = False,
) -> ExitMasses:
    if alpha is None:
        return hard_exit_masses(scores, beta_low, beta_up)
    return smooth_exit_masses(scores, beta_low, beta_up, alpha, with_grad=with_grad)


def _pair(d_low: np.ndarray, d_up: np.ndarray) -> np.ndarray:
    return np.array([float(np.sum(d_low)), float(np.sum(d_up))])


def reduce_metrics(
    masses: ExitMasses,
    tail_mask: np.ndarray,
    server_mask: np.ndarray,
    local_energy: Optional[np.ndarray] = None,
    offload_energy: float = 0.0,
) -> MetricValues:
    """Reduce exit masses to population metrics (and gradients when present).

    ``local_energy`` is the cumulative E_loc(n) profile; ``offload_energy`` the
    per-event E_off. np.sum uses pairwise summation, so results do not depend
    on event order beyond round-off.
    """
    m, n = masses.tail.shape
    n_tail = int(np.count_nonzero(tail_mask))
    n_head = m - n_tail
    head_mask = ~tail_mask
    energy = np.zeros(n) if local_energy is None else np.asarray(local_energy, dtype=np.float64)

    tail_mass = np.sum(masses.tail, axis=1)
    head_mass = np.sum(masses.head, axis=1)
    detected_tail = float(np.sum(tail_mass[tail_mask]))
    kept_head = float(np.sum(head_mass[head_mask]))

    f_acc = p_miss = None
    if n_tail:
        f_acc = float(np.sum(tail_mass[server_mask])) / n_tail
        p_miss = 1.0 - detected_tail / n_tail
    p_false = 1.0 - kept_head / n_head if n_head else 0.0
    p_off = (detected_tail + n_head - kept_head) / m

    e_loc = float(np.sum((masses.tail + masses.head) @ energy)) / m
    e_off = offload_energy * float(np.sum(tail_mass)) / m

    depth = np.arange(1, n + 1, dtype=np.float64)
    total_head, total_tail = float(np.sum(head_mass)), float(np.sum(tail_mass))
    head_exit_mean = float(np.sum(masses.head @ depth)) / total_head if total_head > 0 else 0.0
    tail_exit_mean = float(np.sum(masses.tail @ depth)) / total_tail if total_tail > 0 else 0.0

    grads = {}
    if masses.has_gradient:
        d_tail_low = np.sum(masses.d_tail_low, axis=1)
        d_tail_up = np.sum(masses.d_tail_up, axis=1)
        d_head_low = np.sum(masses.d_head_low, axis=1)
        d_head_up = np.sum(masses.d_head_up, axis=1)
        if n_tail:
            grads["grad_f_acc"] = _pair(d_tail_low[server_mask], d_tail_up[server_mask]) / n_tail
        grads["grad_p_off"] = (
            _pair(d_tail_low[tail_mask], d_tail_up[tail_mask])
            - _pair(d_head_low[head_mask], d_head_up[head_mask])
        ) / m
        grads["grad_e_loc"] = _pair(
            (masses.d_tail_low + masses.d_head_low) @ energy,
            (masses.d_tail_up + masses.d_head_up) @ energy,
        ) / m
        grads["grad_e_off"] = offload_energy * _pair(d_tail_low, d_tail_up) / m

    return MetricValues(
        f_acc=f_acc,
        p_miss=p_miss,
        p_false=p_false,
        p_off=p_off,
        e_loc=e_loc,
        e_off=e_off,
        head_exit_mean=head_exit_mean,
        tail_exit_mean=tail_exit_mean,
        **grads,
    )
