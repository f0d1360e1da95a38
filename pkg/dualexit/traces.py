# MIT License
# Copyright (c) 2026 ambicuity
"""
Confidence traces: per-event tail-confidence scores at every exit block.

This module:
1. Defines the immutable trace and population types
2. Loads and saves populations as CSV (``label,server_correct,c1,...,cN``)
3. Generates synthetic long-tailed populations so the whole stack runs
   without any neural network
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from dualexit.errors import (
    EmptyTraceFileError,
    InconsistentBlocksError,
    InvalidArgumentError,
    MalformedRowError,
)

logger = logging.getLogger(__name__)

SCORE_FLOOR = 1e-9
SCORE_CEIL = 1.0 - 1e-9

PathLike = Union[str, Path]


class Label(str, Enum):
    """Binary event class."""

    HEAD = "head"
    TAIL = "tail"


def clamp_score(score: float) -> float:
    """Clamp a score into [1e-9, 1 - 1e-9] so logistic arguments stay finite."""
    return min(max(float(score), SCORE_FLOOR), SCORE_CEIL)


def softmax_confidence(f_tail: float, f_head: float) -> float:
    """Tail-class confidence of a two-neuron exit: e^f_tail / (e^f_tail + e^f_head)."""
    if not (math.isfinite(f_tail) and math.isfinite(f_head)):
        raise InvalidArgumentError(
            f"exit logits must be finite, got ({f_tail}, {f_head})"
        )
    # scipy subtracts the max before exponentiating
    return float(softmax(np.array([f_tail, f_head], dtype=np.float64))[0])


@dataclass(frozen=True)
class ConfidenceTrace:
    """One event: scores at exit blocks 1..N, ground truth and server outcome."""

    scores: Tuple[float, ...]
    true_label: Label
    server_correct: bool = False

    def __post_init__(self) -> None:
        if not self.scores:
            raise InvalidArgumentError("a trace needs at least one exit-block score")
        for block, score in enumerate(self.scores, start=1):
            if not (math.isfinite(score) and 0.0 < score < 1.0):
                raise InvalidArgumentError(
                    f"score at block {block} must lie strictly in (0, 1), got {score}"
                )
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        object.__setattr__(self, "true_label", Label(self.true_label))
        object.__setattr__(self, "server_correct", bool(self.server_correct))

    @property
    def n_blocks(self) -> int:
        return len(self.scores)

    @property
    def is_tail(self) -> bool:
        return self.true_label is Label.TAIL


@dataclass(frozen=True)
class TracePopulation:
    """An immutable population of M traces sharing N exit blocks."""

    traces: Tuple[ConfidenceTrace, ...]
    n_blocks: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise InvalidArgumentError("a population needs at least one event")
        if self.n_blocks < 1:
            raise InvalidArgumentError(f"n_blocks must be positive, got {self.n_blocks}")
        for index, trace in enumerate(self.traces):
            if trace.n_blocks != self.n_blocks:
                raise InvalidArgumentError(
                    f"event {index} has {trace.n_blocks} scores, expected {self.n_blocks}"
                )

    @classmethod
    def from_arrays(
        cls,
        scores: np.ndarray,
        is_tail: Sequence[bool],
        server_correct: Sequence[bool],
    ) -> "TracePopulation":
        matrix = np.atleast_2d(np.asarray(scores, dtype=np.float64))
        traces = tuple(
            ConfidenceTrace(
                scores=tuple(row.tolist()),
                true_label=Label.TAIL if tail else Label.HEAD,
                server_correct=bool(correct),
            )
            for row, tail, correct in zip(matrix, is_tail, server_correct)
        )
        return cls(traces=traces, n_blocks=matrix.shape[1])

    @property
    def n_events(self) -> int:
        return len(self.traces)

    @cached_property
    def score_matrix(self) -> np.ndarray:
        """Read-only (M, N) score matrix."""
        matrix = np.array([t.scores for t in self.traces], dtype=np.float64)
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def tail_mask(self) -> np.ndarray:
        mask = np.array([t.is_tail for t in self.traces], dtype=bool)
        mask.setflags(write=False)
        return mask

    @cached_property
    def server_mask(self) -> np.ndarray:
        """Tail events the server would classify correctly; head flags are ignored."""
        mask = np.array([t.is_tail and t.server_correct for t in self.traces], dtype=bool)
        mask.setflags(write=False)
        return mask

    @property
    def n_tail(self) -> int:
        return int(self.tail_mask.sum())

    @property
    def n_head(self) -> int:
        return self.n_events - self.n_tail

    @property
    def p_tail(self) -> float:
        return self.n_tail / self.n_events

    @property
    def p_head(self) -> float:
        return self.n_head / self.n_events

    def subset(self, indices: Sequence[int]) -> "TracePopulation":
        return TracePopulation(
            traces=tuple(self.traces[i] for i in indices), n_blocks=self.n_blocks
        )


@dataclass(frozen=True)
class ScoreProfile:
    """Per-block latent-logit location and spread, interpolated linearly in depth."""

    first_logit: float
    last_logit: float
    first_spread: float = 1.0
    last_spread: float = 1.0

    def __post_init__(self) -> None:
        if self.first_spread <= 0 or self.last_spread <= 0:
            raise InvalidArgumentError("score spreads must be positive")

    def means(self, n_blocks: int) -> np.ndarray:
        return np.linspace(self.first_logit, self.last_logit, n_blocks)

    def spreads(self, n_blocks: int) -> np.ndarray:
        return np.linspace(self.first_spread, self.last_spread, n_blocks)


HEAD_PROFILE = ScoreProfile(first_logit=-0.5, last_logit=-3.0, first_spread=1.2, last_spread=1.0)
TAIL_PROFILE = ScoreProfile(first_logit=0.5, last_logit=3.0, first_spread=1.2, last_spread=1.0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic population (head:tail = R:1)."""

    n_events: int
    n_blocks: int
    imbalance_ratio: float = 4.0
    head_params: ScoreProfile = field(default=HEAD_PROFILE)
    tail_params: ScoreProfile = field(default=TAIL_PROFILE)
    server_accuracy: float = 0.9
    seed: int = 0
    # share of latent variance common to all blocks of one event (event difficulty)
    correlation: float = 0.5
    # tail latent means move towards the head means by a factor R ** -imbalance_penalty
    imbalance_penalty: float = 0.0

    def __post_init__(self) -> None:
        if self.n_events < 1:
            raise InvalidArgumentError(f"n_events must be >= 1, got {self.n_events}")
        if self.n_blocks < 1:
            raise InvalidArgumentError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if not self.imbalance_ratio >= 1.0:
            raise InvalidArgumentError(
                f"imbalance_ratio must be >= 1, got {self.imbalance_ratio}"
            )
        if not 0.0 <= self.server_accuracy <= 1.0:
            raise InvalidArgumentError("server_accuracy must lie in [0, 1]")
        if not 0.0 <= self.correlation < 1.0:
            raise InvalidArgumentError("correlation must lie in [0, 1)")
        if self.imbalance_penalty < 0:
            raise InvalidArgumentError("imbalance_penalty must be non-negative")


def head_count(n_events: int, imbalance_ratio: float) -> int:
    """Number of head events: M*R/(R+1) rounded half up."""
    return int(math.floor(n_events * imbalance_ratio / (imbalance_ratio + 1.0) + 0.5))


def generate_population(spec: SyntheticSpec) -> TracePopulation:
    """Deterministically generate a long-tailed population from ``spec``."""
    m, n = spec.n_events, spec.n_blocks
    rng = np.random.default_rng(spec.seed)

    n_head = head_count(m, spec.imbalance_ratio)
    is_tail = rng.permutation(np.arange(m) >= n_head)

    shared = rng.standard_normal((m, 1))
    own = rng.standard_normal((m, n))
    noise = math.sqrt(spec.correlation) * shared + math.sqrt(1.0 - spec.correlation) * own

    separation = spec.imbalance_ratio ** -spec.imbalance_penalty
    head_means = spec.head_params.means(n)
    tail_means = head_means + separation * (spec.tail_params.means(n) - head_means)
    means = np.where(is_tail[:, None], tail_means[None, :], head_means[None, :])
    spreads = np.where(
        is_tail[:, None],
        spec.tail_params.spreads(n)[None, :],
        spec.head_params.spreads(n)[None, :],
    )
    scores = np.clip(expit(means + spreads * noise), SCORE_FLOOR, SCORE_CEIL)
    server_correct = is_tail & (rng.random(m) < spec.server_accuracy)

    logger.debug(
        "generated population: M=%d N=%d head=%d tail=%d seed=%d",
        m, n, n_head, m - n_head, spec.seed,
    )
    return TracePopulation.from_arrays(scores, is_tail, server_correct)


def save_population(population: TracePopulation, path: PathLike) -> None:
    """Write ``population`` as CSV; scores use the shortest exact float repr."""
    header = ["label", "server_correct"] + [
        f"c{block}" for block in range(1, population.n_blocks + 1)
    ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for trace in population.traces:
            writer.writerow(
                [trace.true_label.value, int(trace.server_correct)]
                + [repr(score) for score in trace.scores]
            )


def _parse_row(row: List[str], n_blocks: int, path: str, line: int) -> ConfidenceTrace:
    if len(row) < 3:
        raise MalformedRowError(f"expected label, server_correct and scores, got {row!r}", path, line)
    if len(row) != n_blocks + 2:
        raise InconsistentBlocksError(
            f"expected {n_blocks} scores, found {len(row) - 2}", path, line
        )
    label_text, correct_text = row[0].strip(), row[1].strip()
    try:
        label = Label(label_text)
    except ValueError:
        raise MalformedRowError(f"unknown label {label_text!r}", path, line) from None
    if correct_text not in ("0", "1"):
        raise MalformedRowError(f"server_correct must be 0 or 1, got {correct_text!r}", path, line)

    scores = []
    for column, cell in enumerate(row[2:], start=1):
        try:
            score = float(cell)
        except ValueError:
            raise MalformedRowError(f"c{column} is not a number: {cell!r}", path, line) from None
        if not (math.isfinite(score) and 0.0 < score < 1.0):
            raise MalformedRowError(f"c{column}={cell} lies outside (0, 1)", path, line)
        scores.append(clamp_score(score))
    return ConfidenceTrace(tuple(scores), label, correct_text == "1")


def load_population(path: PathLike) -> TracePopulation:
    """Parse and validate a trace CSV; every parse error names its line."""
    source = str(path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or not any(cell.strip() for cell in header):
            raise EmptyTraceFileError("file is empty", source, 1)

        header = [cell.strip() for cell in header]
        expected = ["label", "server_correct"] + [f"c{i}" for i in range(1, len(header) - 1)]
        if len(header) < 3 or header != expected:
            raise MalformedRowError(
                f"header must be label,server_correct,c1,...,cN; got {','.join(header)}",
                source,
                1,
            )
        n_blocks = len(header) - 2

        traces = []
        for line, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            traces.append(_parse_row(row, n_blocks, source, line))

    if not traces:
        raise EmptyTraceFileError("no event rows after the header", source, 2)
    logger.debug("loaded %d traces with N=%d from %s", len(traces), n_blocks, source)
    return TracePopulation(traces=tuple(traces), n_blocks=n_blocks)


def split_population(
    population: TracePopulation, n_groups: int, seed: int = 0
) -> List[TracePopulation]:
    """Split into ``n_groups`` groups that keep the head:tail ratio.

    Heads and tails are shuffled separately, laid end to end and dealt
    round-robin, so group sizes differ by at most one and class counts by at
    most one. Events keep their original (FIFO) order inside each group.
    """
    if not 1 <= n_groups <= population.n_events:
        raise InvalidArgumentError(
            f"n_groups must lie in [1, {population.n_events}], got {n_groups}"
        )
    rng = np.random.default_rng(seed)
    heads = rng.permutation(np.flatnonzero(~population.tail_mask))
    tails = rng.permutation(np.flatnonzero(population.tail_mask))
    order = np.concatenate([heads, tails])
    return [
        population.subset(sorted(order[g::n_groups].tolist())) for g in range(n_groups)
    ]
