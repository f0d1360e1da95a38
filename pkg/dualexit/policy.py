# MIT License
# Copyright (c) 2026 ambicuity
"""
Threshold-based offloading policy and the coherence-interval simulator.

Each interval carries M events and one SNR. Above the feasibility floor the
policy looks up the thresholds for the SNR bin, caps the number of offloads
at what the residual energy budget can pay for, and processes events in FIFO
order against a hard energy ledger. Below the floor nothing is offloaded.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dualexit.detector import Decision, ThresholdPair, hard_classify
from dualexit.energy import (
    ChannelState,
    Constraints,
    EnergyModel,
    cumulative_local_energy,
    feasibility_snr_floor,
    linear_to_db,
    offload_energy,
    transmission_rate,
)
from dualexit.errors import InfeasibleBudgetError, InvalidArgumentError
from dualexit.optimizer import LookupTable
from dualexit.parallel import ordered_map
from dualexit.traces import ConfidenceTrace, Label, TracePopulation

logger = logging.getLogger(__name__)

MODE_TABLE = "table"
MODE_FALLBACK = "fallback"
MODE_LOCAL = "local"

PathLike = Union[str, Path]


@dataclass(frozen=True)
class CoherenceInterval:
    snr: float
    events: Tuple[ConfidenceTrace, ...]
    bandwidth: float

    @property
    def channel(self) -> ChannelState:
        return ChannelState(snr=self.snr, bandwidth=self.bandwidth)


@dataclass(frozen=True)
class OffloadCap:
    count: int
    budget_exhausted: bool = False


@dataclass(frozen=True)
class EventOutcome:
    """``decision`` is None when the ledger could not pay for local processing."""

    true_label: Label
    server_correct: bool
    decision: Optional[Decision]
    offloaded: bool
    energy: float


@dataclass(frozen=True)
class PolicyDecision:
    snr: float
    mode: str
    thresholds: Optional[ThresholdPair]
    m_off_cap: int
    outcomes: Tuple[EventOutcome, ...]
    offload_energy: float
    payload_bits: float
    fallback: bool = False
    budget_exhausted: bool = False

    @property
    def n_events(self) -> int:
        return len(self.outcomes)

    @property
    def n_tail(self) -> int:
        return sum(1 for o in self.outcomes if o.true_label is Label.TAIL)

    @property
    def n_offloaded(self) -> int:
        return sum(1 for o in self.outcomes if o.offloaded)

    @property
    def n_tail_detected(self) -> int:
        return sum(
            1 for o in self.outcomes
            if o.true_label is Label.TAIL and o.decision is not None and o.decision.label is Label.TAIL
        )

    @property
    def n_false_alarms(self) -> int:
        return sum(
            1 for o in self.outcomes
            if o.true_label is Label.HEAD and o.decision is not None and o.decision.label is Label.TAIL
        )

    @property
    def n_server_correct(self) -> int:
        return sum(
            1 for o in self.outcomes
            if o.offloaded and o.true_label is Label.TAIL and o.server_correct
        )

    @property
    def energy(self) -> float:
        return math.fsum(o.energy for o in self.outcomes)

    @property
    def bits_sent(self) -> float:
        return self.n_offloaded * self.payload_bits


def offload_cap(
    model: EnergyModel,
    constraints: Constraints,
    channel: ChannelState,
    e_loc_star: float,
) -> OffloadCap:
    """Largest number of offloads the interval budget can pay for.

    ``e_loc_star`` is the per-event local energy at the chosen thresholds.
    Zero below the feasibility floor.
    """
    try:
        floor = feasibility_snr_floor(model, constraints, channel.bandwidth)
    except InfeasibleBudgetError:
        return OffloadCap(0, budget_exhausted=True)
    if channel.snr < floor or channel.snr == 0:
        return OffloadCap(0)
    budget = constraints.energy_limit - constraints.n_events * e_loc_star
    if budget < 0:
        return OffloadCap(0, budget_exhausted=True)
    count = math.floor(transmission_rate(channel) * budget / (model.tx_power * model.payload_bits))
    return OffloadCap(int(count))


def _local_only(interval: CoherenceInterval, model: EnergyModel, constraints: Constraints) -> PolicyDecision:
    first_block = cumulative_local_energy(model, 1)
    ledger = 0.0
    outcomes = []
    exhausted = False
    for event in interval.events:
        if ledger + first_block <= constraints.energy_limit:
            ledger += first_block
            outcomes.append(EventOutcome(event.true_label, event.server_correct,
                                         Decision(Label.HEAD, 1), False, first_block))
        else:
            exhausted = True
            outcomes.append(EventOutcome(event.true_label, event.server_correct, None, False, 0.0))
    return PolicyDecision(
        snr=interval.snr,
        mode=MODE_LOCAL,
        thresholds=None,
        m_off_cap=0,
        outcomes=tuple(outcomes),
        offload_energy=0.0,
        payload_bits=model.payload_bits,
        budget_exhausted=exhausted,
    )


def run_interval(
    interval: CoherenceInterval,
    table: LookupTable,
    model: EnergyModel,
    constraints: Constraints,
) -> PolicyDecision:
    """Replay one coherence interval through the policy."""
    if len(interval.events) != constraints.n_events:
        raise InvalidArgumentError(
            f"interval carries {len(interval.events)} events, constraints expect {constraints.n_events}"
        )
    entry, fallback = table.lookup(interval.snr)
    if fallback:
        logger.warning(
            "no usable bin at %.2f dB; %s",
            linear_to_db(interval.snr),
            "using nearest lower bin" if entry is not None else "processing locally",
        )
    if entry is None:
        return replace(_local_only(interval, model, constraints), fallback=fallback)

    thr = entry.thresholds
    channel = interval.channel
    e_off = offload_energy(model, channel)
    e_loc_star = _hard_local_energy(interval.events, thr, model)
    cap = offload_cap(model, constraints, channel, e_loc_star)

    ledger = 0.0
    offloads = 0
    outcomes = []
    for event in interval.events:
        decision = hard_classify(event, thr)
        e_local = cumulative_local_energy(model, decision.exit_block)
        if ledger + e_local > constraints.energy_limit:
            outcomes.append(EventOutcome(event.true_label, event.server_correct, None, False, 0.0))
            continue
        ledger += e_local
        offloaded = (
            decision.label is Label.TAIL
            and offloads < cap.count
            and ledger + e_off <= constraints.energy_limit
        )
        if offloaded:
            ledger += e_off
            offloads += 1
        outcomes.append(EventOutcome(
            event.true_label,
            event.server_correct,
            decision,
            offloaded,
            e_local + (e_off if offloaded else 0.0),
        ))

    return PolicyDecision(
        snr=interval.snr,
        mode=MODE_FALLBACK if fallback else MODE_TABLE,
        thresholds=thr,
        m_off_cap=cap.count,
        outcomes=tuple(outcomes),
        offload_energy=e_off,
        payload_bits=model.payload_bits,
        fallback=fallback,
        budget_exhausted=cap.budget_exhausted,
    )


def _hard_local_energy(events: Sequence[ConfidenceTrace], thr: ThresholdPair, model: EnergyModel) -> float:
    profile = model.local_energy_profile()
    exits = [hard_classify(trace, thr).exit_block for trace in events]
    return math.fsum(profile[n - 1] for n in exits) / len(exits)


def fading_snr_sequence(mean_snr: float, n_intervals: int, seed: int = 0) -> List[float]:
    """Rayleigh block fading: snr = mean_snr * |h|^2 with |h|^2 ~ Exp(1)."""
    if mean_snr < 0 or n_intervals < 0:
        raise InvalidArgumentError("mean_snr and n_intervals must be non-negative")
    rng = np.random.default_rng(seed)
    return [float(v) for v in mean_snr * rng.exponential(1.0, size=n_intervals)]


def draw_intervals(
    population: TracePopulation,
    snr_sequence: Sequence[float],
    n_events: int,
    bandwidth: float,
    seed: int = 0,
) -> List[CoherenceInterval]:
    """Sample M events per interval (with replacement only when M exceeds the population)."""
    rng = np.random.default_rng(seed)
    with_replacement = n_events > population.n_events
    intervals = []
    for snr in snr_sequence:
        picks = rng.choice(population.n_events, size=n_events, replace=with_replacement)
        intervals.append(CoherenceInterval(
            snr=float(snr),
            events=tuple(population.traces[i] for i in picks),
            bandwidth=bandwidth,
        ))
    return intervals


@dataclass(frozen=True)
class IntervalMetrics:
    index: int
    snr_db: float
    mode: str
    beta_low: Optional[float]
    beta_up: Optional[float]
    m_off_cap: int
    n_events: int
    n_tail: int
    n_offloaded: int
    n_tail_detected: int
    n_false_alarms: int
    n_server_correct: int
    energy_j: float
    bits_sent: float
    fallback: bool
    budget_exhausted: bool

    @classmethod
    def from_decision(cls, index: int, decision: PolicyDecision) -> "IntervalMetrics":
        thr = decision.thresholds
        return cls(
            index=index,
            snr_db=linear_to_db(decision.snr),
            mode=decision.mode,
            beta_low=None if thr is None else thr.beta_low,
            beta_up=None if thr is None else thr.beta_up,
            m_off_cap=decision.m_off_cap,
            n_events=decision.n_events,
            n_tail=decision.n_tail,
            n_offloaded=decision.n_offloaded,
            n_tail_detected=decision.n_tail_detected,
            n_false_alarms=decision.n_false_alarms,
            n_server_correct=decision.n_server_correct,
            energy_j=decision.energy,
            bits_sent=decision.bits_sent,
            fallback=decision.fallback,
            budget_exhausted=decision.budget_exhausted,
        )

    @property
    def f_acc(self) -> Optional[float]:
        return self.n_server_correct / self.n_tail if self.n_tail else None

    @property
    def p_miss(self) -> Optional[float]:
        return 1.0 - self.n_tail_detected / self.n_tail if self.n_tail else None

    @property
    def p_off(self) -> float:
        return self.n_offloaded / self.n_events


REPORT_COLUMNS = [
    "interval", "snr_db", "mode", "beta_low", "beta_up", "m_off_cap", "n_events", "n_tail",
    "n_offloaded", "n_server_correct", "f_acc", "p_miss", "p_off", "energy_j", "bits_sent",
    "fallback", "budget_exhausted",
]


@dataclass(frozen=True)
class SimulationReport:
    """Per-interval metrics; aggregates are event-weighted over all intervals."""

    intervals: Tuple[IntervalMetrics, ...]

    @property
    def n_events(self) -> int:
        return sum(i.n_events for i in self.intervals)

    @property
    def n_tail(self) -> int:
        return sum(i.n_tail for i in self.intervals)

    @property
    def f_acc(self) -> Optional[float]:
        tails = self.n_tail
        return sum(i.n_server_correct for i in self.intervals) / tails if tails else None

    @property
    def p_miss(self) -> Optional[float]:
        tails = self.n_tail
        return 1.0 - sum(i.n_tail_detected for i in self.intervals) / tails if tails else None

    @property
    def p_off(self) -> float:
        return sum(i.n_offloaded for i in self.intervals) / self.n_events if self.intervals else 0.0

    @property
    def energy_per_event(self) -> float:
        return math.fsum(i.energy_j for i in self.intervals) / self.n_events if self.intervals else 0.0

    @property
    def bits_sent(self) -> float:
        return math.fsum(i.bits_sent for i in self.intervals)

    def summary(self) -> Dict[str, Any]:
        return {
            "intervals": len(self.intervals),
            "events": self.n_events,
            "tail_events": self.n_tail,
            "f_acc": self.f_acc,
            "p_miss": self.p_miss,
            "p_off": self.p_off,
            "energy_per_event_j": self.energy_per_event,
            "bits_sent": self.bits_sent,
            "fallback_intervals": sum(1 for i in self.intervals if i.fallback),
            "local_intervals": sum(1 for i in self.intervals if i.mode == MODE_LOCAL),
        }

    def to_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in self.intervals:
                record = asdict(row)
                record["interval"] = record.pop("index")
                for name in ("n_tail_detected", "n_false_alarms"):
                    record.pop(name)
                record.update(f_acc=row.f_acc, p_miss=row.p_miss, p_off=row.p_off)
                writer.writerow({k: ("" if v is None else v) for k, v in record.items()})


def write_report(report: SimulationReport, out_dir: PathLike) -> Tuple[Path, Path]:
    """Write ``campaign.csv`` and ``campaign.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "campaign.csv", out / "campaign.json"
    report.to_csv(csv_path)
    json_path.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def _run_one(task) -> PolicyDecision:
    interval, table, model, constraints = task
    return run_interval(interval, table, model, constraints)


def simulate_intervals(
    intervals: Sequence[CoherenceInterval],
    table: LookupTable,
    model: EnergyModel,
    constraints: Constraints,
    workers: int = 1,
) -> SimulationReport:
    decisions = ordered_map(_run_one, [(i, table, model, constraints) for i in intervals], workers)
    report = SimulationReport(
        intervals=tuple(IntervalMetrics.from_decision(k, d) for k, d in enumerate(decisions))
    )
    for row in report.intervals:
        logger.debug(json.dumps(asdict(row)))
    return report


def run_campaign(
    snr_sequence: Sequence[float],
    population: TracePopulation,
    table: LookupTable,
    model: EnergyModel,
    constraints: Constraints,
    bandwidth: float,
    seed: int = 0,
    workers: int = 1,
) -> SimulationReport:
    """Draw one interval per SNR from ``population`` and simulate them all."""
    intervals = draw_intervals(population, snr_sequence, constraints.n_events, bandwidth, seed)
    report = simulate_intervals(intervals, table, model, constraints, workers)
    logger.info(json.dumps({"campaign": report.summary()}))
    return report
