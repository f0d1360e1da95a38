# MIT License
# Copyright (c) 2026 ambicuity
"""
Sweep runner.

For every point of one sweep axis the runner optimises the dual thresholds,
evaluates them next to the single-threshold, terminal and ideal schemes and
writes one CSV row. Artifacts in ``--out``:

    sweep.csv       one row per grid point, grid order
    constants.txt   smoothness constants and feasibility floors
    lookup.csv      the threshold table (SNR sweeps only)
    summary.json    run summary, or the error record of a failed run
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from dualexit.config import SWEEP_AXES, ExperimentConfig, load_config
from dualexit.detector import ThresholdPair, population_metrics
from dualexit.energy import (
    ChannelState,
    Constraints,
    EnergyModel,
    cumulative_local_energy,
    data_volume,
    db_to_linear,
    feasibility_snr_floor,
    interval_energy,
    linear_to_db,
    offload_energy,
)
from dualexit.errors import (
    ConfigError,
    DegeneratePopulationError,
    DualExitError,
    InfeasibleBudgetError,
    InfeasibleChannelError,
    LambdaTooSmallError,
    NumericalFailureError,
)
from dualexit.indicators import ExitMasses, MetricValues, hard_exit_masses, reduce_metrics
from dualexit.optimizer import (
    INITIAL_THRESHOLDS,
    STATUS_OK,
    STATUS_VIOLATION,
    LookupTable,
    TableEntry,
    build_lookup_table,
    gamma_constant,
    optimize_thresholds,
    penalty_constants,
    project_to_box,
    snr_grid,
    within_limit,
)
from dualexit.parallel import ordered_map
from dualexit.policy import run_campaign
from dualexit.traces import TracePopulation, generate_population, load_population, split_population

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_LEVEL_ENV = "DUALEXIT_LOG_LEVEL"

STATUS_INFEASIBLE = "infeasible"

# recorded in the row instead of aborting the sweep
POINT_ERRORS = (InfeasibleChannelError, InfeasibleBudgetError, NumericalFailureError)

SWEEP_COLUMNS = [
    "axis", "value", "snr_db", "theta_bits", "xi_j",
    "dual_status", "dual_beta_low", "dual_beta_up", "dual_p_miss", "dual_p_false",
    "dual_p_off", "dual_f_acc", "dual_v_bits", "dual_energy_j",
    "dual_head_exit", "dual_tail_exit",
    "single_status", "single_tau", "single_p_miss", "single_p_off", "single_f_acc", "single_energy_j",
    "terminal_status", "terminal_tau", "terminal_p_miss", "terminal_p_off", "terminal_f_acc",
    "terminal_energy_j",
    "ideal_f_acc",
    "sim_f_acc", "sim_p_miss", "sim_p_off", "sim_energy_per_event_j",
    "holdout_p_miss", "holdout_f_acc",
]


@dataclass(frozen=True)
class SchemeResult:
    """Hard-mode outcome of one detection scheme at one grid point."""

    status: str
    parameter: Optional[Tuple[float, ...]] = None
    values: Optional[MetricValues] = None
    v_bits: Optional[float] = None
    energy_j: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_OK


@dataclass(frozen=True)
class PointContext:
    value: float
    population: TracePopulation
    model: EnergyModel
    channel: ChannelState
    constraints: Constraints


def load_traces(cfg: ExperimentConfig, imbalance_ratio: Optional[float] = None) -> TracePopulation:
    if cfg.traces.path is not None:
        return load_population(cfg.traces.path)
    return generate_population(cfg.traces.synthetic_spec(imbalance_ratio=imbalance_ratio))


def _scheme(ctx: PointContext, masses: ExitMasses, parameter: Tuple[float, ...]) -> SchemeResult:
    values = reduce_metrics(
        masses,
        ctx.population.tail_mask,
        ctx.population.server_mask,
        ctx.model.local_energy_profile(),
        offload_energy(ctx.model, ctx.channel),
    )
    v_bits = data_volume(ctx.model, ctx.constraints, values.p_off)
    energy = interval_energy(ctx.constraints, values.e_loc + values.e_off)
    feasible = within_limit(v_bits, ctx.constraints.data_volume_limit) and within_limit(
        energy, ctx.constraints.energy_limit
    )
    return SchemeResult(
        status=STATUS_OK if feasible else STATUS_VIOLATION,
        parameter=parameter,
        values=values,
        v_bits=v_bits,
        energy_j=energy,
    )


def _best(candidates: Sequence[SchemeResult]) -> SchemeResult:
    """Feasible candidate with the lowest p_miss, then the highest f_acc; earliest wins ties."""
    feasible = [c for c in candidates if c.feasible]
    if not feasible:
        return SchemeResult(status=STATUS_INFEASIBLE)
    return min(feasible, key=lambda c: (c.values.p_miss, -c.values.f_acc))


def single_threshold_baseline(ctx: PointContext, points: int) -> SchemeResult:
    """One threshold tau in [0.5, 1) on the top confidence at every block."""
    scores = ctx.population.score_matrix
    taus = np.linspace(0.5, 1.0, points, endpoint=False)
    return _best([_scheme(ctx, hard_exit_masses(scores, 1.0 - t, t), (float(t),)) for t in taus])


def _terminal_masses(scores: np.ndarray, tau: float) -> ExitMasses:
    m, n = scores.shape
    tail = np.zeros((m, n))
    head = np.zeros((m, n))
    is_tail = scores[:, n - 1] > tau
    tail[:, n - 1] = is_tail
    head[:, n - 1] = ~is_tail
    return ExitMasses(tail=tail, head=head)


def terminal_baseline(ctx: PointContext, points: int) -> SchemeResult:
    """One decision threshold at the final block only."""
    scores = ctx.population.score_matrix
    taus = np.linspace(0.0, 1.0, points + 2)[1:-1]
    return _best([_scheme(ctx, _terminal_masses(scores, t), (float(t),)) for t in taus])


def ideal_accuracy(ctx: PointContext) -> float:
    """Every event labelled correctly at block 1; leftover budget offloads tail events."""
    model, constraints, pop = ctx.model, ctx.constraints, ctx.population
    budget = constraints.energy_limit - constraints.n_events * cumulative_local_energy(model, 1)
    if budget <= 0 or pop.n_tail == 0:
        return 0.0
    by_energy = math.floor(budget / offload_energy(model, ctx.channel))
    by_volume = math.floor(constraints.data_volume_limit / model.payload_bits)
    tails_per_interval = constraints.n_events * pop.p_tail
    coverage = min(1.0, min(by_energy, by_volume) / tails_per_interval)
    server_accuracy = int(pop.server_mask.sum()) / pop.n_tail
    return coverage * server_accuracy


def _dual_scheme(ctx: PointContext, thr: ThresholdPair) -> SchemeResult:
    masses = hard_exit_masses(ctx.population.score_matrix, thr.beta_low, thr.beta_up)
    return _scheme(ctx, masses, (thr.beta_low, thr.beta_up))


def _seed_pair(single: SchemeResult) -> Optional[ThresholdPair]:
    if not single.feasible:
        return None
    tau = single.parameter[0]
    return ThresholdPair.from_array(project_to_box(np.array([1.0 - tau, tau])))


def _holdout(cfg: ExperimentConfig, ctx: PointContext, thr: ThresholdPair,
             imbalance_ratio: Optional[float]) -> Tuple[Optional[float], Optional[float]]:
    groups = cfg.evaluation.groups
    if groups <= 1:
        return None, None
    if cfg.traces.path is not None:
        test = ctx.population
    else:
        spec = cfg.traces.synthetic_spec(
            seed=cfg.evaluation.test_seed,
            imbalance_ratio=imbalance_ratio,
            n_events=cfg.evaluation.test_events,
        )
        test = generate_population(spec)
    parts = [p for p in split_population(test, groups, cfg.evaluation.test_seed) if p.n_tail]
    if not parts:
        return None, None
    metrics = [population_metrics(p, thr) for p in parts]
    return (
        float(np.mean([m.p_miss for m in metrics])),
        float(np.mean([m.f_acc for m in metrics])),
    )


def _context(cfg: ExperimentConfig, value: float, population: TracePopulation) -> PointContext:
    model = cfg.energy.to_model()
    axis = cfg.sweep.axis
    constraints = cfg.constraints.resolve(
        model,
        offload_fraction=value if axis == "offload_constraint" else None,
        energy_limit=value if axis == "energy_constraint" else None,
    )
    snr_db = value if axis == "snr" else cfg.sweep.snr_db
    channel = ChannelState(snr=db_to_linear(snr_db), bandwidth=cfg.energy.bandwidth_hz)
    return PointContext(value, population, model, channel, constraints)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _scheme_columns(prefix: str, result: SchemeResult, tau: bool) -> Dict[str, Any]:
    row: Dict[str, Any] = {f"{prefix}_status": result.status}
    if result.values is None:
        return row
    if tau:
        row[f"{prefix}_tau"] = result.parameter[0]
    row.update({
        f"{prefix}_p_miss": result.values.p_miss,
        f"{prefix}_p_off": result.values.p_off,
        f"{prefix}_f_acc": result.values.f_acc,
        f"{prefix}_energy_j": result.energy_j,
    })
    return row


def evaluate_point(task) -> Dict[str, Any]:
    """All schemes at one grid point. ``table_entry`` is set for SNR sweeps."""
    cfg, value, population, table_entry, table = task
    ctx = _context(cfg, value, population)
    row: Dict[str, Any] = {
        "axis": cfg.sweep.axis,
        "value": value,
        "snr_db": linear_to_db(ctx.channel.snr),
        "theta_bits": ctx.constraints.data_volume_limit,
        "xi_j": ctx.constraints.energy_limit,
    }
    points = cfg.sweep.baseline_points
    single = single_threshold_baseline(ctx, points)
    terminal = terminal_baseline(ctx, points)
    row.update(_scheme_columns("single", single, tau=True))
    row.update(_scheme_columns("terminal", terminal, tau=True))
    row["ideal_f_acc"] = ideal_accuracy(ctx)

    row.update(_dual_columns(cfg, ctx, single, table_entry))

    if table is not None:
        report = run_campaign(
            [ctx.channel.snr] * cfg.sweep.intervals,
            population,
            table,
            ctx.model,
            ctx.constraints,
            cfg.energy.bandwidth_hz,
            seed=cfg.traces.seed,
        )
        row.update({
            "sim_f_acc": report.f_acc,
            "sim_p_miss": report.p_miss,
            "sim_p_off": report.p_off,
            "sim_energy_per_event_j": report.energy_per_event,
        })
    return row


def _dual_columns(cfg: ExperimentConfig, ctx: PointContext, single: SchemeResult,
                  table_entry: Optional[TableEntry]) -> Dict[str, Any]:
    if table_entry is not None and table_entry.thresholds is None:
        return {"dual_status": table_entry.status}
    if table_entry is not None:
        thr = table_entry.thresholds
    else:
        try:
            thr = optimize_thresholds(
                ctx.population, ctx.model, ctx.channel, ctx.constraints, cfg.penalty, _seed_pair(single)
            ).thresholds
        except POINT_ERRORS as exc:
            logger.warning("dual thresholds unavailable at %s=%s: %s", cfg.sweep.axis, ctx.value, exc)
            return {"dual_status": type(exc).__name__}

    dual = _dual_scheme(ctx, thr)
    row: Dict[str, Any] = {
        "dual_status": dual.status,
        "dual_beta_low": thr.beta_low,
        "dual_beta_up": thr.beta_up,
        "dual_p_miss": dual.values.p_miss,
        "dual_p_false": dual.values.p_false,
        "dual_p_off": dual.values.p_off,
        "dual_f_acc": dual.values.f_acc,
        "dual_v_bits": dual.v_bits,
        "dual_energy_j": dual.energy_j,
        "dual_head_exit": dual.values.head_exit_mean,
        "dual_tail_exit": dual.values.tail_exit_mean,
    }
    ratio = ctx.value if cfg.sweep.axis == "imbalance_ratio" else None
    row["holdout_p_miss"], row["holdout_f_acc"] = _holdout(cfg, ctx, thr, ratio)
    return row


def constants_snr_grid(cfg: ExperimentConfig) -> List[float]:
    if cfg.sweep.axis == "snr":
        return list(cfg.sweep.grid)
    return snr_grid(cfg.sweep.snr_low_db, cfg.sweep.snr_high_db, cfg.penalty.snr_bins)


def dump_constants(cfg: ExperimentConfig, population: Optional[TracePopulation] = None) -> str:
    """Human-readable report of the smoothness constants and feasibility floor per SNR."""
    population = population or load_traces(cfg)
    model = cfg.energy.to_model()
    constraints = cfg.constraints.resolve(model)
    penalty = cfg.penalty
    lines = [
        "# dual-threshold smoothness constants",
        f"N = {population.n_blocks}",
        f"M = {constraints.n_events}",
        f"slope = {penalty.slope!r}",
        f"gamma = {gamma_constant(population.n_blocks, penalty.slope)!r}",
        f"theta_bits = {constraints.data_volume_limit!r}",
        f"xi_j = {constraints.energy_limit!r}",
    ]
    try:
        floor = feasibility_snr_floor(model, constraints, cfg.energy.bandwidth_hz)
        lines.append(f"floor_snr = {floor!r} ({linear_to_db(floor):.4f} dB)")
    except InfeasibleBudgetError as exc:
        floor = math.inf
        lines.append(f"floor_snr = infeasible ({exc})")

    lines.append("")
    lines.append("snr_db\tA\tB\tpsi\teta\tlambda\tmin_lambda\tfeasible")
    for snr_db in constants_snr_grid(cfg):
        channel = ChannelState(db_to_linear(snr_db), cfg.energy.bandwidth_hz)
        flag = "yes" if channel.snr >= floor else "infeasible"
        try:
            c = penalty_constants(population, model, channel, constraints, penalty)
        except LambdaTooSmallError as exc:
            lines.append(f"{snr_db!r}\t-\t-\t-\t-\t{exc.lam!r}\t{exc.min_lambda!r}\tlambda_too_small")
            continue
        lines.append(
            f"{snr_db!r}\t{c.a_const!r}\t{c.b_const!r}\t{c.psi!r}\t{c.eta!r}"
            f"\t{c.lam!r}\t{c.min_lambda!r}\t{flag}"
        )
    return "\n".join(lines) + "\n"


def run_sweep(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Run the configured sweep and write the artifacts; returns the summary record."""
    out = Path(cfg.sweep.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    axis, grid = cfg.sweep.axis, list(cfg.sweep.grid)
    base = load_traces(cfg)
    if base.n_tail == 0:
        raise DegeneratePopulationError("trace population has no tail events")

    (out / "constants.txt").write_text(dump_constants(cfg, base), encoding="utf-8")

    table: Optional[LookupTable] = None
    entries: List[Optional[TableEntry]] = [None] * len(grid)
    if axis == "snr":
        ctx = _context(cfg, grid[0], base)
        table = build_lookup_table(
            base, ctx.model, grid, ctx.constraints, cfg.penalty,
            cfg.energy.bandwidth_hz, warm_start=True, init=INITIAL_THRESHOLDS,
        )
        table.to_csv(out / "lookup.csv")
        entries = list(table.rows)

    tasks = []
    for value, entry in zip(grid, entries):
        population = load_traces(cfg, value) if axis == "imbalance_ratio" else base
        tasks.append((cfg, value, population, entry, table))
    rows = ordered_map(evaluate_point, tasks, cfg.sweep.workers)

    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            logger.info(json.dumps({k: v for k, v in row.items() if v is not None}, default=str))
            writer.writerow({k: _fmt(row.get(k)) for k in SWEEP_COLUMNS})

    summary = {
        "status": "ok",
        "axis": axis,
        "grid": grid,
        "rows": len(rows),
        "n_events": base.n_events,
        "n_blocks": base.n_blocks,
        "n_tail": base.n_tail,
        "dual_feasible_points": sum(1 for r in rows if r.get("dual_status") == STATUS_OK),
        "artifacts": sorted(p.name for p in out.iterdir() if p.name != "summary.json") + ["summary.json"],
    }
    _write_summary(out, summary)
    return summary


def _write_summary(out: Path, record: Dict[str, Any]) -> None:
    (out / "summary.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualexit",
        description="Optimise dual early-exit thresholds and sweep them against baselines.",
    )
    parser.add_argument("--config", help="YAML experiment config (defaults are used when omitted)")
    parser.add_argument("--sweep", choices=SWEEP_AXES, help="sweep axis, overrides sweep.axis")
    parser.add_argument("--out", help="output directory, overrides sweep.out_dir")
    parser.add_argument("--workers", type=int, help="parallel grid points, overrides sweep.workers")
    parser.add_argument("--seed", type=int, help="synthetic trace seed, overrides traces.seed")
    parser.add_argument("--constants-only", action="store_true", help="only write constants.txt")
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "INFO"),
        help=f"logging level (default: ${LOG_LEVEL_ENV} or INFO)",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=LOG_FORMAT)

    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = cfg.with_overrides(axis=args.sweep, out_dir=args.out, workers=args.workers, seed=args.seed)
        out = Path(cfg.sweep.out_dir)
        if args.constants_only:
            out.mkdir(parents=True, exist_ok=True)
            (out / "constants.txt").write_text(dump_constants(cfg), encoding="utf-8")
            summary = {"status": "ok", "artifacts": ["constants.txt"]}
        else:
            summary = run_sweep(cfg)
    except DualExitError as exc:
        record = exc.to_record()
        logger.error(f"Sweep failed: {exc}")
        print(json.dumps(record, sort_keys=True))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            _write_summary(out, record)
        return 2 if isinstance(exc, ConfigError) else 1

    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
