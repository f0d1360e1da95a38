#!/usr/bin/env python3
# MIT License
# Copyright (c) 2026 ambicuity
"""
Channel Campaign Workload
Replays Rayleigh-faded coherence intervals through the offloading policy
"""

import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from typing import Dict, List

import ray

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from dualexit.cli import load_traces  # noqa: E402 # pylint: disable=wrong-import-position
from dualexit.config import ExperimentConfig, load_config  # noqa: E402 # pylint: disable=wrong-import-position
from dualexit.energy import db_to_linear  # noqa: E402 # pylint: disable=wrong-import-position
from dualexit.optimizer import LookupTable, build_lookup_table, snr_grid  # noqa: E402 # pylint: disable=wrong-import-position
from dualexit.parallel import RAY_ADDRESS_ENV  # noqa: E402 # pylint: disable=wrong-import-position
from dualexit.policy import (  # noqa: E402 # pylint: disable=wrong-import-position
    draw_intervals,
    fading_snr_sequence,
    simulate_intervals,
)

# Configure logging
logging.basicConfig(
    level=os.environ.get("DUALEXIT_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

CONFIG_PATH = os.environ.get("CAMPAIGN_CONFIG", "validation/local-sweep.yaml")
METRICS_PATH = os.environ.get("CAMPAIGN_METRICS_PATH", "/tmp/campaign-metrics.json")

# (phase name, mean SNR in dB, intervals)
PHASES = [
    ("deep-fade", -5.0, 10),
    ("cell-edge", 3.0, 10),
    ("nominal", 10.0, 20),
    ("line-of-sight", 20.0, 10),
]


class ChannelCampaignOrchestrator:
    """Runs fading phases against one lookup table and records per-phase metrics"""

    def __init__(self, cfg: ExperimentConfig, workers: int):
        self.cfg = cfg
        self.workers = workers
        self.metrics: List[Dict] = []
        self.model = cfg.energy.to_model()
        self.constraints = cfg.constraints.resolve(self.model)
        self.population = load_traces(cfg)
        self.table: LookupTable = build_lookup_table(
            self.population,
            self.model,
            snr_grid(cfg.sweep.snr_low_db, cfg.sweep.snr_high_db, cfg.penalty.snr_bins),
            self.constraints,
            cfg.penalty,
            cfg.energy.bandwidth_hz,
            warm_start=True,
        )

    def log_metrics(self, phase: str, mean_snr_db: float, summary: Dict, latency: float):
        """Log structured metrics for analysis"""
        metric = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'phase': phase,
            'mean_snr_db': mean_snr_db,
            'latency_seconds': latency,
            **summary,
        }
        self.metrics.append(metric)
        logger.info(json.dumps(metric))

    def run_phase(self, phase: str, mean_snr_db: float, n_intervals: int, seed: int) -> Dict:
        logger.info(f"Starting phase: {phase} ({n_intervals} intervals at {mean_snr_db} dB mean)")
        started = time.time()
        snrs = fading_snr_sequence(db_to_linear(mean_snr_db), n_intervals, seed)
        intervals = draw_intervals(
            self.population, snrs, self.constraints.n_events, self.cfg.energy.bandwidth_hz, seed
        )
        report = simulate_intervals(intervals, self.table, self.model, self.constraints, self.workers)
        summary = report.summary()
        self.log_metrics(phase, mean_snr_db, summary, time.time() - started)
        return summary

    def run(self):
        for index, (phase, mean_snr_db, n_intervals) in enumerate(PHASES):
            self.run_phase(phase, mean_snr_db, n_intervals, seed=self.cfg.traces.seed + index)

    def print_summary(self):
        logger.info("=" * 80)
        logger.info("CHANNEL CAMPAIGN SUMMARY")
        logger.info("=" * 80)
        usable = len(self.table.entries)
        logger.info(f"Lookup table: {usable}/{len(self.table.rows)} usable bins")
        for metric in self.metrics:
            f_acc = metric['f_acc']
            logger.info(
                f"  {metric['phase']:>14}: f_acc={'n/a' if f_acc is None else f'{f_acc:.3f}'} "
                f"p_off={metric['p_off']:.3f} local intervals={metric['local_intervals']}"
            )


def main():
    """Main entry point"""
    cfg = load_config(CONFIG_PATH)
    workers = int(os.environ.get("CAMPAIGN_WORKERS", "4"))
    try:
        address = os.environ.get(RAY_ADDRESS_ENV)
        if address:
            logger.info(f"Connecting to Ray cluster at {address}...")
            ray.init(address=address)
        else:
            ray.init(num_cpus=workers)
        logger.info(f"Available resources: {ray.available_resources()}")

        orchestrator = ChannelCampaignOrchestrator(cfg, workers)
        orchestrator.run()
        orchestrator.print_summary()

        with open(METRICS_PATH, 'w', encoding='utf-8') as f:
            json.dump(orchestrator.metrics, f, indent=2)
        logger.info(f"Metrics saved to {METRICS_PATH}")

    except Exception as e:
        logger.error(f"Error running campaign: {e}", exc_info=True)
        raise
    finally:
        ray.shutdown()
        logger.info("Ray connection closed")


if __name__ == "__main__":
    main()
