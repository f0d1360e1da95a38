# MIT License
# Copyright (c) 2026 ambicuity
"""
Unit tests for workloads/channel_campaign.py
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "workloads"))

from channel_campaign import PHASES, ChannelCampaignOrchestrator  # noqa: E402 # pylint: disable=wrong-import-position,import-error
from dualexit.config import parse_config  # noqa: E402 # pylint: disable=wrong-import-position

SMALL = {
    "traces": {"n_events": 60, "n_blocks": 3, "seed": 5},
    "energy": {"mem_ops": [1_000_000, 1_000_000, 1_000_000], "energy_per_access": 1e-9},
    "constraints": {"n_events": 20, "energy_limit": 1.0, "offload_fraction": 0.3},
    "penalty": {"slope": 8.0, "outer_iters": 10, "inner_iters": 5, "max_penalty_doublings": 1, "snr_bins": 3},
}


class TestChannelCampaignOrchestrator:
    def setup_method(self):
        # one worker keeps every phase in-process
        self.orchestrator = ChannelCampaignOrchestrator(parse_config(SMALL), workers=1)

    def test_table_covers_every_bin(self):
        assert len(self.orchestrator.table.rows) == 3

    def test_run_records_one_metric_per_phase(self):
        self.orchestrator.run()
        metrics = self.orchestrator.metrics
        assert [m["phase"] for m in metrics] == [name for name, _, _ in PHASES]
        for metric, (_, _, n_intervals) in zip(metrics, PHASES):
            assert metric["intervals"] == n_intervals
            assert metric["events"] == n_intervals * 20
            assert 0.0 <= metric["p_off"] <= 1.0
        json.dumps(metrics)

    def test_same_seed_replays_identically(self):
        first = self.orchestrator.run_phase("nominal", 10.0, 5, seed=3)
        second = self.orchestrator.run_phase("nominal", 10.0, 5, seed=3)
        assert first == second
