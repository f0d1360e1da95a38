# MIT License
# Copyright (c) 2026 ambicuity
"""Dual-threshold early-exit detection with channel-adaptive offloading."""

from dualexit.detector import (
    Decision,
    DetectionMetrics,
    ThresholdPair,
    hard_classify,
    metrics_gradient,
    population_metrics,
)
from dualexit.energy import ChannelState, Constraints, EnergyModel
from dualexit.optimizer import LookupTable, PenaltyConfig, build_lookup_table, optimize_thresholds
from dualexit.policy import SimulationReport, run_campaign, run_interval
from dualexit.traces import (
    ConfidenceTrace,
    Label,
    SyntheticSpec,
    TracePopulation,
    generate_population,
    load_population,
    save_population,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelState",
    "ConfidenceTrace",
    "Constraints",
    "Decision",
    "DetectionMetrics",
    "EnergyModel",
    "Label",
    "LookupTable",
    "PenaltyConfig",
    "SimulationReport",
    "SyntheticSpec",
    "ThresholdPair",
    "TracePopulation",
    "build_lookup_table",
    "generate_population",
    "hard_classify",
    "load_population",
    "metrics_gradient",
    "optimize_thresholds",
    "population_metrics",
    "run_campaign",
    "run_interval",
    "save_population",
]
