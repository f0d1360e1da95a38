# MIT License
# Copyright (c) 2026 ambicuity
"""
Unit tests for dualexit.config
"""

from pathlib import Path

import pytest

from dualexit.config import (
    ConstraintConfig,
    EnergyConfig,
    ExperimentConfig,
    SweepConfig,
    TraceConfig,
    load_config,
    parse_config,
)
from dualexit.errors import ConfigError

REPO_ROOT = Path(__file__).resolve().parents[1]
LOCAL_SWEEP = REPO_ROOT / "validation" / "local-sweep.yaml"


def test_local_sweep_config_loads():
    config = load_config(LOCAL_SWEEP)
    assert config.traces.seed == 7
    assert config.energy.mem_ops == (2_000_000, 3_000_000, 4_000_000, 5_000_000)
    assert config.energy.bandwidth_hz == 30e6
    assert config.penalty.slope == 8.0
    assert config.sweep.grid == (0.16, 0.25, 0.35, 0.45)
    assert config.evaluation.groups == 4


def test_empty_document_gives_defaults():
    assert parse_config(None) == ExperimentConfig()
    assert parse_config({}) == ExperimentConfig()


def test_exponent_strings_are_numbers():
    config = parse_config({"energy": {"energy_per_access": "1e-9"}})
    assert config.energy.energy_per_access == 1e-9


@pytest.mark.parametrize(
    "document, fragment",
    [
        ({"energy": {"joules": 1.0}}, "unknown key"),
        ({"plots": {}}, "unknown section"),
        ({"traces": {"n_events": "many"}}, "traces.n_events"),
        ({"traces": {"n_events": True}}, "traces.n_events"),
        ({"energy": {"mem_ops": 5}}, "energy.mem_ops"),
        ({"energy": {"tx_power_dbm": "loud"}}, "energy.tx_power_dbm"),
        ({"sweep": {"axis": "bandwidth"}}, "sweep.axis"),
        ({"sweep": {"grid": [0.3, 0.2]}}, "strictly increasing"),
        ({"sweep": {"grid": []}}, "must not be empty"),
        ({"sweep": {"workers": 0}}, "sweep.workers"),
        ({"traces": {"path": "t.csv"}, "sweep": {"axis": "imbalance_ratio"}}, "imbalance_ratio"),
        ({"penalty": {"slope": -1.0}}, "section 'penalty'"),
        ({"energy": []}, "must be a mapping"),
    ],
)
def test_invalid_documents(document, fragment):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(document)
    assert fragment in str(excinfo.value)


def test_unreadable_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("traces: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)


class TestConstraintResolution:
    def setup_method(self):
        self.model = EnergyConfig(payload_bits=1000.0).to_model()

    def test_fraction_scales_payload_and_events(self):
        constraints = ConstraintConfig(n_events=10, offload_fraction=0.3).resolve(self.model)
        assert constraints.data_volume_limit == pytest.approx(3000.0)

    def test_explicit_limit_wins(self):
        config = ConstraintConfig(n_events=10, offload_fraction=0.3, data_volume_limit=1234.0)
        assert config.resolve(self.model).data_volume_limit == 1234.0

    def test_sweep_value_overrides_both(self):
        config = ConstraintConfig(n_events=10, data_volume_limit=1234.0)
        constraints = config.resolve(self.model, offload_fraction=0.5, energy_limit=2.0)
        assert constraints.data_volume_limit == pytest.approx(5000.0)
        assert constraints.energy_limit == 2.0

    def test_neither_limit(self):
        with pytest.raises(ConfigError):
            ConstraintConfig(offload_fraction=None).resolve(self.model)


def test_tx_power_converts_from_dbm():
    assert EnergyConfig(tx_power_dbm=30.0).to_model().tx_power == pytest.approx(1.0)


def test_synthetic_spec_overrides():
    spec = TraceConfig(seed=3, n_events=50).synthetic_spec(seed=9, imbalance_ratio=2.0)
    assert spec.seed == 9
    assert spec.imbalance_ratio == 2.0
    assert spec.n_events == 50


def test_with_overrides():
    config = ExperimentConfig().with_overrides(axis="snr", out_dir="elsewhere", workers=3, seed=42)
    assert config.sweep == SweepConfig(axis="snr", out_dir="elsewhere", workers=3)
    assert config.traces.seed == 42
    assert ExperimentConfig().with_overrides() == ExperimentConfig()
