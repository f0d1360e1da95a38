# MIT License
# Copyright (c) 2026 ambicuity
"""Tests for dualexit.parallel that never start a Ray cluster."""

import sys

from dualexit.parallel import ordered_map


def square(x):
    return x * x


def test_sequential_map_keeps_order():
    assert ordered_map(square, [3, 1, 2]) == [9, 1, 4]


def test_empty_input():
    assert ordered_map(square, [], workers=4) == []


def test_single_item_stays_in_process(monkeypatch):
    # importing ray would fail if the parallel path were taken
    monkeypatch.setitem(sys.modules, "ray", None)
    assert ordered_map(square, [5], workers=8) == [25]


def test_one_worker_never_imports_ray(monkeypatch):
    monkeypatch.setitem(sys.modules, "ray", None)
    assert ordered_map(square, range(5), workers=1) == [0, 1, 4, 9, 16]
