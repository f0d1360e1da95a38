#!/usr/bin/env python3
# MIT License
# Copyright (c) 2026 ambicuity
"""Run a dual-threshold sweep from the repository checkout.

Usage:
    python scripts/run_sweep.py --config validation/local-sweep.yaml --out results/
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from dualexit.cli import main  # noqa: E402 # pylint: disable=wrong-import-position

if __name__ == "__main__":
    sys.exit(main())
