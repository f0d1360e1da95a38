# MIT License
# Copyright (c) 2026 ambicuity
import sys

from dualexit.cli import main

sys.exit(main())
