# MIT License
# Copyright (c) 2026 ambicuity
