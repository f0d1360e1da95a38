# MIT License
# Copyright (c) 2026 ambicuity
"""
Order-preserving fan-out over Ray tasks.

With ``workers <= 1`` everything runs in-process; otherwise each item becomes
a Ray task and results are gathered with ``ray.get`` in submission order.
Set ``DUALEXIT_RAY_ADDRESS`` to attach to an existing cluster instead of
starting a local one.
"""

import logging
import os
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

RAY_ADDRESS_ENV = "DUALEXIT_RAY_ADDRESS"


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every item; results come back in input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    import ray

    started_here = False
    if not ray.is_initialized():
        address = os.environ.get(RAY_ADDRESS_ENV)
        if address:
            logger.info(f"Connecting to Ray cluster at {address}")
            ray.init(address=address, log_to_driver=False)
        else:
            ray.init(num_cpus=workers, log_to_driver=False, include_dashboard=False)
        started_here = True

    try:
        remote_fn = ray.remote(fn)
        futures = [remote_fn.remote(item) for item in items]
        return ray.get(futures)
    finally:
        if started_here:
            ray.shutdown()
