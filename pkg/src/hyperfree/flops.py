"""Software FLOP accounting for the operator kernels.

A single process-wide counter is incremented by the kernels with the exact
number of scalar multiply/add operations of each vectorized step.  Counting is
off by default so that timed benchmark runs pay no bookkeeping cost.
"""

from __future__ import annotations

from contextlib import contextmanager


class FlopCounter:
    __slots__ = ("enabled", "count")

    def __init__(self) -> None:
        self.enabled = False
        self.count = 0

    def add(self, n: int) -> None:
        if self.enabled:
            self.count += int(n)

    def reset(self) -> None:
        self.count = 0


FLOPS = FlopCounter()


@contextmanager
def counting():
    """Enable the counter for the duration of a block and restore the previous state."""
    prev = FLOPS.enabled
    FLOPS.enabled = True
    try:
        yield FLOPS
    finally:
        FLOPS.enabled = prev


def measure(fn, *args, **kwargs) -> int:
    """Run ``fn`` once with counting enabled and return the FLOPs it tallied."""
    start = FLOPS.count
    with counting():
        fn(*args, **kwargs)
    return FLOPS.count - start
