"""Wall-clock timestamps and precise delay injection.

Timestamps are integer microseconds since the Unix epoch. Injected delays
use a deadline loop instead of a bare ``time.sleep``: on Linux a 10 ms
sleep overshoots by ~0.6 ms, which would bias recovered network/query
latencies; the deadline loop lands within ~10 us.
"""
from __future__ import annotations

import time

# Below this remainder the loop yields instead of sleeping; one plain
# sleep can overshoot by more than this.
_SPIN_THRESHOLD_NS = 1_200_000


def now_us() -> int:
    """Current wall-clock time in integer microseconds since the epoch."""
    return time.time_ns() // 1_000


def precise_sleep_ms(delay_ms: float) -> None:
    """Block for ``delay_ms`` milliseconds with sub-0.1 ms accuracy."""
    if delay_ms <= 0:
        return
    deadline = time.perf_counter_ns() + int(delay_ms * 1e6)
    while True:
        remaining = deadline - time.perf_counter_ns()
        if remaining <= 0:
            return
        if remaining > _SPIN_THRESHOLD_NS:
            time.sleep((remaining - 1_000_000) / 1e9)
        else:
            time.sleep(0)
