"""Clocks: a logical clock for deterministic runs, a wall clock for serving."""

from __future__ import annotations

import time


class LogicalClock:
    """Millisecond clock advanced explicitly; runs are reproducible."""

    def __init__(self, start_ms: int = 0) -> None:
        if start_ms < 0:
            raise ValueError("start_ms must be non-negative")
        self._now_ms = start_ms

    def now_ms(self) -> int:
        return self._now_ms

    def advance(self, delta_ms: int) -> int:
        if delta_ms < 0:
            raise ValueError("delta_ms must be non-negative")
        self._now_ms += delta_ms
        return self._now_ms


class WallClock:
    """Real time in milliseconds since the epoch."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def advance(self, delta_ms: int) -> int:
        # Real time cannot be advanced; sleeping keeps relative semantics.
        time.sleep(delta_ms / 1000)
        return self.now_ms()
