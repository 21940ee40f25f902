"""Deterministic discrete-event scheduler (the virtual clock).

A min-heap of (instant, sequence, callback): events at the same instant
run in scheduling order, so a run is a pure function of what was
scheduled. Real time never enters; `run.py` style pacing for demos is
layered on top by the experiment runner.
"""

from __future__ import annotations

import heapq
from typing import Callable


class TimerHandle:
    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class VirtualScheduler:
    """Event queue plus the current virtual instant (milliseconds)."""

    def __init__(self, start: int = 0):
        self._now = start
        self._seq = 0
        self._heap: list[tuple[int, int, TimerHandle, Callable[[], None]]] = []

    def now(self) -> int:
        return self._now

    def call_at(self, instant: int, fn: Callable[[], None]) -> TimerHandle:
        if instant < self._now:
            raise ValueError(f"cannot schedule at {instant}, now is {self._now}")
        handle = TimerHandle()
        heapq.heappush(self._heap, (instant, self._seq, handle, fn))
        self._seq += 1
        return handle

    def call_later(self, delay: int, fn: Callable[[], None]) -> TimerHandle:
        return self.call_at(self._now + delay, fn)

    def peek_next(self) -> int | None:
        """Instant of the next live event, skipping cancelled ones."""
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def step(self) -> bool:
        """Run the next event; False when the queue is empty."""
        while self._heap:
            instant, _, handle, fn = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self._now = instant
            fn()
            return True
        return False

    def run_until_idle(self, max_events: int = 10_000_000) -> int:
        """Drain the queue; returns the number of events processed."""
        count = 0
        while self.step():
            count += 1
            if count >= max_events:
                raise RuntimeError(f"scheduler did not quiesce within {max_events} events")
        return count
