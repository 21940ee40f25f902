"""Self-healing stream operators.

The building blocks the healing flows are wired from: a validity range
filter, a group join with timeout, a replication voter, a compensator
(history mean for rejected votes, last-value replay for silence), a
per-sensor debounce and the threshold alarm with report-by-exception.

Everything here is deterministic: no randomness, no wall clock. Stateful
nodes are plain state machines with `step` / `on_timeout` entry points and
expose their next deadline for whoever owns the timers (the flow runtime
serializes all calls).
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from statistics import fmean

logger = logging.getLogger(__name__)


class AlarmLevel(IntEnum):
    OFF = 0
    WARN = 1
    DANGER = 2


@dataclass(frozen=True)
class Reading:
    """One sensor sample (value in ppb, instant in virtual-time ms)."""

    sensor_id: str
    value: float
    instant: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"reading value must be finite, got {self.value}")


@dataclass(frozen=True)
class Thresholds:
    """Alarm thresholds and the sensor's valid operating range (ppb)."""

    warn: float = 53.0
    danger: float = 212.0
    valid_min: float = 5.0
    valid_max: float = 1000.0

    def __post_init__(self):
        if not self.valid_min < self.warn < self.danger <= self.valid_max:
            raise ValueError(
                "need valid_min < warn < danger <= valid_max, got "
                f"{self.valid_min}/{self.warn}/{self.danger}/{self.valid_max}"
            )


DEFAULT_THRESHOLDS = Thresholds()


class _NoMajority:
    def __repr__(self):
        return "NO_MAJORITY"


NO_MAJORITY = _NoMajority()


def threshold_alarm(value: float, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> AlarmLevel:
    """Alarm level for one reading; warn and danger bounds are inclusive."""
    if value >= thresholds.danger:
        return AlarmLevel.DANGER
    if value >= thresholds.warn:
        return AlarmLevel.WARN
    return AlarmLevel.OFF


def range_filter(reading: Reading, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> Reading | None:
    """Pass readings inside [valid_min, valid_max] (inclusive); None otherwise."""
    if thresholds.valid_min <= reading.value <= thresholds.valid_max:
        return reading
    return None


def majority_vote(
    values: list[float], min_consensus: int = 2, margin_pct: float = 0.25
) -> float | _NoMajority:
    """Mean of the largest cluster of mutually-close values, or NO_MAJORITY.

    Two values agree when |a - b| <= margin_pct * max(|a|, |b|); clusters
    are the connected components of the agreement graph, so agreement is
    transitive. Ties between equally-large clusters go to the one holding
    the earliest-indexed value. Clusters smaller than `min_consensus` do
    not constitute a majority.
    """
    if not values:
        raise ValueError("majority_vote requires at least one value")
    n = len(values)
    cluster = list(range(n))

    def find(i: int) -> int:
        while cluster[i] != i:
            cluster[i] = cluster[cluster[i]]
            i = cluster[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= margin_pct * max(abs(values[i]), abs(values[j])):
                ri, rj = find(i), find(j)
                cluster[max(ri, rj)] = min(ri, rj)  # root = earliest index
    members: dict[int, list[float]] = {}
    order: list[int] = []
    for i in range(n):
        root = find(i)
        if root not in members:
            members[root] = []
            order.append(root)
        members[root].append(values[i])
    best = max(order, key=lambda r: (len(members[r]), -r))
    if len(members[best]) < min_consensus:
        return NO_MAJORITY
    return fmean(members[best])


class JoinNode:
    """Collect one reading per sensor into a group.

    A group is emitted when `count` distinct sensors are present, or
    `timeout_ms` after the group's first reading (emitting the partial
    group). A newer reading from an already-present sensor replaces the
    old one without restarting the timeout.
    """

    def __init__(self, count: int = 3, timeout_ms: int = 6000):
        self.count = count
        self.timeout_ms = timeout_ms
        self._pending: dict[str, Reading] = {}
        self._deadline: int | None = None
        self.partial_groups = 0

    def deadline(self) -> int | None:
        return self._deadline

    def step(self, reading: Reading, now: int) -> list[list[Reading]]:
        if not self._pending:
            self._deadline = now + self.timeout_ms
        self._pending[reading.sensor_id] = reading
        if len(self._pending) >= self.count:
            return [self._emit()]
        return []

    def on_timeout(self, now: int) -> list[list[Reading]]:
        if self._deadline is None or now < self._deadline or not self._pending:
            return []
        self.partial_groups += 1
        return [self._emit()]

    def _emit(self) -> list[Reading]:
        group = list(self._pending.values())
        self._pending.clear()
        self._deadline = None
        return group


class CompensateNode:
    """Fill in for rejected votes and upstream silence.

    Normal values pass through and extend the history window. A
    NO_MAJORITY input is replaced by the mean of the history (nothing is
    emitted while the history is empty). When no input arrives for
    `timeout_ms`, the last accepted value is re-emitted, at most
    `max_replays` consecutive times so a dead upstream eventually goes
    quiet.
    """

    def __init__(self, timeout_ms: int = 6000, history_len: int = 3, max_replays: int = 3):
        self.timeout_ms = timeout_ms
        self.history: deque[float] = deque(maxlen=history_len)
        self.max_replays = max_replays
        self._last_value: float | None = None
        self._deadline: int | None = None
        self._replays = 0
        self.replayed = 0
        self.means_emitted = 0

    def deadline(self) -> int | None:
        return self._deadline

    def step(self, value: float | _NoMajority, now: int) -> list[float]:
        self._replays = 0
        self._deadline = now + self.timeout_ms
        if isinstance(value, _NoMajority):
            if not self.history:
                logger.warning("no majority and empty history; nothing to compensate with")
                return []
            self.means_emitted += 1
            return [fmean(self.history)]
        self.history.append(value)
        self._last_value = value
        return [value]

    def on_timeout(self, now: int) -> list[float]:
        if self._deadline is None or now < self._deadline:
            return []
        if self._last_value is None or self._replays >= self.max_replays:
            self._deadline = None
            return []
        self._replays += 1
        self.replayed += 1
        self._deadline = now + self.timeout_ms
        return [self._last_value]


class DebounceNode:
    """Drop readings that arrive too soon after the last accepted one.

    Timing is tracked per sensor; the first reading from a sensor always
    passes. Discarded readings do not move the reference instant.
    """

    def __init__(self, window_ms: int):
        self.window_ms = window_ms
        self._last_accepted: dict[str, int] = {}
        self.discarded = 0

    def step(self, reading: Reading) -> list[Reading]:
        last = self._last_accepted.get(reading.sensor_id)
        if last is not None and reading.instant - last < self.window_ms:
            self.discarded += 1
            return []
        self._last_accepted[reading.sensor_id] = reading.instant
        return [reading]


class ReportByException:
    """Suppress outputs equal to the previously emitted alarm level."""

    def __init__(self):
        self._last: AlarmLevel | None = None

    def step(self, level: AlarmLevel) -> list[AlarmLevel]:
        if level == self._last:
            return []
        self._last = level
        return [level]
