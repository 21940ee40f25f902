"""Alarm signals and the comparison metrics computed from them.

An alarm signal is the piecewise-constant level of one flow over the
experiment horizon. Every signal starts at Off at instant 0; the stored
breakpoints are the changes, so a flow whose first reading immediately
raises the alarm has a breakpoint right at instant 0. Overlap between two
signals is the exact time-weighted fraction of the horizon on which they
agree, computed by merging breakpoints (no sampling). Transition counts
tally every change under its destination level.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..flows import AlarmEvent
from ..healing import AlarmLevel


@dataclass(frozen=True)
class AlarmSignal:
    """Level changes (instant, level) over [0, horizon); Off before the first."""

    changes: tuple[tuple[int, AlarmLevel], ...]
    horizon: int

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        previous_t, previous_level = None, AlarmLevel.OFF
        for t, level in self.changes:
            if t < 0 or (previous_t is not None and t <= previous_t):
                raise ValueError("change instants must be strictly increasing and >= 0")
            if level == previous_level:
                raise ValueError("consecutive levels must differ")
            previous_t, previous_level = t, level

    @classmethod
    def from_events(cls, events: Iterable[AlarmEvent], horizon: int) -> "AlarmSignal":
        changes: list[tuple[int, AlarmLevel]] = []

        def level_before_last() -> AlarmLevel:
            return changes[-2][1] if len(changes) >= 2 else AlarmLevel.OFF

        for event in events:
            current = changes[-1][1] if changes else AlarmLevel.OFF
            if event.level == current:
                continue
            if changes and event.instant == changes[-1][0]:
                # Several changes at one instant: only the final level is real.
                if event.level == level_before_last():
                    changes.pop()
                else:
                    changes[-1] = (event.instant, event.level)
            else:
                changes.append((event.instant, event.level))
        return cls(changes=tuple(changes), horizon=horizon)

    def level_at(self, instant: int) -> AlarmLevel:
        """Level in effect at `instant` (changes take effect at their instant)."""
        index = bisect_right(self.changes, instant, key=lambda c: c[0])
        return self.changes[index - 1][1] if index else AlarmLevel.OFF

    def segments(self) -> list[tuple[int, int, AlarmLevel]]:
        """(start, end, level) pieces covering [0, horizon)."""
        points = [(0, AlarmLevel.OFF)] if not self.changes or self.changes[0][0] > 0 else []
        points.extend(self.changes)
        out = []
        for i, (t, level) in enumerate(points):
            end = points[i + 1][0] if i + 1 < len(points) else self.horizon
            if min(end, self.horizon) > t:
                out.append((t, min(end, self.horizon), level))
        return out


def overlap(a: AlarmSignal, b: AlarmSignal) -> float:
    """Percentage of the horizon on which the two signals agree exactly."""
    if a.horizon != b.horizon:
        raise ValueError(f"signals have different horizons: {a.horizon} != {b.horizon}")
    if a.horizon == 0:
        raise ValueError("cannot compute overlap over an empty horizon")
    cuts = sorted(
        {t for t, _ in a.changes} | {t for t, _ in b.changes} | {0, a.horizon}
    )
    agreed = 0
    for start, end in zip(cuts, cuts[1:]):
        if start >= a.horizon:
            break
        if a.level_at(start) == b.level_at(start):
            agreed += min(end, a.horizon) - start
    return 100.0 * agreed / a.horizon


@dataclass(frozen=True)
class TransitionCounts:
    off: int = 0
    warn: int = 0
    danger: int = 0

    @property
    def total(self) -> int:
        return self.off + self.warn + self.danger

    def as_dict(self) -> dict[str, int]:
        return {"off": self.off, "warn": self.warn, "danger": self.danger, "total": self.total}


def transitions(signal: AlarmSignal) -> TransitionCounts:
    """Count changes by destination level; the implicit starting Off is not one."""
    counts = {AlarmLevel.OFF: 0, AlarmLevel.WARN: 0, AlarmLevel.DANGER: 0}
    for _, level in signal.changes:
        counts[level] += 1
    return TransitionCounts(
        off=counts[AlarmLevel.OFF], warn=counts[AlarmLevel.WARN], danger=counts[AlarmLevel.DANGER]
    )


@dataclass(frozen=True)
class MetricsReport:
    """Computed results of one experiment run."""

    experiment: str
    seed: int
    horizon_ms: int
    overlaps: Mapping[str, float] = field(default_factory=dict)
    transition_counts: Mapping[str, TransitionCounts] = field(default_factory=dict)
    counters: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "horizon_ms": self.horizon_ms,
            "overlaps": {k: round(v, 4) for k, v in self.overlaps.items()},
            "transitions": {k: v.as_dict() for k, v in self.transition_counts.items()},
            "counters": {k: dict(v) for k, v in self.counters.items()},
        }
