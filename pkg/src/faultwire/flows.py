"""Executable alarm flows: baseline and self-healing pipelines.

Three variants mirror the systems under test:

* BL     — parse -> threshold_alarm -> report_by_exception
* SH_S1  — parse -> range_filter -> join -> majority_vote -> compensate
           -> threshold_alarm -> report_by_exception
* SH_S2  — SH_S1 with a debounce stage inserted before the join

A Flow is a single-threaded state machine fed by `deliver` (one broker
message) and `on_timer` (join/compensate timeouts). It reports alarm
changes as AlarmEvent values; publishing them on the alarm topic is the
harness's job.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum

from .healing import (
    NO_MAJORITY,
    AlarmLevel,
    CompensateNode,
    DebounceNode,
    JoinNode,
    Reading,
    ReportByException,
    Thresholds,
    majority_vote,
    range_filter,
    threshold_alarm,
)

logger = logging.getLogger(__name__)

DEFAULT_INPUT_TOPICS = ("sensors/1/nox", "sensors/2/nox", "sensors/3/nox")


class FlowVariant(Enum):
    BL = "BL"
    SH_S1 = "SH_S1"
    SH_S2 = "SH_S2"


@dataclass(frozen=True)
class FlowSpec:
    """Declarative wiring of one flow."""

    name: str
    variant: FlowVariant
    input_topics: tuple[str, ...] = DEFAULT_INPUT_TOPICS
    alarm_topic: str = ""
    thresholds: Thresholds = field(default_factory=Thresholds)
    join_timeout_ms: int = 6000
    compensate_timeout_ms: int = 6000
    debounce_window_ms: int = 4000
    min_consensus: int = 2
    margin_pct: float = 0.25
    history_len: int = 3
    max_replays: int = 3

    def resolved_alarm_topic(self) -> str:
        return self.alarm_topic or f"alarm/{self.name}"


@dataclass(frozen=True)
class AlarmEvent:
    flow_name: str
    level: AlarmLevel
    instant: int


class FlowError(ValueError):
    """Invalid flow specification."""


def parse_payload(payload: bytes) -> float | None:
    """Sensor payload to a number: plain decimal text, or {"value": x} JSON."""
    try:
        text = payload.decode("utf-8").strip()
    except UnicodeDecodeError:
        return None
    try:
        return float(text)
    except ValueError:
        pass
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return None
    if isinstance(doc, dict) and isinstance(doc.get("value"), (int, float)):
        return float(doc["value"])
    return None


class Flow:
    """One runnable SUT variant; initial alarm level is Off."""

    def __init__(self, spec: FlowSpec):
        self.spec = spec
        self.name = spec.name
        self.alarm_topic = spec.resolved_alarm_topic()
        self.current_level = AlarmLevel.OFF
        self.counters = {
            "malformed": 0,
            "range_discarded": 0,
            "debounce_discarded": 0,
            "partial_groups": 0,
            "no_majority": 0,
            "compensate_means": 0,
            "compensate_replays": 0,
        }
        self._rbe = ReportByException()
        self._debounce: DebounceNode | None = None
        self._join: JoinNode | None = None
        self._compensate: CompensateNode | None = None
        if spec.variant is not FlowVariant.BL:
            if spec.variant is FlowVariant.SH_S2:
                self._debounce = DebounceNode(spec.debounce_window_ms)
            self._join = JoinNode(count=len(spec.input_topics), timeout_ms=spec.join_timeout_ms)
            self._compensate = CompensateNode(
                timeout_ms=spec.compensate_timeout_ms,
                history_len=spec.history_len,
                max_replays=spec.max_replays,
            )

    @property
    def stage_names(self) -> tuple[str, ...]:
        if self.spec.variant is FlowVariant.BL:
            return ("parse", "threshold_alarm", "report_by_exception")
        healing = ("range_filter", "join", "majority_vote", "compensate")
        if self.spec.variant is FlowVariant.SH_S2:
            healing = ("range_filter", "debounce", "join", "majority_vote", "compensate")
        return ("parse", *healing, "threshold_alarm", "report_by_exception")

    def deadline(self) -> int | None:
        pending = []
        for node in (self._join, self._compensate):
            if node is not None and node.deadline() is not None:
                pending.append(node.deadline())
        return min(pending) if pending else None

    def deliver(self, topic: str, payload: bytes, now: int) -> list[AlarmEvent]:
        """Feed one message; returns any alarm changes it caused."""
        value = parse_payload(payload)
        if value is None:
            self.counters["malformed"] += 1
            logger.warning("%s: ignoring malformed payload %r on %s", self.name, payload[:40], topic)
            return []
        if self.spec.variant is FlowVariant.BL:
            return self._alarm(value, now)
        reading = Reading(sensor_id=topic, value=value, instant=now)
        if range_filter(reading, self.spec.thresholds) is None:
            self.counters["range_discarded"] += 1
            return []
        if self._debounce is not None:
            accepted = self._debounce.step(reading)
            self.counters["debounce_discarded"] = self._debounce.discarded
            if not accepted:
                return []
            (reading,) = accepted
        events = []
        for group in self._join.step(reading, now):
            events.extend(self._vote_and_compensate(group, now))
        return events

    def on_timer(self, now: int) -> list[AlarmEvent]:
        """Fire due node timeouts; a stale or early call is a no-op."""
        if self.spec.variant is FlowVariant.BL:
            return []
        events = []
        for group in self._join.on_timeout(now):
            self.counters["partial_groups"] = self._join.partial_groups
            events.extend(self._vote_and_compensate(group, now))
        for value in self._compensate.on_timeout(now):
            self.counters["compensate_replays"] = self._compensate.replayed
            events.extend(self._alarm(value, now))
        return events

    def _vote_and_compensate(self, group: list[Reading], now: int) -> list[AlarmEvent]:
        self.counters["partial_groups"] = self._join.partial_groups
        voted = majority_vote(
            [r.value for r in group],
            min_consensus=self.spec.min_consensus,
            margin_pct=self.spec.margin_pct,
        )
        if voted is NO_MAJORITY:
            self.counters["no_majority"] += 1
        events = []
        for value in self._compensate.step(voted, now):
            events.extend(self._alarm(value, now))
        self.counters["compensate_means"] = self._compensate.means_emitted
        return events

    def _alarm(self, value: float, now: int) -> list[AlarmEvent]:
        level = threshold_alarm(value, self.spec.thresholds)
        events = []
        for emitted in self._rbe.step(level):
            self.current_level = emitted
            events.append(AlarmEvent(self.name, emitted, now))
        return events


def build_flow(spec: FlowSpec) -> Flow:
    """Validate a FlowSpec and construct its Flow."""
    if not isinstance(spec.variant, FlowVariant):
        raise FlowError(f"unknown flow variant {spec.variant!r}")
    if not spec.name:
        raise FlowError("flow requires a name")
    if not spec.input_topics:
        raise FlowError("flow requires at least one input topic")
    for positive, label in (
        (spec.join_timeout_ms, "join_timeout_ms"),
        (spec.compensate_timeout_ms, "compensate_timeout_ms"),
        (spec.debounce_window_ms, "debounce_window_ms"),
        (spec.min_consensus, "min_consensus"),
        (spec.history_len, "history_len"),
    ):
        if positive < 1:
            raise FlowError(f"{label} must be >= 1, got {positive}")
    if not 0 < spec.margin_pct < 1:
        raise FlowError(f"margin_pct must be in (0, 1), got {spec.margin_pct}")
    if spec.max_replays < 0:
        raise FlowError(f"max_replays must be >= 0, got {spec.max_replays}")
    return Flow(spec)
