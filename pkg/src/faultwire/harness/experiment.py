"""Experiment orchestration: broker + fault engine + flows + replay.

A run wires everything onto one virtual-clock scheduler:

* replayed sensor readings are published on the clean sensor topics;
* the fault engine taps those publishes and mirrors its output (faulted
  or passed-through) onto a parallel `faulted/` namespace;
* BL and SH flows subscribe to the clean topics, FI and FIxSH to the
  mirrored ones, so both pairs see the same input and the same seeded
  randomness in a single run;
* every routed message is appended to the message log, and alarm events
  are published back on per-flow alarm topics.

Events and timers drain in instant order until quiescence, then the
alarm signals, overlaps and transition counts are computed.
"""

from __future__ import annotations

import importlib.resources
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from ..faults.engine import FaultEngine, format_number
from ..faults.model import FaultConfig, compile_config
from ..flows import AlarmEvent, Flow, FlowSpec, FlowVariant, build_flow
from ..mqtt.broker import BrokerCore, Message
from ..replay import DatasetSeries, ReplayPlan, load_dataset, schedule, sliced
from .clock import VirtualScheduler
from .metrics import AlarmSignal, MetricsReport, overlap, transitions

logger = logging.getLogger(__name__)

FAULTED_PREFIX = "faulted/"
DEFAULT_SEED = 42
# Sensors replaying one series disagree by up to +/-5%, standing in for
# the spread real replicated hardware shows; without it the baseline and
# the voting flow would be trivially identical.
DEFAULT_JITTER_PCT = 0.05

ORIGIN_CLIENT = "client"
ORIGIN_INJECTED = "injected"
ORIGIN_FLOW = "flow"


@dataclass(frozen=True)
class LogEntry:
    instant: int
    topic: str
    payload: bytes
    origin: str


class MessageLog:
    """Append-only record of every message routed during a run."""

    def __init__(self):
        self.entries: list[LogEntry] = []

    def append(self, entry: LogEntry) -> None:
        if self.entries and entry.instant < self.entries[-1].instant:
            raise ValueError("log instants must be non-decreasing")
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class ExperimentSpec:
    """A named scenario: dataset, flows, fault config and seed."""

    name: str
    plan: ReplayPlan
    flows: tuple[FlowSpec, ...]
    fault_config: FaultConfig | None = None
    dataset_path: str | Path | None = None  # None = bundled sample dataset
    start_row: int = 0
    seed: int = DEFAULT_SEED
    description: str = ""

    def __post_init__(self):
        names = [f.name for f in self.flows]
        if "BL" not in names or "SH" not in names:
            raise ValueError("every experiment needs BL and SH flows")
        has_fi = "FI" in names or "FIxSH" in names
        if (self.fault_config is not None) != has_fi:
            raise ValueError("FI/FIxSH flows are present iff a fault config is set")


def bundled_dataset_path() -> Path:
    return Path(importlib.resources.files("faultwire").joinpath("data/airquality_nox.csv"))


class _MirrorTap:
    """Broker interceptor that adds a faulted copy of selected topics.

    The original message always passes through untouched; publishes on
    `topics` additionally run through the fault engine, and whatever the
    engine emits (faulted, delayed, or plain pass-through) is republished
    under the `faulted/` prefix.
    """

    def __init__(self, engine: FaultEngine, topics: set[str]):
        self.engine = engine
        self.topics = topics

    def intercept(self, message: Message, now: int) -> list[tuple[Message, int]]:
        out: list[tuple[Message, int]] = [(message, now)]
        if message.topic in self.topics:
            for emitted, due in self.engine.intercept(message, now):
                out.append((emitted.with_topic(FAULTED_PREFIX + emitted.topic), due))
        return out

    def deadline(self) -> int | None:
        return self.engine.deadline()

    def fire_due(self, now: int) -> list[tuple[Message, int]]:
        return [
            (emitted.with_topic(FAULTED_PREFIX + emitted.topic), due)
            for emitted, due in self.engine.fire_due(now)
        ]


def make_flow_specs(scenario_variant: FlowVariant, with_faults: bool) -> tuple[FlowSpec, ...]:
    """The SUT variants for one scenario: BL/SH, plus FI/FIxSH under faults."""
    clean = DEFAULT_SENSOR_TOPICS
    faulted = tuple(FAULTED_PREFIX + t for t in clean)
    specs = [
        FlowSpec(name="BL", variant=FlowVariant.BL, input_topics=clean),
        FlowSpec(name="SH", variant=scenario_variant, input_topics=clean),
    ]
    if with_faults:
        specs.append(FlowSpec(name="FI", variant=FlowVariant.BL, input_topics=faulted))
        specs.append(FlowSpec(name="FIxSH", variant=scenario_variant, input_topics=faulted))
    return tuple(specs)


DEFAULT_SENSOR_TOPICS = ("sensors/1/nox", "sensors/2/nox", "sensors/3/nox")
_FAULT_WINDOW = {"startAfter": 10, "stopAfter": 110}
_SENSOR3 = "sensors/3/nox"

_BUILTIN_FAULTS: dict[str, dict | None] = {
    "S1E1": None,
    "S1E2": {
        "rules": [
            {
                "topic": _SENSOR3,
                "operators": [{"type": "map", "expr": "1000"}],
                **_FAULT_WINDOW,
            }
        ]
    },
    "S1E3": {
        "rules": [
            {
                "topic": _SENSOR3,
                "operators": [
                    {"type": "map", "expr": "value * random(0.2, 2.2)", "probability": 0.4}
                ],
                **_FAULT_WINDOW,
            }
        ]
    },
    "S1E4": {
        "rules": [
            {
                "topic": _SENSOR3,
                "operators": [{"type": "randomDrop", "probability": 0.2}],
                **_FAULT_WINDOW,
            }
        ]
    },
    "S2E1": None,
    "S2E2": {
        "rules": [
            {
                "topic": _SENSOR3,
                "operators": [{"type": "duplicate", "delayMs": 6000}],
                **_FAULT_WINDOW,
            }
        ]
    },
}

_DESCRIPTIONS = {
    "S1E1": "no faults; BL vs SH baseline profile",
    "S1E2": "sensor 3 stuck at the 1000 ppb upper bound",
    "S1E3": "40% of sensor 3 readings scaled by a random factor in [0.2, 2.2]",
    "S1E4": "sensor 3 loses 20% of its messages",
    "S2E1": "no faults; timing-hardened SH flow baseline",
    "S2E2": "every sensor 3 message repeated 6 seconds later",
}


def builtin_experiments(seed: int = DEFAULT_SEED) -> list[ExperimentSpec]:
    """The six canonical experiment specifications."""
    specs = []
    for name, faults in _BUILTIN_FAULTS.items():
        scenario_variant = FlowVariant.SH_S2 if name.startswith("S2") else FlowVariant.SH_S1
        fault_config = compile_config(faults) if faults is not None else None
        plan = ReplayPlan(jitter_pct=DEFAULT_JITTER_PCT, jitter_seed=seed)
        specs.append(
            ExperimentSpec(
                name=name,
                plan=plan,
                flows=make_flow_specs(scenario_variant, fault_config is not None),
                fault_config=fault_config,
                seed=seed,
                description=_DESCRIPTIONS[name],
            )
        )
    return specs


def get_experiment(name: str, seed: int = DEFAULT_SEED) -> ExperimentSpec:
    for spec in builtin_experiments(seed):
        if spec.name == name:
            return spec
    known = ", ".join(_BUILTIN_FAULTS)
    raise KeyError(f"unknown experiment {name!r} (known: {known})")


class Harness:
    """One experiment run on a virtual clock."""

    def __init__(self, spec: ExperimentSpec, series: DatasetSeries):
        self.spec = spec
        self.scheduler = VirtualScheduler()
        self.log = MessageLog()
        self.engine: FaultEngine | None = None
        interceptor = None
        if spec.fault_config is not None:
            self.engine = FaultEngine(spec.fault_config, seed=spec.seed)
            sensor_topics = {spec.plan.topic_for(s) for s in spec.plan.sensors}
            interceptor = _MirrorTap(self.engine, sensor_topics)
        self.core = BrokerCore(clock=self.scheduler, interceptor=interceptor)
        self.core.add_observer(self._observe)
        self.flows: list[Flow] = []
        self.events: dict[str, list[AlarmEvent]] = {}
        self._flow_timers: dict[str, int | None] = {}
        self._alarm_topics: set[str] = set()
        for flow_spec in spec.flows:
            flow = build_flow(flow_spec)
            self.flows.append(flow)
            self.events[flow.name] = []
            self._flow_timers[flow.name] = None
            self._alarm_topics.add(flow.alarm_topic)
            self.core.connect(flow.name, self._make_deliver(flow))
            self.core.subscribe(flow.name, [(t, 0) for t in flow_spec.input_topics])
        plan = replace(spec.plan, jitter_seed=spec.seed)
        for emission in schedule(series, plan):
            payload = format_number(emission.value).encode("utf-8")
            self.scheduler.call_at(
                emission.instant,
                lambda t=emission.topic, p=payload: self.core.publish(t, p, qos=0),
            )

    def _observe(self, message: Message) -> None:
        if message.topic.startswith(FAULTED_PREFIX):
            origin = ORIGIN_INJECTED
        elif message.topic in self._alarm_topics:
            origin = ORIGIN_FLOW
        else:
            origin = ORIGIN_CLIENT
        self.log.append(
            LogEntry(
                instant=self.scheduler.now(),
                topic=message.topic,
                payload=message.payload,
                origin=origin,
            )
        )

    def _make_deliver(self, flow: Flow):
        def deliver(message: Message, effective_qos: int) -> None:
            events = flow.deliver(message.topic, message.payload, self.scheduler.now())
            self._emit(flow, events)

        return deliver

    def _emit(self, flow: Flow, events: list[AlarmEvent]) -> None:
        for event in events:
            self.events[flow.name].append(event)
            self.core.publish(flow.alarm_topic, str(int(event.level)).encode(), qos=0)
        self._arm_flow_timer(flow)

    def _arm_flow_timer(self, flow: Flow) -> None:
        deadline = flow.deadline()
        armed = self._flow_timers[flow.name]
        if deadline is None or (armed is not None and armed <= deadline):
            return
        self._flow_timers[flow.name] = deadline
        self.scheduler.call_at(deadline, lambda: self._on_flow_timer(flow, deadline))

    def _on_flow_timer(self, flow: Flow, armed_for: int) -> None:
        if self._flow_timers[flow.name] != armed_for:
            return  # superseded by an earlier re-arm
        self._flow_timers[flow.name] = None
        self._emit(flow, flow.on_timer(self.scheduler.now()))

    def run(self, *, pace_scale: float | None = None) -> tuple[MessageLog, MetricsReport]:
        if pace_scale is None:
            processed = self.scheduler.run_until_idle()
        else:
            processed = self._run_paced(pace_scale)
        logger.info(
            "%s: %d events, %d log entries, horizon %d ms",
            self.spec.name,
            processed,
            len(self.log),
            self.scheduler.now(),
        )
        horizon = self.scheduler.now()
        signals = {
            flow.name: AlarmSignal.from_events(self.events[flow.name], horizon)
            for flow in self.flows
        }
        overlaps = {}
        for a, b in (("BL", "SH"), ("FI", "BL"), ("FIxSH", "SH")):
            if a in signals and b in signals:
                overlaps[f"{a}|{b}"] = overlap(signals[a], signals[b])
        report = MetricsReport(
            experiment=self.spec.name,
            seed=self.spec.seed,
            horizon_ms=horizon,
            overlaps=overlaps,
            transition_counts={name: transitions(sig) for name, sig in signals.items()},
            counters={flow.name: dict(flow.counters) for flow in self.flows},
        )
        self.signals = signals
        return self.log, report

    def _run_paced(self, scale: float) -> int:
        """Real-time pacing: sleep between instants, scaled by `scale` (>1 is faster).

        Event processing is still the deterministic virtual loop; only the
        wall-clock pacing differs, so metrics match a virtual run exactly.
        """
        import time

        count = 0
        while True:
            upcoming = self.scheduler.peek_next()
            if upcoming is None:
                return count
            wait_ms = (upcoming - self.scheduler.now()) / max(scale, 1e-9)
            if wait_ms > 0:
                time.sleep(wait_ms / 1000.0)
            self.scheduler.step()
            count += 1


def load_experiment_series(spec: ExperimentSpec) -> DatasetSeries:
    path = spec.dataset_path if spec.dataset_path is not None else bundled_dataset_path()
    series = load_dataset(path)
    if spec.start_row:
        series = sliced(series, spec.start_row)
    return series


def run_experiment(spec: ExperimentSpec) -> tuple[MessageLog, MetricsReport]:
    """Run one experiment to quiescence; deterministic for a given spec."""
    series = load_experiment_series(spec)
    return Harness(spec, series).run()
