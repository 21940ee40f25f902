"""Command-line interface.

Subcommands:

* run              — run an experiment, write metrics + logs + timeline
* list-experiments — show the built-in experiment catalogue
* metrics          — offline comparison of two messages.jsonl logs
* replay           — publish a dataset column to an MQTT broker
* broker           — serve the instrumented MQTT broker over TCP

Exit codes: 0 success, 2 configuration error, 3 runtime failure. The
FAULTWIRE_LOG environment variable sets log verbosity (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

from .faults.engine import FaultEngine, format_number
from .faults.model import FaultConfigError, load_fault_config
from .flows import AlarmEvent
from .harness.experiment import (
    DEFAULT_SEED,
    Harness,
    builtin_experiments,
    get_experiment,
    load_experiment_series,
)
from .harness.metrics import AlarmSignal, overlap, transitions
from .harness.report import emit_report
from .healing import AlarmLevel
from .replay import DatasetError, ReplayPlan, load_dataset, schedule, sliced

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    """User-facing configuration problem (exit code 2)."""


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            start, end = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"bad seed range {text!r}, expected A..B") from None
        if end < start:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(start, end + 1))
    try:
        return [int(text)]
    except ValueError:
        raise ConfigError(f"bad seed {text!r}") from None


def cmd_run(args: argparse.Namespace) -> int:
    seeds = _parse_seeds(args.seeds) if args.seeds else [args.seed]
    try:
        base = get_experiment(args.experiment)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    if args.faults:
        fault_config = load_fault_config(args.faults)
        flows = base.flows
        if base.fault_config is None:
            from .harness.experiment import make_flow_specs
            from .flows import FlowVariant

            scenario = FlowVariant.SH_S2 if base.name.startswith("S2") else FlowVariant.SH_S1
            flows = make_flow_specs(scenario, with_faults=True)
        base = dataclasses.replace(base, fault_config=fault_config, flows=flows)
    if args.dataset:
        base = dataclasses.replace(base, dataset_path=args.dataset)
    if args.start_row:
        base = dataclasses.replace(base, start_row=args.start_row)
    out_root = Path(args.out)
    pace_scale = None
    if args.clock == "realtime":
        pace_scale = args.time_scale
    for seed in seeds:
        spec = dataclasses.replace(base, seed=seed)
        series = load_experiment_series(spec)
        started = time.perf_counter()
        harness = Harness(spec, series)
        log, report = harness.run(pace_scale=pace_scale)
        elapsed = time.perf_counter() - started
        out_dir = out_root / f"seed-{seed}" if len(seeds) > 1 else out_root
        emit_report(report, log, out_dir, signals=harness.signals)
        print(f"{spec.name} seed={seed}: horizon={report.horizon_ms} ms, "
              f"{len(log)} messages, {elapsed:.2f} s wall")
        for pair, pct in report.overlaps.items():
            print(f"  overlap {pair}: {pct:.1f}%")
        for name, counts in report.transition_counts.items():
            print(f"  transitions {name}: off={counts.off} warn={counts.warn} "
                  f"danger={counts.danger} total={counts.total}")
        print(f"  report written to {out_dir}")
    return EXIT_OK


def cmd_list_experiments(_: argparse.Namespace) -> int:
    for spec in builtin_experiments():
        flows = ", ".join(f.name for f in spec.flows)
        print(f"{spec.name}: {spec.description} [flows: {flows}]")
    return EXIT_OK


def _signals_from_jsonl(path: Path) -> tuple[dict[str, AlarmSignal], int]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    events: dict[str, list[tuple[int, AlarmLevel]]] = {}
    horizon = 0
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{i}: bad JSON: {exc}") from None
        horizon = max(horizon, int(doc["instant"]))
        if doc.get("origin") != "flow":
            continue
        try:
            level = AlarmLevel(int(doc.get("payload", "")))
        except ValueError:
            raise ConfigError(f"{path}:{i}: alarm payload {doc.get('payload')!r}") from None
        events.setdefault(doc["topic"], []).append((int(doc["instant"]), level))
    signals = {}
    for topic, pairs in events.items():
        flow_events = [AlarmEvent(flow_name=topic, level=level, instant=instant)
                       for instant, level in pairs]
        signals[topic] = AlarmSignal.from_events(flow_events, horizon)
    return signals, horizon


def cmd_metrics(args: argparse.Namespace) -> int:
    signals_a, horizon_a = _signals_from_jsonl(Path(args.a))
    signals_b, horizon_b = _signals_from_jsonl(Path(args.b))
    if horizon_a != horizon_b:
        raise ConfigError(f"mismatched horizons: {horizon_a} ms vs {horizon_b} ms")
    result: dict = {"horizon_ms": horizon_a, "overlaps": {}, "transitions": {"a": {}, "b": {}}}
    if args.topic_a or args.topic_b:
        topic_a, topic_b = args.topic_a or args.topic_b, args.topic_b or args.topic_a
        if topic_a not in signals_a:
            raise ConfigError(f"{args.a} has no alarm topic {topic_a!r}")
        if topic_b not in signals_b:
            raise ConfigError(f"{args.b} has no alarm topic {topic_b!r}")
        result["overlaps"][f"{topic_a}|{topic_b}"] = round(
            overlap(signals_a[topic_a], signals_b[topic_b]), 4
        )
    else:
        common = sorted(set(signals_a) & set(signals_b))
        if not common:
            raise ConfigError("logs share no alarm topics; use --topic-a/--topic-b")
        for topic in common:
            result["overlaps"][topic] = round(overlap(signals_a[topic], signals_b[topic]), 4)
    for key, signals in (("a", signals_a), ("b", signals_b)):
        for topic in sorted(signals):
            result["transitions"][key][topic] = transitions(signals[topic]).as_dict()
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    series = load_dataset(
        args.dataset,
        column=args.column,
        separator=args.separator,
        decimal_comma=args.decimal_comma,
    )
    if args.start_row:
        series = sliced(series, args.start_row)
    try:
        plan = ReplayPlan(
            message_count=args.count,
            period_ms=args.period_ms,
            jitter_pct=args.jitter_pct,
            jitter_seed=args.seed,
        )
        emissions = schedule(series, plan)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.dry_run:
        for e in emissions:
            print(json.dumps({"instant": e.instant, "topic": e.topic, "value": e.value}))
        return EXIT_OK
    from .mqtt.client import MqttClient

    host, _, port = args.broker.partition(":")
    client = MqttClient(host or "127.0.0.1", int(port or 1883), client_id="faultwire-replay")
    client.connect()
    started = time.monotonic()
    for e in emissions:
        due = started + e.instant / 1000.0 / max(args.time_scale, 1e-9)
        delay = due - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        client.publish(e.topic, format_number(e.value).encode("utf-8"), qos=args.qos)
    client.disconnect()
    print(f"replayed {len(emissions)} messages to {args.broker}")
    return EXIT_OK


def cmd_broker(args: argparse.Namespace) -> int:
    engine = None
    if args.faults:
        config = load_fault_config(args.faults)
        engine = FaultEngine(config, seed=args.seed if args.seed is not None else config.seed)
        print(f"fault injection active: {len(config.rules)} rule(s)")
    from .mqtt.server import run_broker

    print(f"starting broker on {args.host}:{args.port} (ctrl-c to stop)")
    run_broker(args.host, args.port, engine)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultwire",
        description="MQTT fault-injection testbed for self-healing IoT pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write reports")
    run.add_argument("--experiment", required=True, help="experiment name, e.g. S1E2")
    run.add_argument("--dataset", help="dataset CSV (default: bundled sample)")
    run.add_argument("--seed", type=int, default=DEFAULT_SEED)
    run.add_argument("--seeds", help="seed range A..B; one report directory per seed")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--clock", choices=["virtual", "realtime"], default="virtual")
    run.add_argument("--time-scale", type=float, default=1.0,
                     help="realtime speed-up factor (10 = 10x faster than wall time)")
    run.add_argument("--faults", help="JSON fault config overriding the built-in one")
    run.add_argument("--start-row", type=int, default=0, help="dataset slice offset")
    run.set_defaults(fn=cmd_run)

    lst = sub.add_parser("list-experiments", help="list built-in experiments")
    lst.set_defaults(fn=cmd_list_experiments)

    metrics = sub.add_parser("metrics", help="compare two messages.jsonl logs offline")
    metrics.add_argument("--a", required=True)
    metrics.add_argument("--b", required=True)
    metrics.add_argument("--topic-a", help="alarm topic in log A (default: all common topics)")
    metrics.add_argument("--topic-b", help="alarm topic in log B")
    metrics.set_defaults(fn=cmd_metrics)

    replay = sub.add_parser("replay", help="publish a dataset column over MQTT")
    replay.add_argument("--dataset", required=True)
    replay.add_argument("--column", default="NOx(GT)")
    replay.add_argument("--count", type=int, default=120)
    replay.add_argument("--period-ms", type=int, default=5000)
    replay.add_argument("--start-row", type=int, default=0)
    replay.add_argument("--separator", default=";")
    replay.add_argument("--no-decimal-comma", dest="decimal_comma", action="store_false")
    replay.add_argument("--jitter-pct", type=float, default=0.0)
    replay.add_argument("--seed", type=int, default=DEFAULT_SEED)
    replay.add_argument("--broker", default="127.0.0.1:1883")
    replay.add_argument("--qos", type=int, choices=[0, 1], default=0)
    replay.add_argument("--time-scale", type=float, default=1.0)
    replay.add_argument("--dry-run", action="store_true", help="print the schedule, do not publish")
    replay.set_defaults(fn=cmd_replay)

    broker = sub.add_parser("broker", help="serve the instrumented MQTT broker")
    broker.add_argument("--host", default="127.0.0.1")
    broker.add_argument("--port", type=int, default=1883)
    broker.add_argument("--faults", help="JSON fault config to apply to publishes")
    broker.add_argument("--seed", type=int, help="override the config seed")
    broker.set_defaults(fn=cmd_broker)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("FAULTWIRE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FaultConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failure; keep the traceback out of stderr
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
