"""Fault-injection rules and their JSON configuration format.

A configuration document looks like:

    {
      "seed": 42,
      "rules": [
        {
          "topic": "sensors/3/nox",
          "startAfter": 10,
          "stopAfter": 110,
          "operators": [{"type": "map", "expr": "1000"}]
        }
      ]
    }

Rule topics are exact-match (no wildcards). `startAfter`/`stopAfter`
count matching messages: the first `startAfter` pass through untouched,
messages startAfter+1 .. stopAfter are faulted, everything after passes
through again. Omit `stopAfter` for an unbounded window. Invalid
documents are rejected atomically; nothing is loaded on error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .expr import Expr, ExprSyntaxError, parse_expr


class FaultConfigError(ValueError):
    """Configuration document rejected."""


@dataclass(frozen=True)
class MapOp:
    """Rewrite numeric payloads with an expression, gated by a probability."""

    expr_text: str
    expr: Expr
    probability: float = 1.0


@dataclass(frozen=True)
class RandomDelayOp:
    """Delay each message by a uniform draw in [min_ms, max_ms]."""

    min_ms: int
    max_ms: int


@dataclass(frozen=True)
class BufferOp:
    """Hold messages, releasing them all at once on count and/or timeout."""

    count: int | None = None
    timeout_ms: int | None = None


@dataclass(frozen=True)
class RandomDropOp:
    """Drop each message with the given probability."""

    probability: float


@dataclass(frozen=True)
class DuplicateOp:
    """Emit each message twice, the copy delayed by delay_ms."""

    delay_ms: int


Operator = MapOp | RandomDelayOp | BufferOp | RandomDropOp | DuplicateOp


@dataclass
class FaultRule:
    """One injection rule: exact topic, operator pipeline, message window."""

    topic: str
    operators: list[Operator]
    start_after: int = 0
    stop_after: int | None = None
    counter: int = field(default=0, compare=False)


@dataclass(frozen=True)
class FaultConfig:
    rules: tuple[FaultRule, ...]
    seed: int | None = None


def rule_active(rule: FaultRule) -> bool:
    """True iff the last counted matching message falls inside the window.

    Call after incrementing `rule.counter`; active means
    start_after < counter <= stop_after.
    """
    if rule.counter <= rule.start_after:
        return False
    return rule.stop_after is None or rule.counter <= rule.stop_after


def _fail(where: str, reason: str) -> None:
    raise FaultConfigError(f"{where}: {reason}")


def _get_number(spec: Mapping[str, Any], key: str, where: str) -> float:
    value = spec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(where, f"{key!r} must be a number")
    return value


def _check_keys(spec: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(spec) - allowed
    if unknown:
        _fail(where, f"unknown keys {sorted(unknown)}")


def _compile_operator(spec: Any, where: str) -> Operator:
    if not isinstance(spec, Mapping):
        _fail(where, "operator must be an object")
    kind = spec.get("type")
    if kind == "map":
        _check_keys(spec, {"type", "expr", "probability"}, where)
        text = spec.get("expr")
        if not isinstance(text, str):
            _fail(where, "map requires an 'expr' string")
        try:
            tree = parse_expr(text)
        except ExprSyntaxError as exc:
            _fail(where, f"malformed expression {text!r}: {exc}")
        probability = float(_get_number(spec, "probability", where)) if "probability" in spec else 1.0
        if not 0.0 <= probability <= 1.0:
            _fail(where, f"probability {probability} outside [0, 1]")
        return MapOp(expr_text=text, expr=tree, probability=probability)
    if kind == "randomDelay":
        _check_keys(spec, {"type", "minMs", "maxMs"}, where)
        if "minMs" not in spec or "maxMs" not in spec:
            _fail(where, "randomDelay requires 'minMs' and 'maxMs'")
        min_ms = int(_get_number(spec, "minMs", where))
        max_ms = int(_get_number(spec, "maxMs", where))
        if not 0 <= min_ms <= max_ms:
            _fail(where, f"need 0 <= minMs <= maxMs, got {min_ms}..{max_ms}")
        return RandomDelayOp(min_ms=min_ms, max_ms=max_ms)
    if kind == "buffer":
        _check_keys(spec, {"type", "count", "timeoutMs"}, where)
        count = None
        if spec.get("count") is not None:
            count = int(_get_number(spec, "count", where))
            if count < 1:
                _fail(where, f"buffer count must be >= 1, got {count}")
        timeout_ms = None
        if spec.get("timeoutMs") is not None:
            timeout_ms = int(_get_number(spec, "timeoutMs", where))
            if timeout_ms < 1:
                _fail(where, f"buffer timeoutMs must be >= 1, got {timeout_ms}")
        if count is None and timeout_ms is None:
            _fail(where, "buffer needs a count and/or a timeoutMs bound")
        return BufferOp(count=count, timeout_ms=timeout_ms)
    if kind == "randomDrop":
        _check_keys(spec, {"type", "probability"}, where)
        if "probability" not in spec:
            _fail(where, "randomDrop requires 'probability'")
        probability = float(_get_number(spec, "probability", where))
        if not 0.0 <= probability <= 1.0:
            _fail(where, f"probability {probability} outside [0, 1]")
        return RandomDropOp(probability=probability)
    if kind == "duplicate":
        _check_keys(spec, {"type", "delayMs"}, where)
        if "delayMs" not in spec:
            _fail(where, "duplicate requires 'delayMs'")
        delay_ms = int(_get_number(spec, "delayMs", where))
        if delay_ms < 0:
            _fail(where, f"delayMs must be >= 0, got {delay_ms}")
        return DuplicateOp(delay_ms=delay_ms)
    _fail(where, f"unknown operator name {kind!r}")


def compile_config(doc: Mapping[str, Any]) -> FaultConfig:
    """Compile a parsed JSON document into a FaultConfig.

    Rules come out in document order. Raises FaultConfigError on any
    invalid entry (atomic: no partial rule list escapes).
    """
    if not isinstance(doc, Mapping):
        raise FaultConfigError("configuration must be a JSON object")
    _check_keys(doc, {"seed", "rules"}, "config")
    seed = None
    if doc.get("seed") is not None:
        seed = doc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise FaultConfigError("seed must be an unsigned 64-bit integer")
    raw_rules = doc.get("rules")
    if not isinstance(raw_rules, list):
        raise FaultConfigError("config requires a 'rules' array")
    rules: list[FaultRule] = []
    seen_topics: set[str] = set()
    for i, raw in enumerate(raw_rules):
        where = f"rules[{i}]"
        if not isinstance(raw, Mapping):
            _fail(where, "rule must be an object")
        _check_keys(raw, {"topic", "operators", "startAfter", "stopAfter"}, where)
        topic = raw.get("topic")
        if not isinstance(topic, str) or not topic:
            _fail(where, "rule requires a non-empty 'topic'")
        if "+" in topic or "#" in topic:
            _fail(where, f"wildcard topics unsupported in rules: {topic!r}")
        if topic in seen_topics:
            _fail(where, f"multiple rules for topic {topic!r}")
        seen_topics.add(topic)
        raw_ops = raw.get("operators")
        if not isinstance(raw_ops, list) or not raw_ops:
            _fail(where, "rule requires a non-empty 'operators' array")
        operators = [
            _compile_operator(op, f"{where}.operators[{j}]") for j, op in enumerate(raw_ops)
        ]
        start_after = 0
        if "startAfter" in raw:
            start_after = int(_get_number(raw, "startAfter", where))
            if start_after < 0:
                _fail(where, f"startAfter must be >= 0, got {start_after}")
        stop_after = None
        if raw.get("stopAfter") is not None:
            stop_after = int(_get_number(raw, "stopAfter", where))
            if start_after >= stop_after:
                _fail(where, f"need startAfter < stopAfter, got {start_after} >= {stop_after}")
        rules.append(
            FaultRule(topic=topic, operators=operators, start_after=start_after, stop_after=stop_after)
        )
    return FaultConfig(rules=tuple(rules), seed=seed)


def load_fault_config(path: str | Path) -> FaultConfig:
    """Read and compile a JSON fault configuration file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FaultConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise FaultConfigError(f"{path} is not valid JSON: {exc}") from None
    return compile_config(doc)
