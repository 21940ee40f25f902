"""Pipeline execution: applying fault rules to intercepted publishes.

Each rule owns one seeded random stream (derived from the global seed and
the rule's index) and a fixed draw order: operators in pipeline order, one
draw per message per randomized operator. Identical (config, seed, input
sequence) therefore produces identical emissions, instant for instant.

Buffer operators hold messages across calls; their timeout flushes are
driven externally via `deadline()` / `fire_due(now)`, and flushed messages
continue through the operators downstream of the buffer.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from ..mqtt.broker import Message
from ..rng import make_stream
from .expr import ExprEvalError, eval_expr
from .model import (
    BufferOp,
    DuplicateOp,
    FaultConfig,
    FaultRule,
    MapOp,
    RandomDelayOp,
    RandomDropOp,
    rule_active,
)

logger = logging.getLogger(__name__)

RULE_STREAM_TAG = 0x52554C45  # distinguishes rule streams from other substreams


@dataclass(frozen=True)
class Emission:
    """A message due for routing at a (possibly future) instant."""

    message: Message
    due_instant: int


def format_number(x: float) -> str:
    """Payload text for a numeric value; integral values lose the '.0'."""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def parse_numeric_payload(payload: bytes) -> float | None:
    try:
        return float(payload.decode("utf-8").strip())
    except (UnicodeDecodeError, ValueError):
        return None


@dataclass
class _BufferState:
    held: list[Message] = field(default_factory=list)
    deadline: int | None = None


class RulePipeline:
    """Runtime for one rule: operator state plus the rule's random stream."""

    def __init__(self, rule: FaultRule, rng: random.Random):
        self.rule = rule
        self.rng = rng
        self._buffers = {
            i: _BufferState() for i, op in enumerate(rule.operators) if isinstance(op, BufferOp)
        }

    def apply(self, message: Message, now: int) -> list[Emission]:
        """Run `message` through the full pipeline (rule must be active)."""
        return self._run([Emission(message, now)], 0, now)

    def deadline(self) -> int | None:
        pending = [s.deadline for s in self._buffers.values() if s.deadline is not None]
        return min(pending) if pending else None

    def fire_due(self, now: int) -> list[Emission]:
        """Flush buffers whose timeout has expired; returns downstream emissions."""
        out: list[Emission] = []
        for index in sorted(self._buffers):
            state = self._buffers[index]
            if state.deadline is not None and state.deadline <= now:
                out.extend(self._run(self._flush(state, now), index + 1, now))
        return out

    def held_count(self) -> int:
        return sum(len(s.held) for s in self._buffers.values())

    def _flush(self, state: _BufferState, instant: int) -> list[Emission]:
        flushed = [Emission(m, instant) for m in state.held]
        state.held.clear()
        state.deadline = None
        return flushed

    def _run(self, pending: list[Emission], first_op: int, now: int) -> list[Emission]:
        for index in range(first_op, len(self.rule.operators)):
            op = self.rule.operators[index]
            if isinstance(op, MapOp):
                pending = [self._map_one(op, e) for e in pending]
            elif isinstance(op, RandomDropOp):
                pending = [e for e in pending if self.rng.random() >= op.probability]
            elif isinstance(op, RandomDelayOp):
                pending = [
                    Emission(
                        e.message,
                        e.due_instant
                        + int(round(op.min_ms + (op.max_ms - op.min_ms) * self.rng.random())),
                    )
                    for e in pending
                ]
            elif isinstance(op, DuplicateOp):
                pending = [
                    out
                    for e in pending
                    for out in (e, Emission(e.message, e.due_instant + op.delay_ms))
                ]
            elif isinstance(op, BufferOp):
                state = self._buffers[index]
                for e in pending:
                    if not state.held and op.timeout_ms is not None:
                        state.deadline = now + op.timeout_ms
                    state.held.append(e.message)
                if op.count is not None and len(state.held) >= op.count:
                    pending = self._flush(state, now)
                else:
                    pending = []
        return pending

    def _map_one(self, op: MapOp, emission: Emission) -> Emission:
        # Gate draw first (and only for p < 1) so the stream position never
        # depends on how many random() calls the expression makes.
        if op.probability < 1.0 and self.rng.random() >= op.probability:
            return emission
        value = parse_numeric_payload(emission.message.payload)
        if value is None:
            logger.warning(
                "map on %s: non-numeric payload %r passed through unchanged",
                emission.message.topic,
                emission.message.payload[:40],
            )
            return emission
        try:
            result = eval_expr(op.expr, value, self.rng)
        except ExprEvalError as exc:
            logger.warning("map expression %r failed (%s); message unchanged", op.expr_text, exc)
            return emission
        payload = format_number(result).encode("utf-8")
        message = Message(
            topic=emission.message.topic,
            payload=payload,
            publish_instant=emission.message.publish_instant,
            qos=emission.message.qos,
        )
        return Emission(message, emission.due_instant)


def apply_pipeline(
    pipeline: RulePipeline, message: Message, now: int
) -> list[Emission]:
    """Apply an active rule's pipeline to one message (thin façade)."""
    return pipeline.apply(message, now)


class FaultEngine:
    """Applies the first matching rule to each intercepted publish.

    Satisfies the broker's interceptor protocol: emissions come back as
    (message, due_instant) pairs, and buffer timeouts surface through
    `deadline()` / `fire_due(now)`.
    """

    def __init__(self, config: FaultConfig, seed: int | None = None):
        resolved = seed if seed is not None else (config.seed if config.seed is not None else 0)
        self.seed = resolved
        self.pipelines = [
            RulePipeline(rule, make_stream(resolved, RULE_STREAM_TAG, index))
            for index, rule in enumerate(config.rules)
        ]
        self._by_topic: dict[str, RulePipeline] = {}
        for p in self.pipelines:
            self._by_topic.setdefault(p.rule.topic, p)

    def intercept(self, message: Message, now: int) -> list[tuple[Message, int]]:
        """First exact-topic rule applies; otherwise the message passes through.

        The matching rule's counter advances even outside its window.
        """
        pipeline = self._by_topic.get(message.topic)
        if pipeline is None:
            return [(message, now)]
        pipeline.rule.counter += 1
        if not rule_active(pipeline.rule):
            return [(message, now)]
        return [(e.message, e.due_instant) for e in pipeline.apply(message, now)]

    def deadline(self) -> int | None:
        pending = [d for p in self.pipelines if (d := p.deadline()) is not None]
        return min(pending) if pending else None

    def fire_due(self, now: int) -> list[tuple[Message, int]]:
        out = []
        for pipeline in self.pipelines:
            out.extend((e.message, e.due_instant) for e in pipeline.fire_due(now))
        return out

    def held_count(self) -> int:
        return sum(p.held_count() for p in self.pipelines)
