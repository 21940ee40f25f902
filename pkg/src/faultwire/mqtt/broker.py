"""Broker core: sessions, subscriptions and topic routing.

The core is a plain synchronous state machine driven by whoever owns the
event loop (the virtual-clock harness, or the asyncio TCP server). All
routing state is mutated only through its methods, which the owner must
call from a single logical thread.

A publish travels: client -> interceptor -> route -> subscriber callbacks.
The interceptor hook is where fault injection plugs in; without one every
publish passes through unchanged. Interceptor emissions due in the future
are scheduled on the injected clock and routed when due.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Protocol

from . import packets
from .topics import TopicError, topic_matches, validate_filter, validate_topic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Message:
    """A routed application message."""

    topic: str
    payload: bytes
    publish_instant: int = 0
    qos: int = 0

    def with_topic(self, topic: str) -> "Message":
        return replace(self, topic=topic)


@dataclass(frozen=True)
class Subscription:
    client_id: str
    topic_filter: str
    qos: int = 0


def route(subscriptions: Iterable[Subscription], message: Message) -> list[tuple[str, int]]:
    """Resolve a publish to `(client_id, effective_qos)` deliveries.

    One delivery per matching client, in the order clients first matched;
    a client with several matching filters gets the highest matching
    subscription qos. Effective qos is min(publish qos, subscription qos).
    """
    order: list[str] = []
    best: dict[str, int] = {}
    for sub in subscriptions:
        if not topic_matches(sub.topic_filter, message.topic):
            continue
        if sub.client_id not in best:
            order.append(sub.client_id)
            best[sub.client_id] = sub.qos
        else:
            best[sub.client_id] = max(best[sub.client_id], sub.qos)
    return [(cid, min(message.qos, best[cid])) for cid in order]


class Clock(Protocol):
    """Scheduling surface the core needs: current instant plus timers."""

    def now(self) -> int: ...

    def call_at(self, instant: int, fn: Callable[[], None]) -> object: ...


class _ImmediateClock:
    """Degenerate clock for interceptor-free standalone use."""

    def now(self) -> int:
        return 0

    def call_at(self, instant, fn):
        fn()


class Interceptor(Protocol):
    """Publish-path hook. Returns emissions as (message, due_instant) pairs."""

    def intercept(self, message: Message, now: int) -> list[tuple[Message, int]]: ...

    def deadline(self) -> int | None: ...

    def fire_due(self, now: int) -> list[tuple[Message, int]]: ...


# deliver callback: (message, effective_qos) -> None
DeliverFn = Callable[[Message, int], None]


@dataclass
class _Session:
    client_id: str
    deliver: DeliverFn
    on_takeover: Callable[[], None] | None = None


class BrokerCore:
    """Session/subscription state and the serialized publish path.

    QoS is limited to 0 and 1; QoS 2, retained messages, wills and
    persistent sessions are refused (the experiments only need routed
    QoS 0/1 publishes). PUBACK emission for QoS 1 publishers is the
    transport layer's job; `publish` returning normally means the publish
    was accepted exactly once.
    """

    def __init__(self, clock: Clock | None = None, interceptor: Interceptor | None = None):
        self._clock: Clock = clock if clock is not None else _ImmediateClock()
        self._interceptor = interceptor
        self._sessions: dict[str, _Session] = {}
        self._subscriptions: list[Subscription] = []
        self._observers: list[Callable[[Message], None]] = []
        self._timer_armed_at: int | None = None

    # -- session management -------------------------------------------------

    def connect(
        self,
        client_id: str,
        deliver: DeliverFn,
        *,
        clean_session: bool = True,
        protocol_level: int = 4,
        will: packets.Will | None = None,
        on_takeover: Callable[[], None] | None = None,
    ) -> int:
        """Register a client session; returns a CONNACK return code.

        Unsupported features are refused: wrong protocol level with 0x01,
        wills and persistent sessions with 0x03 (3.1.1 has no dedicated
        "feature unsupported" code; server-unavailable is the closest).
        """
        if protocol_level != 4:
            return packets.CONNACK_BAD_PROTOCOL
        if not client_id:
            return packets.CONNACK_ID_REJECTED
        if will is not None or not clean_session:
            return packets.CONNACK_UNAVAILABLE
        existing = self._sessions.get(client_id)
        if existing is not None:
            logger.info("client %s reconnected, dropping old session", client_id)
            self._drop_client(client_id)
            if existing.on_takeover:
                existing.on_takeover()
        self._sessions[client_id] = _Session(client_id, deliver, on_takeover)
        return packets.CONNACK_ACCEPTED

    def disconnect(self, client_id: str) -> None:
        self._drop_client(client_id)

    def _drop_client(self, client_id: str) -> None:
        self._sessions.pop(client_id, None)
        self._subscriptions = [s for s in self._subscriptions if s.client_id != client_id]

    def subscribe(self, client_id: str, topics: Iterable[tuple[str, int]]) -> list[int]:
        """Apply subscription requests; returns one SUBACK code per filter.

        QoS 2 requests and invalid filters fail with 0x80. Re-subscribing
        an existing filter updates its qos in place, keeping its original
        position in the routing order.
        """
        if client_id not in self._sessions:
            raise KeyError(f"unknown client {client_id!r}")
        codes = []
        for topic_filter, qos in topics:
            if qos not in (0, 1):
                codes.append(packets.SUBACK_FAILURE)
                continue
            try:
                validate_filter(topic_filter)
            except TopicError:
                codes.append(packets.SUBACK_FAILURE)
                continue
            for i, sub in enumerate(self._subscriptions):
                if sub.client_id == client_id and sub.topic_filter == topic_filter:
                    self._subscriptions[i] = Subscription(client_id, topic_filter, qos)
                    break
            else:
                self._subscriptions.append(Subscription(client_id, topic_filter, qos))
            codes.append(qos)
        return codes

    def unsubscribe(self, client_id: str, topics: Iterable[str]) -> None:
        drop = set(topics)
        self._subscriptions = [
            s
            for s in self._subscriptions
            if not (s.client_id == client_id and s.topic_filter in drop)
        ]

    def subscriptions(self) -> list[Subscription]:
        return list(self._subscriptions)

    # -- publish path --------------------------------------------------------

    def add_observer(self, fn: Callable[[Message], None]) -> None:
        """Observe every routed message (used by the harness message log)."""
        self._observers.append(fn)

    def publish(self, topic: str, payload: bytes, qos: int = 0) -> None:
        """Accept a publish, run it through the interceptor, route emissions."""
        validate_topic(topic)
        if qos not in (0, 1):
            raise ValueError(f"qos must be 0 or 1, got {qos}")
        now = self._clock.now()
        message = Message(topic=topic, payload=payload, publish_instant=now, qos=qos)
        if self._interceptor is None:
            self._dispatch(message)
            return
        for emitted, due in self._interceptor.intercept(message, now):
            self._schedule_emission(emitted, due, now)
        self._arm_interceptor_timer()

    def _schedule_emission(self, message: Message, due: int, now: int) -> None:
        if due <= now:
            self._dispatch(message)
        else:
            self._clock.call_at(due, lambda: self._dispatch(message))

    def _dispatch(self, message: Message) -> None:
        for fn in self._observers:
            fn(message)
        for client_id, effective_qos in route(self._subscriptions, message):
            session = self._sessions.get(client_id)
            if session is not None:
                session.deliver(message, effective_qos)

    # -- interceptor timers (buffer operator timeouts) ------------------------

    def _arm_interceptor_timer(self) -> None:
        if self._interceptor is None:
            return
        deadline = self._interceptor.deadline()
        if deadline is None:
            self._timer_armed_at = None
            return
        if self._timer_armed_at is not None and self._timer_armed_at <= deadline:
            return
        self._timer_armed_at = deadline
        self._clock.call_at(deadline, lambda: self._on_interceptor_timer(deadline))

    def _on_interceptor_timer(self, armed_for: int) -> None:
        if self._timer_armed_at != armed_for:
            return  # stale wakeup; a newer timer supersedes it
        self._timer_armed_at = None
        now = self._clock.now()
        for emitted, due in self._interceptor.fire_due(now):
            self._schedule_emission(emitted, due, now)
        self._arm_interceptor_timer()
