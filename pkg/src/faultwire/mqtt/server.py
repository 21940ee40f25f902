"""Asyncio TCP front end for the broker core.

Each connection task decodes packets off its socket and forwards them to
a single dispatch coroutine through one queue, so all routing state is
mutated by exactly one task; per-connection writers are only touched from
that task as well. Keep-alive is enforced here (1.5x grace) since this is
the wall-clock deployment; the virtual-clock harness bypasses this module
entirely.
"""

from __future__ import annotations

import asyncio
import logging
import time

from ..faults.engine import FaultEngine
from . import packets
from .broker import BrokerCore, Message

logger = logging.getLogger(__name__)


class _WallClock:
    """Millisecond wall clock for the broker core in real-time mode."""

    def __init__(self, loop: asyncio.AbstractEventLoop):
        self._loop = loop
        self._t0 = loop.time()

    def now(self) -> int:
        return int((self._loop.time() - self._t0) * 1000)

    def call_at(self, instant: int, fn) -> object:
        return self._loop.call_at(self._t0 + instant / 1000.0, fn)


class _Connection:
    def __init__(self, server: "BrokerServer", reader, writer):
        self.server = server
        self.reader = reader
        self.writer = writer
        self.client_id: str | None = None
        self.keep_alive = 0
        self.last_seen = time.monotonic()
        self.closing = False

    def send(self, packet: packets.Packet) -> None:
        if not self.closing:
            self.writer.write(packets.encode_packet(packet))

    def close(self) -> None:
        self.closing = True
        self.writer.close()


class BrokerServer:
    """MQTT 3.1.1 listener with optional in-line fault injection."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 1883,
        engine: FaultEngine | None = None,
    ):
        self.host = host
        self.port = port
        self.engine = engine
        self.core: BrokerCore | None = None
        self._server: asyncio.AbstractServer | None = None
        self._commands: asyncio.Queue = asyncio.Queue()
        self._packet_ids: dict[str, int] = {}
        self._connections: set[_Connection] = set()

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        self.core = BrokerCore(clock=_WallClock(loop), interceptor=self.engine)
        self._dispatcher = asyncio.ensure_future(self._dispatch_loop())
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info("broker listening on %s:%d", self.host, self.port)

    async def serve_forever(self) -> None:
        await self._server.serve_forever()

    async def stop(self) -> None:
        self._server.close()
        await self._server.wait_closed()
        self._dispatcher.cancel()
        for conn in list(self._connections):
            conn.close()
            try:
                await conn.writer.wait_closed()
            except (ConnectionError, asyncio.CancelledError):
                pass

    async def _dispatch_loop(self) -> None:
        while True:
            conn, packet = await self._commands.get()
            try:
                self._handle_packet(conn, packet)
            except Exception:
                logger.exception("error handling %s; closing connection", type(packet).__name__)
                conn.close()

    async def _handle(self, reader, writer) -> None:
        conn = _Connection(self, reader, writer)
        self._connections.add(conn)
        buffer = bytearray()
        try:
            while True:
                timeout = conn.keep_alive * 1.5 if conn.keep_alive else None
                try:
                    chunk = await asyncio.wait_for(reader.read(65536), timeout)
                except asyncio.TimeoutError:
                    logger.info("keep-alive expired for %s", conn.client_id)
                    break
                if not chunk:
                    break
                conn.last_seen = time.monotonic()
                buffer.extend(chunk)
                while True:
                    try:
                        decoded = packets.decode_packet(buffer)
                    except packets.DecodeError as exc:
                        logger.warning("protocol violation from %s: %s", conn.client_id, exc)
                        raise
                    if decoded is None:
                        break
                    packet, consumed = decoded
                    del buffer[:consumed]
                    await self._commands.put((conn, packet))
                await self.writer_drain(conn)
        except (packets.DecodeError, ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self._connections.discard(conn)
            if conn.client_id is not None:
                await self._commands.put((conn, Disconnecting(conn.client_id)))
            conn.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass

    async def writer_drain(self, conn: _Connection) -> None:
        try:
            await conn.writer.drain()
        except ConnectionError:
            conn.close()

    # Runs on the dispatch task; the only place core state is touched.
    def _handle_packet(self, conn: _Connection, packet) -> None:
        if isinstance(packet, Disconnecting):
            self.core.disconnect(packet.client_id)
            return
        if isinstance(packet, packets.Connect):
            code = self.core.connect(
                packet.client_id,
                deliver=self._make_deliver(conn),
                clean_session=packet.clean_session,
                protocol_level=packet.protocol_level,
                will=packet.will,
                on_takeover=conn.close,
            )
            conn.send(packets.Connack(session_present=False, return_code=code))
            if code != packets.CONNACK_ACCEPTED:
                conn.close()
                return
            conn.client_id = packet.client_id
            conn.keep_alive = packet.keep_alive
            return
        if conn.client_id is None:
            logger.warning("packet before CONNECT; closing")
            conn.close()
            return
        if isinstance(packet, packets.Publish):
            if packet.retain:
                logger.warning("retained publish from %s unsupported; closing", conn.client_id)
                conn.close()
                return
            self.core.publish(packet.topic, packet.payload, qos=packet.qos)
            if packet.qos == 1:
                conn.send(packets.Puback(packet.packet_id))
            return
        if isinstance(packet, packets.Subscribe):
            codes = self.core.subscribe(conn.client_id, packet.topics)
            conn.send(packets.Suback(packet_id=packet.packet_id, return_codes=tuple(codes)))
            return
        if isinstance(packet, packets.Unsubscribe):
            self.core.unsubscribe(conn.client_id, packet.topics)
            conn.send(packets.Unsuback(packet.packet_id))
            return
        if isinstance(packet, packets.Pingreq):
            conn.send(packets.Pingresp())
            return
        if isinstance(packet, packets.Disconnect):
            self.core.disconnect(conn.client_id)
            conn.close()
            return
        if isinstance(packet, packets.Puback):
            return  # QoS 1 subscriber ack; no retransmission state to clear
        logger.warning("unexpected %s from %s", type(packet).__name__, conn.client_id)
        conn.close()

    def _make_deliver(self, conn: _Connection):
        def deliver(message: Message, effective_qos: int) -> None:
            packet_id = None
            if effective_qos == 1:
                client = conn.client_id or ""
                packet_id = self._packet_ids.get(client, 0) % 0xFFFF + 1
                self._packet_ids[client] = packet_id
            conn.send(
                packets.Publish(
                    topic=message.topic,
                    payload=message.payload,
                    qos=effective_qos,
                    packet_id=packet_id,
                )
            )

        return deliver


class Disconnecting:
    """Internal command: a connection's socket went away."""

    def __init__(self, client_id: str):
        self.client_id = client_id


def run_broker(
    host: str = "127.0.0.1", port: int = 1883, engine: FaultEngine | None = None
) -> None:
    """Blocking entry point used by the CLI."""

    async def main() -> None:
        server = BrokerServer(host, port, engine)
        await server.start()
        await server.serve_forever()

    asyncio.run(main())
