"""Small blocking MQTT 3.1.1 client.

Enough for the replay tool and for poking at a running broker: connect,
subscribe, publish (QoS 0/1) and receive. A background thread reads the
socket; received publishes land in a queue consumed via `receive()`.
"""

from __future__ import annotations

import queue
import socket
import threading

from . import packets


class MqttClientError(RuntimeError):
    pass


class MqttClient:
    def __init__(self, host: str, port: int, client_id: str, timeout: float = 10.0):
        self.host = host
        self.port = port
        self.client_id = client_id
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._acks: queue.Queue = queue.Queue()
        self._publishes: queue.Queue = queue.Queue()
        self._reader: threading.Thread | None = None
        self._packet_id = 0
        self._lock = threading.Lock()

    def connect(self, keep_alive: int = 0) -> None:
        self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        self._send(packets.Connect(client_id=self.client_id, keep_alive=keep_alive))
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        ack = self._wait_ack(packets.Connack)
        if ack.return_code != packets.CONNACK_ACCEPTED:
            raise MqttClientError(f"connection refused, return code {ack.return_code}")

    def subscribe(self, topic_filter: str, qos: int = 0) -> int:
        pid = self._next_packet_id()
        self._send(packets.Subscribe(packet_id=pid, topics=((topic_filter, qos),)))
        ack = self._wait_ack(packets.Suback)
        code = ack.return_codes[0]
        if code == packets.SUBACK_FAILURE:
            raise MqttClientError(f"subscription to {topic_filter!r} refused")
        return code

    def publish(self, topic: str, payload: bytes, qos: int = 0) -> None:
        if qos == 0:
            self._send(packets.Publish(topic=topic, payload=payload, qos=0))
            return
        pid = self._next_packet_id()
        self._send(packets.Publish(topic=topic, payload=payload, qos=1, packet_id=pid))
        ack = self._wait_ack(packets.Puback)
        if ack.packet_id != pid:
            raise MqttClientError(f"PUBACK for {ack.packet_id}, expected {pid}")

    def receive(self, timeout: float | None = None) -> packets.Publish | None:
        """Next received publish, or None on timeout."""
        try:
            return self._publishes.get(timeout=timeout if timeout is not None else self.timeout)
        except queue.Empty:
            return None

    def ping(self) -> None:
        self._send(packets.Pingreq())
        self._wait_ack(packets.Pingresp)

    def disconnect(self) -> None:
        if self._sock is not None:
            try:
                self._send(packets.Disconnect())
            except OSError:
                pass
            self._sock.close()
            self._sock = None

    def _next_packet_id(self) -> int:
        self._packet_id = self._packet_id % 0xFFFF + 1
        return self._packet_id

    def _send(self, packet: packets.Packet) -> None:
        if self._sock is None:
            raise MqttClientError("not connected")
        with self._lock:
            self._sock.sendall(packets.encode_packet(packet))

    def _wait_ack(self, kind):
        try:
            packet = self._acks.get(timeout=self.timeout)
        except queue.Empty:
            raise MqttClientError(f"timed out waiting for {kind.__name__}") from None
        if isinstance(packet, Exception):
            raise MqttClientError(f"connection failed: {packet}")
        if not isinstance(packet, kind):
            raise MqttClientError(f"expected {kind.__name__}, got {type(packet).__name__}")
        return packet

    def _read_loop(self) -> None:
        buffer = bytearray()
        sock = self._sock
        try:
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    # EOF: fail any waiter fast instead of timing out.
                    self._acks.put(ConnectionError("connection closed by broker"))
                    break
                buffer.extend(chunk)
                while True:
                    decoded = packets.decode_packet(buffer)
                    if decoded is None:
                        break
                    packet, consumed = decoded
                    del buffer[:consumed]
                    if isinstance(packet, packets.Publish):
                        self._publishes.put(packet)
                        if packet.qos == 1:
                            self._send(packets.Puback(packet.packet_id))
                    else:
                        self._acks.put(packet)
        except (OSError, packets.DecodeError) as exc:
            self._acks.put(exc)
