"""MQTT 3.1.1 packet types and wire codec.

Covers the packet subset a QoS 0/1 broker needs: CONNECT/CONNACK,
SUBSCRIBE/SUBACK, UNSUBSCRIBE/UNSUBACK, PUBLISH/PUBACK, PINGREQ/PINGRESP
and DISCONNECT. Encoding is bit-exact per the public MQTT 3.1.1
specification for these packets; `decode_packet(encode_packet(p))`
round-trips every valid packet.

Decode errors are connection-fatal: a broker that hits one must close the
offending connection. An incomplete frame is not an error; `decode_packet`
returns None until the full frame is buffered.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

DEFAULT_MAX_PAYLOAD = 256 * 1024
# Decode guard: largest remaining-length we accept before declaring the
# stream hostile (payload cap plus generous header room).
MAX_REMAINING_LENGTH = DEFAULT_MAX_PAYLOAD + 64 * 1024

CONNECT, CONNACK, PUBLISH, PUBACK = 1, 2, 3, 4
SUBSCRIBE, SUBACK, UNSUBSCRIBE, UNSUBACK = 8, 9, 10, 11
PINGREQ, PINGRESP, DISCONNECT = 12, 13, 14

# CONNACK return codes (MQTT 3.1.1 table 3.1).
CONNACK_ACCEPTED = 0x00
CONNACK_BAD_PROTOCOL = 0x01
CONNACK_ID_REJECTED = 0x02
CONNACK_UNAVAILABLE = 0x03
SUBACK_FAILURE = 0x80


class MqttError(Exception):
    """Base class for codec errors."""


class EncodeError(MqttError):
    """Packet cannot be encoded (invalid field or oversize payload)."""


class DecodeError(MqttError):
    """Malformed or unsupported bytes; the connection must be closed."""


def _check_topicish(label: str, value: str) -> None:
    if not isinstance(value, str) or not value:
        raise ValueError(f"{label} must be a non-empty string")
    if "\x00" in value:
        raise ValueError(f"{label} must not contain NUL")


@dataclass(frozen=True)
class Will:
    """Last-will message carried by CONNECT (parsed but rejected by the broker)."""

    topic: str
    payload: bytes = b""
    qos: int = 0
    retain: bool = False

    def __post_init__(self):
        _check_topicish("will topic", self.topic)
        if self.qos not in (0, 1, 2):
            raise ValueError(f"will qos must be 0..2, got {self.qos}")


@dataclass(frozen=True)
class Connect:
    client_id: str
    clean_session: bool = True
    keep_alive: int = 0
    protocol_level: int = 4
    will: Will | None = None
    username: str | None = None
    password: bytes | None = None

    def __post_init__(self):
        if not 0 <= self.keep_alive <= 0xFFFF:
            raise ValueError("keep_alive out of range")
        if self.password is not None and self.username is None:
            raise ValueError("password requires username")


@dataclass(frozen=True)
class Connack:
    session_present: bool = False
    return_code: int = CONNACK_ACCEPTED

    def __post_init__(self):
        if not 0 <= self.return_code <= 5:
            raise ValueError(f"invalid CONNACK return code {self.return_code}")


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes = b""
    qos: int = 0
    packet_id: int | None = None
    dup: bool = False
    retain: bool = False

    def __post_init__(self):
        _check_topicish("publish topic", self.topic)
        if "+" in self.topic or "#" in self.topic:
            raise ValueError(f"publish topic {self.topic!r} must not contain wildcards")
        if self.qos not in (0, 1):
            raise ValueError(f"publish qos must be 0 or 1, got {self.qos}")
        if self.qos == 0 and self.packet_id is not None:
            raise ValueError("qos 0 publish must not carry a packet id")
        if self.qos == 1 and not (
            isinstance(self.packet_id, int) and 1 <= self.packet_id <= 0xFFFF
        ):
            raise ValueError("qos 1 publish requires a packet id in 1..65535")


@dataclass(frozen=True)
class Puback:
    packet_id: int


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    topics: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "topics", tuple((str(t), int(q)) for t, q in self.topics))
        if not self.topics:
            raise ValueError("SUBSCRIBE requires at least one topic filter")
        for topic_filter, qos in self.topics:
            _check_topicish("topic filter", topic_filter)
            if qos not in (0, 1, 2):
                raise ValueError(f"requested qos must be 0..2, got {qos}")


@dataclass(frozen=True)
class Suback:
    packet_id: int
    return_codes: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "return_codes", tuple(int(c) for c in self.return_codes))
        if not self.return_codes:
            raise ValueError("SUBACK requires at least one return code")
        for code in self.return_codes:
            if code not in (0, 1, 2, SUBACK_FAILURE):
                raise ValueError(f"invalid SUBACK return code {code:#x}")


@dataclass(frozen=True)
class Unsubscribe:
    packet_id: int
    topics: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "topics", tuple(str(t) for t in self.topics))
        if not self.topics:
            raise ValueError("UNSUBSCRIBE requires at least one topic filter")
        for topic_filter in self.topics:
            _check_topicish("topic filter", topic_filter)


@dataclass(frozen=True)
class Unsuback:
    packet_id: int


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


Packet = (
    Connect
    | Connack
    | Publish
    | Puback
    | Subscribe
    | Suback
    | Unsubscribe
    | Unsuback
    | Pingreq
    | Pingresp
    | Disconnect
)


def _encode_varint(n: int) -> bytes:
    if not 0 <= n <= 268_435_455:
        raise EncodeError(f"remaining length {n} out of range")
    out = bytearray()
    while True:
        byte = n % 128
        n //= 128
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _encode_string(s: str) -> bytes:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise EncodeError("string exceeds 65535 bytes")
    return struct.pack("!H", len(data)) + data


def _encode_binary(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise EncodeError("binary field exceeds 65535 bytes")
    return struct.pack("!H", len(data)) + data


def _fixed_header(packet_type: int, flags: int, body: bytes) -> bytes:
    return bytes([(packet_type << 4) | flags]) + _encode_varint(len(body)) + body


def encode_packet(packet: Packet, *, max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    """Encode `packet` to MQTT 3.1.1 wire bytes.

    Raises EncodeError for publish payloads larger than `max_payload`.
    """
    if isinstance(packet, Connect):
        flags = 0x02 if packet.clean_session else 0x00
        body = bytearray(_encode_string("MQTT"))
        body.append(packet.protocol_level)
        payload = bytearray(_encode_string(packet.client_id))
        if packet.will is not None:
            flags |= 0x04 | (packet.will.qos << 3) | (0x20 if packet.will.retain else 0)
            payload += _encode_string(packet.will.topic)
            payload += _encode_binary(packet.will.payload)
        if packet.username is not None:
            flags |= 0x80
            payload += _encode_string(packet.username)
        if packet.password is not None:
            flags |= 0x40
            payload += _encode_binary(packet.password)
        body.append(flags)
        body += struct.pack("!H", packet.keep_alive)
        body += payload
        return _fixed_header(CONNECT, 0, bytes(body))
    if isinstance(packet, Connack):
        return _fixed_header(
            CONNACK, 0, bytes([1 if packet.session_present else 0, packet.return_code])
        )
    if isinstance(packet, Publish):
        if len(packet.payload) > max_payload:
            raise EncodeError(
                f"payload of {len(packet.payload)} bytes exceeds limit {max_payload}"
            )
        flags = (0x08 if packet.dup else 0) | (packet.qos << 1) | (0x01 if packet.retain else 0)
        body = bytearray(_encode_string(packet.topic))
        if packet.qos > 0:
            body += struct.pack("!H", packet.packet_id)
        body += packet.payload
        return _fixed_header(PUBLISH, flags, bytes(body))
    if isinstance(packet, Puback):
        return _fixed_header(PUBACK, 0, struct.pack("!H", packet.packet_id))
    if isinstance(packet, Subscribe):
        body = bytearray(struct.pack("!H", packet.packet_id))
        for topic_filter, qos in packet.topics:
            body += _encode_string(topic_filter)
            body.append(qos)
        return _fixed_header(SUBSCRIBE, 0x02, bytes(body))
    if isinstance(packet, Suback):
        body = struct.pack("!H", packet.packet_id) + bytes(packet.return_codes)
        return _fixed_header(SUBACK, 0, body)
    if isinstance(packet, Unsubscribe):
        body = bytearray(struct.pack("!H", packet.packet_id))
        for topic_filter in packet.topics:
            body += _encode_string(topic_filter)
        return _fixed_header(UNSUBSCRIBE, 0x02, bytes(body))
    if isinstance(packet, Unsuback):
        return _fixed_header(UNSUBACK, 0, struct.pack("!H", packet.packet_id))
    if isinstance(packet, Pingreq):
        return b"\xc0\x00"
    if isinstance(packet, Pingresp):
        return b"\xd0\x00"
    if isinstance(packet, Disconnect):
        return b"\xe0\x00"
    raise EncodeError(f"unsupported packet {type(packet).__name__}")


class _Reader:
    """Cursor over one packet body."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def read_bytes(self, n: int) -> bytes:
        if self.remaining() < n:
            raise DecodeError("packet body truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def read_u16(self) -> int:
        return struct.unpack("!H", self.read_bytes(2))[0]

    def read_binary(self) -> bytes:
        return self.read_bytes(self.read_u16())

    def read_string(self) -> str:
        raw = self.read_binary()
        try:
            s = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8 string: {exc}") from None
        if "\x00" in s:
            raise DecodeError("string contains NUL")
        return s

    def expect_end(self) -> None:
        if self.remaining():
            raise DecodeError(f"{self.remaining()} trailing bytes in packet body")


def _decode_remaining_length(buf: bytes | bytearray) -> tuple[int, int] | None:
    """Parse the varint at buf[1:]. Returns (value, header_len) or None if short."""
    value = 0
    for i in range(4):
        if 1 + i >= len(buf):
            return None
        byte = buf[1 + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, 2 + i
    raise DecodeError("malformed remaining length (more than 4 bytes)")


def _wrap_value_error(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise DecodeError(str(exc)) from None


def decode_packet(buf: bytes | bytearray) -> tuple[Packet, int] | None:
    """Decode the first packet in `buf`.

    Returns (packet, bytes consumed), or None when `buf` holds only a
    prefix of the frame. Raises DecodeError on protocol violations.
    """
    if not buf:
        return None
    first = buf[0]
    packet_type = first >> 4
    flags = first & 0x0F
    header = _decode_remaining_length(buf)
    if header is None:
        return None
    remaining, header_len = header
    if remaining > MAX_REMAINING_LENGTH:
        raise DecodeError(f"packet of {remaining} bytes exceeds limit")
    total = header_len + remaining
    if len(buf) < total:
        return None
    reader = _Reader(bytes(buf[header_len:total]))
    packet = _decode_body(packet_type, flags, reader)
    reader.expect_end()
    return packet, total


def _decode_body(packet_type: int, flags: int, reader: _Reader) -> Packet:
    if packet_type == PUBLISH:
        qos = (flags >> 1) & 0x03
        if qos == 3:
            raise DecodeError("publish qos 3 is malformed")
        if qos == 2:
            raise DecodeError("publish qos 2 unsupported")
        topic = reader.read_string()
        packet_id = reader.read_u16() if qos > 0 else None
        payload = reader.read_bytes(reader.remaining())
        return _wrap_value_error(
            Publish,
            topic=topic,
            payload=payload,
            qos=qos,
            packet_id=packet_id,
            dup=bool(flags & 0x08),
            retain=bool(flags & 0x01),
        )
    if flags != (0x02 if packet_type in (SUBSCRIBE, UNSUBSCRIBE) else 0x00):
        raise DecodeError(f"invalid flags {flags:#x} for packet type {packet_type}")
    if packet_type == CONNECT:
        if reader.read_string() != "MQTT":
            raise DecodeError("unsupported protocol name")
        level = reader.read_bytes(1)[0]
        connect_flags = reader.read_bytes(1)[0]
        if connect_flags & 0x01:
            raise DecodeError("CONNECT reserved flag set")
        keep_alive = reader.read_u16()
        client_id = reader.read_string()
        will = None
        if connect_flags & 0x04:
            will_topic = reader.read_string()
            will_payload = reader.read_binary()
            will = _wrap_value_error(
                Will,
                topic=will_topic,
                payload=will_payload,
                qos=(connect_flags >> 3) & 0x03,
                retain=bool(connect_flags & 0x20),
            )
        elif connect_flags & 0x38:
            raise DecodeError("will qos/retain flags set without will flag")
        username = reader.read_string() if connect_flags & 0x80 else None
        password = reader.read_binary() if connect_flags & 0x40 else None
        return _wrap_value_error(
            Connect,
            client_id=client_id,
            clean_session=bool(connect_flags & 0x02),
            keep_alive=keep_alive,
            protocol_level=level,
            will=will,
            username=username,
            password=password,
        )
    if packet_type == CONNACK:
        ack_flags = reader.read_bytes(1)[0]
        if ack_flags & 0xFE:
            raise DecodeError("invalid CONNACK acknowledge flags")
        code = reader.read_bytes(1)[0]
        return _wrap_value_error(Connack, session_present=bool(ack_flags & 0x01), return_code=code)
    if packet_type == PUBACK:
        return Puback(reader.read_u16())
    if packet_type == SUBSCRIBE:
        packet_id = reader.read_u16()
        topics = []
        while reader.remaining():
            topic_filter = reader.read_string()
            topics.append((topic_filter, reader.read_bytes(1)[0]))
        return _wrap_value_error(Subscribe, packet_id=packet_id, topics=tuple(topics))
    if packet_type == SUBACK:
        packet_id = reader.read_u16()
        codes = tuple(reader.read_bytes(reader.remaining()))
        return _wrap_value_error(Suback, packet_id=packet_id, return_codes=codes)
    if packet_type == UNSUBSCRIBE:
        packet_id = reader.read_u16()
        topics = []
        while reader.remaining():
            topics.append(reader.read_string())
        return _wrap_value_error(Unsubscribe, packet_id=packet_id, topics=tuple(topics))
    if packet_type == UNSUBACK:
        return Unsuback(reader.read_u16())
    if packet_type == PINGREQ:
        return Pingreq()
    if packet_type == PINGRESP:
        return Pingresp()
    if packet_type == DISCONNECT:
        return Disconnect()
    raise DecodeError(f"unknown packet type {packet_type}")
