import pytest
from hypothesis import given, settings, strategies as st

from faultwire.mqtt import packets
from faultwire.mqtt.packets import DecodeError, EncodeError, decode_packet, encode_packet


def test_pingreq_wire_bytes():
    assert encode_packet(packets.Pingreq()) == bytes([0xC0, 0x00])


def test_pingreq_decodes():
    assert decode_packet(bytes([0xC0, 0x00])) == (packets.Pingreq(), 2)


def test_truncated_frame_needs_more_data():
    assert decode_packet(bytes([0xC0])) is None
    assert decode_packet(b"") is None


def test_publish_round_trip():
    p = packets.Publish(topic="t", payload=b"1", qos=0)
    decoded, consumed = decode_packet(encode_packet(p))
    assert decoded == p
    assert consumed == len(encode_packet(p))


def test_subscribe_round_trip_preserves_filter_text():
    p = packets.Subscribe(packet_id=7, topics=(("a/+", 0),))
    decoded, _ = decode_packet(encode_packet(p))
    assert decoded == p
    assert decoded.topics[0][0] == "a/+"


def test_wildcard_in_publish_topic_is_decode_error():
    # Hand-built PUBLISH with topic "a/#": qos 0, payload "1".
    topic = b"a/#"
    body = len(topic).to_bytes(2, "big") + topic + b"1"
    frame = bytes([0x30, len(body)]) + body
    with pytest.raises(DecodeError):
        decode_packet(frame)


def test_malformed_remaining_length_is_error_not_need_more():
    with pytest.raises(DecodeError):
        decode_packet(bytes([0xC0, 0x80, 0x80, 0x80, 0x80, 0x01]))


def test_oversize_payload_rejected_at_encode():
    p = packets.Publish(topic="t", payload=b"x" * 100, qos=0)
    with pytest.raises(EncodeError):
        encode_packet(p, max_payload=99)
    assert encode_packet(p, max_payload=100)


def test_publish_qos_packet_id_invariants():
    with pytest.raises(ValueError):
        packets.Publish(topic="t", payload=b"", qos=0, packet_id=3)
    with pytest.raises(ValueError):
        packets.Publish(topic="t", payload=b"", qos=1)
    with pytest.raises(ValueError):
        packets.Publish(topic="t", payload=b"", qos=2, packet_id=3)


def test_qos2_publish_rejected_at_decode():
    body = b"\x00\x01t" + b"\x00\x05" + b"x"
    frame = bytes([0x30 | (2 << 1), len(body)]) + body
    with pytest.raises(DecodeError):
        decode_packet(frame)


def test_bad_packet_type_rejected():
    with pytest.raises(DecodeError):
        decode_packet(bytes([0x00, 0x00]))
    with pytest.raises(DecodeError):
        decode_packet(bytes([0xF0, 0x00]))


def test_invalid_utf8_topic_rejected():
    body = b"\x00\x02\xff\xfe" + b"1"
    frame = bytes([0x30, len(body)]) + body
    with pytest.raises(DecodeError):
        decode_packet(frame)


# -- generated packets ---------------------------------------------------

topic_name = st.lists(
    st.text(alphabet="abcdefgh01239-_", min_size=1, max_size=8), min_size=1, max_size=4
).map("/".join)
topic_filter = st.one_of(
    topic_name,
    topic_name.map(lambda t: t + "/#"),
    topic_name.map(lambda t: "+/" + t),
    st.just("#"),
)
payloads = st.binary(max_size=64)
packet_ids = st.integers(min_value=1, max_value=0xFFFF)


@st.composite
def publish_packets(draw):
    qos = draw(st.integers(0, 1))
    return packets.Publish(
        topic=draw(topic_name),
        payload=draw(payloads),
        qos=qos,
        packet_id=draw(packet_ids) if qos else None,
        dup=draw(st.booleans()) if qos else False,
    )


@st.composite
def connect_packets(draw):
    will = None
    if draw(st.booleans()):
        will = packets.Will(
            topic=draw(topic_name),
            payload=draw(payloads),
            qos=draw(st.integers(0, 2)),
            retain=draw(st.booleans()),
        )
    username = draw(st.one_of(st.none(), st.text(alphabet="abcdef", max_size=8)))
    password = draw(payloads) if username is not None and draw(st.booleans()) else None
    return packets.Connect(
        client_id=draw(st.text(alphabet="abcdef012", min_size=1, max_size=12)),
        clean_session=draw(st.booleans()),
        keep_alive=draw(st.integers(0, 0xFFFF)),
        will=will,
        username=username,
        password=password,
    )


any_packet = st.one_of(
    publish_packets(),
    connect_packets(),
    st.builds(packets.Connack, session_present=st.booleans(), return_code=st.integers(0, 5)),
    st.builds(packets.Puback, packet_id=packet_ids),
    st.builds(
        packets.Subscribe,
        packet_id=packet_ids,
        topics=st.lists(st.tuples(topic_filter, st.integers(0, 2)), min_size=1, max_size=4).map(
            tuple
        ),
    ),
    st.builds(
        packets.Suback,
        packet_id=packet_ids,
        return_codes=st.lists(
            st.sampled_from([0, 1, 2, packets.SUBACK_FAILURE]), min_size=1, max_size=4
        ).map(tuple),
    ),
    st.builds(
        packets.Unsubscribe,
        packet_id=packet_ids,
        topics=st.lists(topic_filter, min_size=1, max_size=4).map(tuple),
    ),
    st.builds(packets.Unsuback, packet_id=packet_ids),
    st.just(packets.Pingreq()),
    st.just(packets.Pingresp()),
    st.just(packets.Disconnect()),
)


@settings(max_examples=1000, deadline=None)
@given(any_packet)
def test_round_trip(packet):
    wire = encode_packet(packet)
    decoded, consumed = decode_packet(wire)
    assert decoded == packet
    assert consumed == len(wire)


@settings(max_examples=200, deadline=None)
@given(any_packet, st.data())
def test_every_proper_prefix_needs_more_data(packet, data):
    wire = encode_packet(packet)
    cut = data.draw(st.integers(min_value=0, max_value=len(wire) - 1))
    assert decode_packet(wire[:cut]) is None


@settings(max_examples=200, deadline=None)
@given(any_packet, payloads)
def test_trailing_bytes_are_not_consumed(packet, extra):
    wire = encode_packet(packet)
    decoded, consumed = decode_packet(wire + extra)
    assert decoded == packet
    assert consumed == len(wire)
