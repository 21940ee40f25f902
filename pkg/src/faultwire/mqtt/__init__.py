"""Minimal MQTT 3.1.1 broker, codec and client."""

from .broker import BrokerCore, Message, Subscription, route
from .packets import DecodeError, EncodeError, decode_packet, encode_packet
from .topics import TopicError, topic_matches, validate_filter, validate_topic

__all__ = [
    "BrokerCore",
    "DecodeError",
    "EncodeError",
    "Message",
    "Subscription",
    "TopicError",
    "decode_packet",
    "encode_packet",
    "route",
    "topic_matches",
    "validate_filter",
    "validate_topic",
]
