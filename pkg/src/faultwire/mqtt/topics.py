"""MQTT topic name and topic filter handling.

Topic names are plain `/`-separated strings. Filters may use the two MQTT
wildcards: `+` matches exactly one level, `#` matches any number of
trailing levels and may only appear as the final level. Topics starting
with `$` are reserved for broker-internal use and are never matched by
filters that begin with a wildcard.
"""

from __future__ import annotations


class TopicError(ValueError):
    """Invalid topic name or topic filter."""


def validate_topic(topic: str) -> None:
    """Reject topic names that are empty, contain wildcards or NUL."""
    if not topic:
        raise TopicError("topic must not be empty")
    if "\x00" in topic:
        raise TopicError("topic must not contain NUL")
    if "+" in topic or "#" in topic:
        raise TopicError(f"topic {topic!r} must not contain wildcard characters")


def validate_filter(topic_filter: str) -> None:
    """Reject malformed subscription filters.

    `#` is only allowed alone in the final level; `+` must occupy a whole
    level on its own.
    """
    if not topic_filter:
        raise TopicError("topic filter must not be empty")
    if "\x00" in topic_filter:
        raise TopicError("topic filter must not contain NUL")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#" or i != len(levels) - 1:
                raise TopicError(f"'#' must be the final level in {topic_filter!r}")
        if "+" in level and level != "+":
            raise TopicError(f"'+' must occupy a whole level in {topic_filter!r}")


def topic_matches(topic_filter: str, topic: str) -> bool:
    """True iff `topic` (wildcard-free) matches `topic_filter`.

    Follows MQTT level semantics: `a/#` also matches `a` itself, and `+`
    never crosses a `/` boundary. Filters starting with a wildcard do not
    match `$`-prefixed topics.
    """
    if topic.startswith("$") and topic_filter[:1] in ("+", "#"):
        return False
    filter_levels = topic_filter.split("/")
    topic_levels = topic.split("/")
    for i, level in enumerate(filter_levels):
        if level == "#":
            return True
        if i >= len(topic_levels):
            return False
        if level != "+" and level != topic_levels[i]:
            return False
    return len(filter_levels) == len(topic_levels)
