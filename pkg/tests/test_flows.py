import pytest

from faultwire.flows import (
    AlarmEvent,
    FlowSpec,
    FlowVariant,
    FlowError,
    build_flow,
    parse_payload,
)
from faultwire.healing import AlarmLevel
from faultwire.mqtt.broker import BrokerCore


def spec(variant, name="f", **kwargs):
    return FlowSpec(name=name, variant=variant, **kwargs)


def test_bl_flow_has_three_stages():
    flow = build_flow(spec(FlowVariant.BL))
    assert flow.stage_names == ("parse", "threshold_alarm", "report_by_exception")


def test_sh_s1_flow_has_seven_stages_with_voter():
    flow = build_flow(spec(FlowVariant.SH_S1))
    assert len(flow.stage_names) == 7
    assert "majority_vote" in flow.stage_names
    assert "debounce" not in flow.stage_names


def test_sh_s2_adds_debounce_before_join():
    flow = build_flow(spec(FlowVariant.SH_S2))
    stages = flow.stage_names
    assert len(stages) == 8
    assert stages.index("debounce") < stages.index("join")


def test_build_flow_validates_parameters():
    with pytest.raises(FlowError):
        build_flow(spec(FlowVariant.SH_S1, join_timeout_ms=0))
    with pytest.raises(FlowError):
        build_flow(spec(FlowVariant.SH_S1, margin_pct=1.5))
    with pytest.raises(FlowError):
        build_flow(spec(FlowVariant.BL, name=""))
    with pytest.raises(FlowError):
        build_flow(spec(FlowVariant.BL, input_topics=()))


def test_parse_payload_formats():
    assert parse_payload(b"87.3") == 87.3
    assert parse_payload(b" 42 ") == 42.0
    assert parse_payload(b'{"value": 3.5}') == 3.5
    assert parse_payload(b"nope") is None
    assert parse_payload(b'{"value": "x"}') is None
    assert parse_payload(b"\xff\xfe") is None


def test_bl_first_danger_reading_emits_event():
    flow = build_flow(spec(FlowVariant.BL, name="BL"))
    events = flow.deliver("sensors/1/nox", b"300", now=0)
    assert events == [AlarmEvent("BL", AlarmLevel.DANGER, 0)]


def test_bl_unchanged_level_suppressed():
    flow = build_flow(spec(FlowVariant.BL))
    first = flow.deliver("sensors/1/nox", b"300", now=0)
    second = flow.deliver("sensors/2/nox", b"290", now=100)
    assert len(first) == 1 and second == []


def test_bl_initial_level_is_off():
    flow = build_flow(spec(FlowVariant.BL))
    assert flow.current_level == AlarmLevel.OFF


def test_malformed_payload_ignored_and_counted():
    flow = build_flow(spec(FlowVariant.BL))
    assert flow.deliver("sensors/1/nox", b"garbage", now=0) == []
    assert flow.counters["malformed"] == 1


def test_sh_emits_nothing_until_join_completes():
    flow = build_flow(spec(FlowVariant.SH_S1, name="SH"))
    assert flow.deliver("sensors/1/nox", b"300", now=0) == []
    assert flow.deliver("sensors/2/nox", b"301", now=100) == []
    events = flow.deliver("sensors/3/nox", b"302", now=200)
    assert events == [AlarmEvent("SH", AlarmLevel.DANGER, 200)]


def test_sh_join_timeout_flushes_partial_group():
    flow = build_flow(spec(FlowVariant.SH_S1, name="SH"))
    flow.deliver("sensors/1/nox", b"300", now=0)
    assert flow.deadline() == 6000
    events = flow.on_timer(6000)
    # Single-reading group -> no majority -> empty history -> no output.
    assert events == []
    assert flow.counters["partial_groups"] == 1
    assert flow.counters["no_majority"] == 1


def test_sh_partial_group_with_consensus_flows_downstream():
    flow = build_flow(spec(FlowVariant.SH_S1, name="SH"))
    flow.deliver("sensors/1/nox", b"300", now=0)
    flow.deliver("sensors/2/nox", b"302", now=100)
    events = flow.on_timer(6000)
    assert events == [AlarmEvent("SH", AlarmLevel.DANGER, 6000)]


def test_sh_timer_before_deadline_is_noop():
    flow = build_flow(spec(FlowVariant.SH_S1))
    flow.deliver("sensors/1/nox", b"10", now=0)
    assert flow.on_timer(100) == []
    assert flow.deadline() == 6000


def test_sh_stale_timer_after_completion_is_noop():
    flow = build_flow(spec(FlowVariant.SH_S1))
    flow.deliver("sensors/1/nox", b"10", now=0)
    flow.deliver("sensors/2/nox", b"10", now=100)
    flow.deliver("sensors/3/nox", b"10", now=200)
    # The old join deadline has passed but the group already completed.
    assert flow.on_timer(6000) == []


def test_sh_compensate_replays_last_value_on_silence():
    flow = build_flow(spec(FlowVariant.SH_S1, name="SH"))
    flow.deliver("sensors/1/nox", b"87.3", now=0)
    flow.deliver("sensors/2/nox", b"87.3", now=100)
    events = flow.deliver("sensors/3/nox", b"87.3", now=200)
    assert events == [AlarmEvent("SH", AlarmLevel.WARN, 200)]
    # No further input: compensate re-emits 87.3 at 6200 (same level, no event).
    assert flow.deadline() == 6200
    assert flow.on_timer(6200) == []
    assert flow.counters["compensate_replays"] == 1


def test_sh_range_filter_discards_and_counts():
    flow = build_flow(spec(FlowVariant.SH_S1))
    assert flow.deliver("sensors/1/nox", b"1200", now=0) == []
    assert flow.counters["range_discarded"] == 1
    assert flow.deadline() is None  # discarded readings never reach the join


def test_sh_s2_debounce_discards_close_repeat():
    flow = build_flow(spec(FlowVariant.SH_S2))
    flow.deliver("sensors/3/nox", b"10", now=5000)
    flow.deliver("sensors/3/nox", b"10", now=6000)
    assert flow.counters["debounce_discarded"] == 1


def test_voter_discards_stuck_sensor():
    flow = build_flow(spec(FlowVariant.SH_S1, name="SH"))
    flow.deliver("sensors/1/nox", b"100", now=0)
    flow.deliver("sensors/2/nox", b"102", now=100)
    events = flow.deliver("sensors/3/nox", b"1000", now=200)
    # Cluster {100, 102} wins; 1000 is voted out -> Warn, not Danger.
    assert events == [AlarmEvent("SH", AlarmLevel.WARN, 200)]


def test_dual_delivery_fairness_through_broker():
    core = BrokerCore()
    seen = {"BL": [], "SH": []}
    flows = {
        "BL": build_flow(spec(FlowVariant.BL, name="BL")),
        "SH": build_flow(spec(FlowVariant.SH_S1, name="SH")),
    }
    for name in flows:
        core.connect(name, lambda m, q, n=name: seen[n].append((m.topic, m.payload)))
        core.subscribe(name, [(t, 0) for t in flows[name].spec.input_topics])
    for i, topic in enumerate(
        ["sensors/1/nox", "sensors/2/nox", "sensors/3/nox", "sensors/1/nox"]
    ):
        core.publish(topic, str(i).encode())
    assert seen["BL"] == seen["SH"] and len(seen["BL"]) == 4


def test_flow_event_stream_is_deterministic():
    def run():
        flow = build_flow(spec(FlowVariant.SH_S1, name="SH"))
        events = []
        inputs = [
            ("sensors/1/nox", b"40", 0),
            ("sensors/2/nox", b"60", 100),
            ("sensors/3/nox", b"55", 200),
            ("sensors/1/nox", b"250", 5000),
            ("sensors/2/nox", b"255", 5100),
            ("sensors/3/nox", b"12", 5200),
        ]
        for topic, payload, now in inputs:
            events.extend(flow.deliver(topic, payload, now))
        while flow.deadline() is not None:
            events.extend(flow.on_timer(flow.deadline()))
        return events

    assert run() == run()
