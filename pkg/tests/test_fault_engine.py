import random

from hypothesis import given, settings, strategies as st

from faultwire.faults.engine import FaultEngine
from faultwire.faults.model import compile_config
from faultwire.mqtt.broker import Message
from faultwire.rng import derive_seed, make_stream
from faultwire.faults.engine import RULE_STREAM_TAG


def msg(topic="t", payload=b"1", instant=0):
    return Message(topic=topic, payload=payload, publish_instant=instant, qos=0)


def engine_for(operators, topic="t", start_after=0, stop_after=None, seed=42):
    rule = {"topic": topic, "operators": operators, "startAfter": start_after}
    if stop_after is not None:
        rule["stopAfter"] = stop_after
    return FaultEngine(compile_config({"rules": [rule]}), seed=seed)


def test_certain_drop_emits_nothing():
    engine = engine_for([{"type": "randomDrop", "probability": 1.0}])
    assert engine.intercept(msg(), now=0) == []


def test_duplicate_six_seconds_apart():
    engine = engine_for([{"type": "duplicate", "delayMs": 6000}])
    out = engine.intercept(msg(payload=b"87.3", instant=50000), now=50000)
    assert [(m.payload, due) for m, due in out] == [(b"87.3", 50000), (b"87.3", 56000)]


def test_stuck_at_window():
    engine = engine_for([{"type": "map", "expr": "1000"}], topic="sensors/3/nox",
                        start_after=10, stop_after=110)
    outputs = []
    for i in range(120):
        out = engine.intercept(msg(topic="sensors/3/nox", payload=b"87.3", instant=i), now=i)
        outputs.append(out[0][0].payload)
    assert outputs[4] == b"87.3"     # message #5: window not started
    assert outputs[49] == b"1000"    # message #50: stuck at upper bound
    assert outputs[9] == b"87.3" and outputs[10] == b"1000"
    assert outputs[109] == b"1000" and outputs[110] == b"87.3"


def test_no_rules_passes_through_immediately():
    engine = FaultEngine(compile_config({"rules": []}))
    out = engine.intercept(msg(instant=123), now=123)
    assert out == [(msg(instant=123), 123)]


def test_unmatched_topic_passes_through_and_keeps_counter():
    engine = engine_for([{"type": "randomDrop", "probability": 1.0}], topic="a")
    assert engine.intercept(msg(topic="b"), now=0) == [(msg(topic="b"), 0)]
    assert engine.pipelines[0].rule.counter == 0


def test_counter_increments_once_per_matching_publish_even_outside_window():
    engine = engine_for([{"type": "map", "expr": "1000"}], start_after=5, stop_after=6)
    rule = engine.pipelines[0].rule
    for i in range(1, 11):
        engine.intercept(msg(), now=i)
        assert rule.counter == i


def test_drop_20pct_binomial_bound_and_offline_replay_oracle():
    # Oracle: replay the same derived stream offline and predict every drop.
    engine = engine_for([{"type": "randomDrop", "probability": 0.2}],
                        topic="sensors/3/nox", start_after=10, stop_after=110, seed=42)
    oracle = random.Random(derive_seed(42, RULE_STREAM_TAG, 0))
    kept, dropped = [], 0
    expected_kept = []
    for i in range(1, 121):
        out = engine.intercept(msg(topic="sensors/3/nox", payload=str(i).encode()), now=i)
        in_window = 10 < i <= 110
        if in_window:
            expect_drop = oracle.random() < 0.2
        else:
            expect_drop = False
        if out:
            kept.append(i)
        else:
            dropped += 1
        assert (not out) == expect_drop
        if not expect_drop:
            expected_kept.append(i)
    assert kept == expected_kept
    # 99.9% two-sided binomial interval for Binomial(100, 0.2).
    assert 7 <= dropped <= 35


def test_random_delay_due_instants_within_bounds():
    engine = engine_for([{"type": "randomDelay", "minMs": 100, "maxMs": 400}])
    for i in range(50):
        ((_, due),) = engine.intercept(msg(instant=i * 10), now=i * 10)
        assert i * 10 + 100 <= due <= i * 10 + 400


def test_fixed_delay_is_exact():
    engine = engine_for([{"type": "randomDelay", "minMs": 250, "maxMs": 250}])
    ((_, due),) = engine.intercept(msg(instant=1000), now=1000)
    assert due == 1250


def test_buffer_count_flush_preserves_order():
    engine = engine_for([{"type": "buffer", "count": 3}])
    assert engine.intercept(msg(payload=b"1", instant=0), now=0) == []
    assert engine.intercept(msg(payload=b"2", instant=5), now=5) == []
    out = engine.intercept(msg(payload=b"3", instant=9), now=9)
    assert [(m.payload, due) for m, due in out] == [(b"1", 9), (b"2", 9), (b"3", 9)]
    assert engine.deadline() is None


def test_buffer_timeout_flush_with_deadline():
    engine = engine_for([{"type": "buffer", "count": 10, "timeoutMs": 500}])
    engine.intercept(msg(payload=b"1", instant=100), now=100)
    engine.intercept(msg(payload=b"2", instant=300), now=300)
    assert engine.deadline() == 600  # measured from the first buffered message
    assert engine.fire_due(599) == []
    out = engine.fire_due(600)
    assert [(m.payload, due) for m, due in out] == [(b"1", 600), (b"2", 600)]
    assert engine.deadline() is None and engine.held_count() == 0


def test_buffer_timeout_restarts_after_flush():
    engine = engine_for([{"type": "buffer", "timeoutMs": 1000}])
    engine.intercept(msg(instant=0), now=0)
    engine.fire_due(1000)
    engine.intercept(msg(instant=5000), now=5000)
    assert engine.deadline() == 6000


def test_flushed_messages_continue_downstream():
    engine = engine_for([
        {"type": "buffer", "count": 2},
        {"type": "duplicate", "delayMs": 100},
    ])
    engine.intercept(msg(payload=b"a", instant=0), now=0)
    out = engine.intercept(msg(payload=b"b", instant=50), now=50)
    assert [(m.payload, due) for m, due in out] == [
        (b"a", 50), (b"a", 150), (b"b", 50), (b"b", 150),
    ]


def test_map_non_numeric_payload_passes_through(caplog):
    engine = engine_for([{"type": "map", "expr": "value * 2"}])
    with caplog.at_level("WARNING"):
        out = engine.intercept(msg(payload=b"not-a-number"), now=0)
    assert out == [(msg(payload=b"not-a-number"), 0)]
    assert any("non-numeric" in r.message for r in caplog.records)


def test_map_division_by_zero_passes_through(caplog):
    engine = engine_for([{"type": "map", "expr": "1 / (value - 5)"}])
    with caplog.at_level("WARNING"):
        ((m, _),) = engine.intercept(msg(payload=b"5"), now=0)
    assert m.payload == b"5"


def test_map_gate_draw_keeps_stream_alignment():
    # p < 1: one gate draw per message, expression draws only on pass.
    engine = engine_for([{"type": "map", "expr": "value * random(2, 2)", "probability": 0.5}],
                        seed=7)
    mirror = random.Random(derive_seed(7, RULE_STREAM_TAG, 0))
    for i in range(200):
        ((m, _),) = engine.intercept(msg(payload=b"10"), now=i)
        if mirror.random() < 0.5:
            mirror.random()  # the expression's own draw
            assert m.payload == b"20"
        else:
            assert m.payload == b"10"


def test_first_matching_rule_wins_and_both_count():
    config = compile_config({
        "rules": [
            {"topic": "a", "operators": [{"type": "map", "expr": "1"}]},
            {"topic": "b", "operators": [{"type": "map", "expr": "2"}]},
        ]
    })
    engine = FaultEngine(config, seed=0)
    ((m1, _),) = engine.intercept(msg(topic="a", payload=b"9"), now=0)
    ((m2, _),) = engine.intercept(msg(topic="b", payload=b"9"), now=0)
    assert (m1.payload, m2.payload) == (b"1", b"2")


def test_rules_use_independent_streams():
    config = {"rules": [
        {"topic": "a", "operators": [{"type": "randomDelay", "minMs": 0, "maxMs": 10**6}]},
        {"topic": "b", "operators": [{"type": "randomDelay", "minMs": 0, "maxMs": 10**6}]},
    ]}
    engine = FaultEngine(compile_config(config), seed=1)
    ((_, due_a),) = engine.intercept(msg(topic="a"), now=0)
    ((_, due_b),) = engine.intercept(msg(topic="b"), now=0)
    assert due_a != due_b  # identical streams would produce identical draws
    assert due_a == int(round(10**6 * make_stream(1, RULE_STREAM_TAG, 0).random()))
    assert due_b == int(round(10**6 * make_stream(1, RULE_STREAM_TAG, 1).random()))


# -- properties -----------------------------------------------------------

payload_numbers = st.integers(min_value=0, max_value=2000)


@settings(max_examples=60, deadline=None)
@given(st.lists(payload_numbers, min_size=1, max_size=40), st.integers(0, 2**32))
def test_pass_through_identity_pipeline(values, seed):
    engine = engine_for(
        [
            {"type": "randomDrop", "probability": 0.0},
            {"type": "randomDelay", "minMs": 0, "maxMs": 0},
            {"type": "map", "expr": "value"},
        ],
        seed=seed,
    )
    for i, value in enumerate(values):
        message = msg(payload=str(value).encode(), instant=i * 100)
        assert engine.intercept(message, now=i * 100) == [(message, i * 100)]


@settings(max_examples=40, deadline=None)
@given(st.lists(payload_numbers, min_size=1, max_size=60), st.integers(0, 2**32))
def test_determinism_same_seed_same_emissions(values, seed):
    ops = [
        {"type": "map", "expr": "value * random(0.2, 2.2)", "probability": 0.4},
        {"type": "randomDelay", "minMs": 0, "maxMs": 500},
        {"type": "randomDrop", "probability": 0.3},
        {"type": "duplicate", "delayMs": 123},
    ]
    runs = []
    for _ in range(2):
        engine = engine_for(ops, seed=seed)
        emitted = []
        for i, value in enumerate(values):
            emitted.extend(
                (m.payload, due)
                for m, due in engine.intercept(msg(payload=str(value).encode(), instant=i), now=i)
            )
        runs.append(emitted)
    assert runs[0] == runs[1]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 999), min_size=1, max_size=30),
    st.integers(1, 8),
    st.integers(1, 5000),
)
def test_buffer_conservation(values, count, timeout_ms):
    engine = engine_for([{"type": "buffer", "count": count, "timeoutMs": timeout_ms}])
    out = []
    now = 0
    for i, value in enumerate(values):
        now = i * 997
        out.extend(engine.intercept(msg(payload=str(value).encode(), instant=now), now=now))
        while engine.deadline() is not None and engine.deadline() <= now:
            out.extend(engine.fire_due(engine.deadline()))
    deadline = engine.deadline()
    if deadline is not None:
        out.extend(engine.fire_due(deadline))
    assert engine.held_count() == 0
    assert [m.payload for m, _ in out] == [str(v).encode() for v in values]
