import random

import pytest

from hapitrace.errors import MuxOrderingError, PipelineError
from hapitrace.pipeline import (
    END_OF_STREAM,
    IntervalBuilder,
    Message,
    Sink,
    build_intervals,
    mux_streams,
    run_pipeline,
)
from hapitrace.registry import EventSchema, FieldSpec, SchemaRegistry
from hapitrace.tracefile import EventRecord

ALL = frozenset({"minimal", "default", "full"})


def _host_pair(sid, fn):
    entry = EventSchema(sid, f"t:{fn}_entry", "host_entry",
                        (FieldSpec("x", "u64", "stack_arg"),), ALL, fn)
    exit_ = EventSchema(sid + 1, f"t:{fn}_exit", "host_exit",
                        (FieldSpec("result", "i64", "result"),), ALL, fn)
    return entry, exit_


@pytest.fixture(scope="module")
def toy_registry():
    schemas = (
        *_host_pair(0, "f"),
        *_host_pair(2, "g"),
        *_host_pair(4, "h"),
        EventSchema(6, "t:annotation", "meta", (FieldSpec("label", "string", "stack_arg"),), ALL),
    )
    return SchemaRegistry(api_name="t", fingerprint="0" * 16, schemas=schemas)


def _rec(sid, ts, payload, host="n0", pid=1, tid=1):
    return EventRecord(sid, ts, payload, hostname=host, pid=pid, tid=tid)


# ---------------------------------------------------------------------------
# muxer


def test_mux_two_streams():
    a = [_rec(6, 1, {"label": "a"}), _rec(6, 3, {"label": "b"})]
    b = [_rec(6, 2, {"label": "c"}, tid=2)]
    out = list(mux_streams([a, b]))
    assert [m.kind for m in out] == ["event"] * 3 + [END_OF_STREAM]
    assert [m.event.timestamp_ns for m in out[:3]] == [1, 2, 3]


def test_mux_single_stream_is_identity():
    msgs = [_rec(6, t, {"label": str(t)}) for t in (0, 0, 5, 9)]
    out = [m.event for m in mux_streams([msgs]) if m.kind == "event"]
    assert out == msgs


def test_mux_empty_inputs():
    out = list(mux_streams([[], []]))
    assert len(out) == 1 and out[0].kind == END_OF_STREAM


def test_mux_matches_stable_sort_oracle():
    rng = random.Random(7)
    streams = []
    for i in range(8):
        ts = 0
        recs = []
        for _ in range(2000):
            ts += rng.randint(0, 3)
            recs.append(_rec(6, ts, {"label": "x"}, host=f"n{i % 2}", pid=100 + i, tid=i))
        streams.append(recs)
    out = [m.event for m in mux_streams(streams) if m.kind == "event"]
    flat = [r for s in streams for r in s]
    oracle = sorted(flat, key=lambda r: (r.timestamp_ns, r.hostname, r.pid, r.tid))
    assert [(m.timestamp_ns, m.pid, m.tid) for m in out] == [
        (m.timestamp_ns, m.pid, m.tid) for m in oracle
    ]
    assert out == oracle  # same objects in same order


def test_mux_rejects_non_monotone_input():
    bad = [_rec(6, 5, {"label": "a"}), _rec(6, 4, {"label": "b"})]
    with pytest.raises(MuxOrderingError) as exc:
        list(mux_streams([bad]))
    assert exc.value.index == 1


def test_mux_tie_break_by_identity():
    a = [_rec(6, 5, {"label": "a"}, pid=2, tid=2)]
    b = [_rec(6, 5, {"label": "b"}, pid=1, tid=1)]
    out = [m.event.payload["label"] for m in mux_streams([a, b]) if m.kind == "event"]
    assert out == ["b", "a"]


# ---------------------------------------------------------------------------
# interval building


def _call_events(registry, seq):
    """seq: list of (fn, entry_ts, exit_ts, result) built as entry/exit events."""
    by_fn = {s.function: s for s in registry.schemas if s.event_class == "host_entry"}
    ex_by_fn = {s.function: s for s in registry.schemas if s.event_class == "host_exit"}
    msgs = []
    for fn, ts, payload in seq:
        if payload is None:
            msgs.append(Message("event", event=_rec(by_fn[fn].id, ts, {"x": 0})))
        else:
            msgs.append(Message("event", event=_rec(ex_by_fn[fn].id, ts, {"result": payload})))
    msgs.append(Message(END_OF_STREAM))
    return msgs


def test_simple_span(toy_registry):
    msgs = _call_events(toy_registry, [("f", 10, None), ("f", 25, 0)])
    spans = [m.span for m in build_intervals(msgs, toy_registry) if m.kind == "span"]
    (span,) = spans
    assert (span.name, span.start_ns, span.end_ns, span.duration_ns) == ("f", 10, 25, 15)
    assert not span.truncated


def test_lifo_nesting(toy_registry):
    msgs = _call_events(
        toy_registry,
        [("f", 1, None), ("g", 2, None), ("g", 3, 0), ("f", 4, 0)],
    )
    spans = [m.span for m in build_intervals(msgs, toy_registry) if m.kind == "span"]
    assert [(s.name, s.start_ns, s.end_ns) for s in spans] == [("g", 2, 3), ("f", 1, 4)]
    inner, outer = spans
    assert outer.start_ns <= inner.start_ns and inner.end_ns <= outer.end_ns


def test_orphan_exit_is_counted_and_dropped(toy_registry):
    msgs = _call_events(toy_registry, [("f", 5, 0)])
    builder = IntervalBuilder(toy_registry)
    out = [m for msg in msgs for m in builder.feed(msg)]
    assert not any(m.kind == "span" for m in out)
    assert builder.stats.orphan_exits == 1
    assert builder.orphans == [("n0/1/1", 5, "f")]


def test_truncated_spans_at_end_of_stream(toy_registry):
    msgs = _call_events(
        toy_registry, [("f", 1, None), ("g", 2, None), ("g", 7, 0)]
    )
    spans = [m.span for m in build_intervals(msgs, toy_registry) if m.kind == "span"]
    assert [(s.name, s.truncated) for s in spans] == [("g", False), ("f", True)]
    assert spans[1].end_ns == 7  # last observed timestamp


def _random_well_nested(rng, fns, n_calls, max_depth=8):
    """Generate a well-nested call sequence; returns events + expected spans."""
    t = 0
    stack = []
    seq = []
    expected = []
    calls = 0
    while calls < n_calls or stack:
        t += rng.randint(1, 4)
        can_push = calls < n_calls and len(stack) < max_depth
        if can_push and (not stack or rng.random() < 0.55):
            fn = rng.choice(fns)
            stack.append((fn, t))
            seq.append((fn, t, None))
            calls += 1
        else:
            fn, start = stack.pop()
            seq.append((fn, t, 0))
            expected.append((fn, start, t))
    return seq, expected


def test_randomized_nesting_matches_stack_oracle(toy_registry):
    rng = random.Random(2024)
    for _ in range(10):
        seq, expected = _random_well_nested(rng, ["f", "g", "h"], 1000)
        msgs = _call_events(toy_registry, seq)
        spans = [m.span for m in build_intervals(msgs, toy_registry) if m.kind == "span"]
        got = sorted((s.name, s.start_ns, s.end_ns) for s in spans)
        assert got == sorted(expected)


def test_conservation(toy_registry):
    rng = random.Random(5)
    seq, _ = _random_well_nested(rng, ["f", "g"], 500)
    seq.append(("h", 10**9, 0))  # orphan exit
    msgs = _call_events(toy_registry, seq)
    builder = IntervalBuilder(toy_registry)
    passed = 0
    for msg in msgs:
        for out in builder.feed(msg):
            if out.kind == "event":
                passed += 1
    st = builder.stats
    assert st.passed == passed
    assert st.events_in == st.passed + st.converted_events() + st.orphan_exits


def test_meta_events_pass_through(toy_registry):
    msgs = [Message("event", event=_rec(6, 1, {"label": "phase"})), Message(END_OF_STREAM)]
    out = list(build_intervals(iter(msgs), toy_registry))
    assert [m.kind for m in out] == ["event", END_OF_STREAM]


# ---------------------------------------------------------------------------
# pipeline driver


class _CountingSink(Sink):
    def __init__(self, name, consumes):
        self.name = name
        self.consumes = consumes
        self.counts = {"event": 0, "span": 0, "sample": 0, END_OF_STREAM: 0}

    def on_message(self, msg):
        self.counts[msg.kind] += 1

    def on_finish(self):
        return dict(self.counts)


class _Source:
    """Minimal TraceReader stand-in."""

    def __init__(self, registry, streams):
        self.registry = registry
        self._streams = streams

    def streams(self):
        return list(self._streams)


def test_pipeline_single_pass_feeds_both_stages(toy_registry):
    events = [
        _rec(0, 1, {"x": 1}),
        _rec(1, 2, {"result": 0}),
        _rec(6, 3, {"label": "note"}),
    ]
    ev_sink = _CountingSink("raw", "events")
    span_sink = _CountingSink("spans", "intervals")
    result = run_pipeline(_Source(toy_registry, [events]), sinks=[ev_sink, span_sink])
    assert result["raw"]["event"] == 3
    assert result["spans"]["span"] == 1
    assert result["spans"]["event"] == 1  # the meta pass-through
    assert result["raw"][END_OF_STREAM] == result["spans"][END_OF_STREAM] == 1


def test_pipeline_zero_sinks_yields_stats(toy_registry):
    events = [_rec(0, 1, {"x": 1}), _rec(1, 2, {"result": 0})]
    result = run_pipeline(_Source(toy_registry, [events]), sinks=[])
    assert result.sink_results == {}
    assert result.stats.events_in == 2
    assert result.stats.host_spans == 1


def test_pipeline_duplicate_sink_names_rejected(toy_registry):
    with pytest.raises(PipelineError):
        run_pipeline(
            _Source(toy_registry, []),
            sinks=[_CountingSink("x", "events"), _CountingSink("x", "events")],
        )


def test_pipeline_sink_failure_aborts_with_sink_error(toy_registry):
    class Boom(Sink):
        name = "boom"

        def on_message(self, msg):
            raise RuntimeError("sink exploded")

    with pytest.raises(RuntimeError, match="sink exploded"):
        run_pipeline(
            _Source(toy_registry, [[_rec(0, 1, {"x": 1})]]), sinks=[Boom()]
        )


def test_pipeline_requires_registry_for_bare_iterators():
    with pytest.raises(PipelineError):
        run_pipeline([[]], sinks=[])
