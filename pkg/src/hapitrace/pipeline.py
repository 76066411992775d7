"""Trace processing graph: time muxer, interval reconstruction, sink driver.

Messages flow source -> muxer -> sinks, with an interval stage between the
muxer and any sink that consumes spans/samples instead of raw events. The
muxer merges per-stream iterators into one globally timestamp-ordered
sequence (ties broken by hostname, pid, tid, then arrival order). The
interval stage pairs host entry/exit events into spans per thread (LIFO),
forwards device-profiling events as device spans, and converts telemetry
events into samples. Everything is pull-based and single-pass, so traces
larger than memory stream through.

Sink plugin contract (see docs/analysis-outputs.md): ``on_start(registry)``,
``on_message(message)``, ``on_finish() -> result``, plus an optional
``on_diagnostics(orphans)`` delivered before ``on_finish``. A sink declares
``consumes = "events"`` or ``"intervals"``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import MuxOrderingError, PipelineError
from .registry import SchemaRegistry
from .sampler import TelemetrySample, parse_counter_key
from .tracefile import EventRecord

END_OF_STREAM = "end_of_stream"


@dataclass(frozen=True)
class Message:
    kind: str  # "event" | "span" | "sample" | "end_of_stream"
    event: EventRecord | None = None
    span: "Span | None" = None
    sample: TelemetrySample | None = None


@dataclass(frozen=True)
class Span:
    name: str
    kind: str  # "host_api" | "device_command"
    hostname: str
    pid: int
    tid: int
    start_ns: int
    end_ns: int
    entry_payload: dict = field(default_factory=dict)
    exit_payload: dict = field(default_factory=dict)
    result: int = 0
    truncated: bool = False

    @property
    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns


def _stream_label(cur, idx: int) -> str:
    name = getattr(cur, "name", None)
    if name:
        return name
    host = getattr(cur, "hostname", None)
    if host is not None:
        return f"{host}/{getattr(cur, 'pid', '?')}/{getattr(cur, 'tid', '?')}"
    return f"input[{idx}]"


def mux_streams(cursors):
    """Merge timestamp-ordered streams into one ordered Message iterator.

    Each input must be non-decreasing in timestamp; a violation raises
    MuxOrderingError naming the stream and the offending message index.
    Ends with exactly one end-of-stream message.
    """
    iters = []
    labels = []
    heap = []
    last_ts = []
    seqs = []
    for idx, cur in enumerate(cursors):
        iters.append(iter(cur))
        labels.append(_stream_label(cur, idx))
        last_ts.append(None)
        seqs.append(0)
        rec = next(iters[idx], None)
        if rec is not None:
            last_ts[idx] = rec.timestamp_ns
            heapq.heappush(
                heap,
                (rec.timestamp_ns, rec.hostname or "", rec.pid or 0, rec.tid or 0, 0, idx, rec),
            )
    while heap:
        ts, _h, _p, _t, _seq, idx, rec = heapq.heappop(heap)
        yield Message("event", event=rec)
        nxt = next(iters[idx], None)
        if nxt is None:
            continue
        if nxt.timestamp_ns < last_ts[idx]:
            raise MuxOrderingError(labels[idx], seqs[idx] + 1)
        last_ts[idx] = nxt.timestamp_ns
        seqs[idx] += 1
        heapq.heappush(
            heap,
            (
                nxt.timestamp_ns,
                nxt.hostname or "",
                nxt.pid or 0,
                nxt.tid or 0,
                seqs[idx],
                idx,
                nxt,
            ),
        )
    yield Message(END_OF_STREAM)


@dataclass
class IntervalStats:
    events_in: int = 0
    passed: int = 0
    host_spans: int = 0
    truncated_spans: int = 0
    device_spans: int = 0
    samples: int = 0
    orphan_exits: int = 0

    def converted_events(self) -> int:
        """Raw events consumed by conversion into spans/samples."""
        return 2 * self.host_spans + self.truncated_spans + self.device_spans + self.samples


class IntervalBuilder:
    """Pairs entry/exit events into spans; see module docstring."""

    def __init__(self, registry: SchemaRegistry):
        self.registry = registry
        self.stats = IntervalStats()
        self.orphans: list[tuple[str, int, str]] = []  # (stream, timestamp, function)
        self._stacks: dict[tuple, list] = {}
        self._last_ts = 0

    def feed(self, msg: Message):
        if msg.kind == END_OF_STREAM:
            yield from self._flush_truncated()
            yield msg
            return
        if msg.kind != "event":
            yield msg
            return
        rec = msg.event
        self.stats.events_in += 1
        self._last_ts = max(self._last_ts, rec.timestamp_ns)
        schema = self.registry.by_id.get(rec.schema_id)
        if schema is None:
            raise PipelineError(f"event with unknown schema id {rec.schema_id}")
        cls = schema.event_class
        if cls == "host_entry":
            key = (rec.hostname, rec.pid, rec.tid)
            self._stacks.setdefault(key, []).append((schema.function, rec))
        elif cls == "host_exit":
            key = (rec.hostname, rec.pid, rec.tid)
            stack = self._stacks.get(key)
            if not stack or stack[-1][0] != schema.function:
                self.stats.orphan_exits += 1
                self.orphans.append(
                    (f"{rec.hostname}/{rec.pid}/{rec.tid}", rec.timestamp_ns, schema.function)
                )
                return
            _, entry = stack.pop()
            self.stats.host_spans += 1
            yield Message(
                "span",
                span=Span(
                    name=schema.function,
                    kind="host_api",
                    hostname=rec.hostname,
                    pid=rec.pid,
                    tid=rec.tid,
                    start_ns=entry.timestamp_ns,
                    end_ns=rec.timestamp_ns,
                    entry_payload=entry.payload,
                    exit_payload=rec.payload,
                    result=int(rec.payload.get("result", 0)),
                ),
            )
        elif cls == "device_profiling":
            p = rec.payload
            self.stats.device_spans += 1
            yield Message(
                "span",
                span=Span(
                    name=p["name"],
                    kind="device_command",
                    hostname=rec.hostname,
                    pid=rec.pid,
                    tid=rec.tid,
                    start_ns=p["device_start_ns"],
                    end_ns=p["device_end_ns"],
                    entry_payload=p,
                    result=0,
                ),
            )
        elif cls == "telemetry_sample":
            counter, domain = parse_counter_key(schema.name)
            self.stats.samples += 1
            yield Message(
                "sample",
                sample=TelemetrySample(
                    timestamp_ns=rec.timestamp_ns,
                    counter=counter,
                    domain=domain,
                    value=rec.payload["value"],
                    device=rec.payload["device"],
                ),
            )
        else:  # meta events pass through untouched
            self.stats.passed += 1
            yield msg

    def _flush_truncated(self):
        for key in sorted(self._stacks, key=lambda k: (str(k[0]), k[1], k[2])):
            stack = self._stacks[key]
            while stack:
                fn, entry = stack.pop()
                self.stats.truncated_spans += 1
                yield Message(
                    "span",
                    span=Span(
                        name=fn,
                        kind="host_api",
                        hostname=entry.hostname,
                        pid=entry.pid,
                        tid=entry.tid,
                        start_ns=entry.timestamp_ns,
                        end_ns=self._last_ts,
                        entry_payload=entry.payload,
                        result=0,
                        truncated=True,
                    ),
                )


def build_intervals(msgs, registry: SchemaRegistry):
    """Standalone interval stage over an already-muxed message iterator."""
    builder = IntervalBuilder(registry)
    for msg in msgs:
        yield from builder.feed(msg)


class Sink:
    """Base class for analysis sinks; subclass and override the callbacks."""

    name = "sink"
    consumes = "intervals"  # or "events"

    def on_start(self, registry: SchemaRegistry):
        pass

    def on_message(self, msg: Message):
        pass

    def on_finish(self):
        return None


@dataclass
class PipelineResult:
    sink_results: dict
    stats: IntervalStats

    def __getitem__(self, sink_name):
        return self.sink_results[sink_name]


def run_pipeline(source, sinks=(), registry: SchemaRegistry | None = None) -> PipelineResult:
    """Drive one pass: source -> muxer -> (event sinks, intervals -> span sinks).

    ``source`` is a TraceReader or a list of per-stream record iterators
    (each timestamp-non-decreasing). Every sink sees the full message
    sequence for its stage; all outputs come from a single read.
    """
    if registry is None:
        registry = getattr(source, "registry", None)
        if registry is None:
            raise PipelineError("a registry is required when source is not a TraceReader")
    cursors = source.streams() if hasattr(source, "streams") else list(source)

    names = [s.name for s in sinks]
    if len(set(names)) != len(names):
        raise PipelineError(f"duplicate sink names: {names}")
    event_sinks = [s for s in sinks if s.consumes == "events"]
    span_sinks = [s for s in sinks if s.consumes != "events"]

    interval = IntervalBuilder(registry)
    infos = source.stream_infos() if hasattr(source, "stream_infos") else None
    for s in sinks:
        s.on_start(registry)
        if infos is not None and hasattr(s, "on_streams"):
            s.on_streams(infos)
    try:
        for msg in mux_streams(cursors):
            for s in event_sinks:
                s.on_message(msg)
            for out in interval.feed(msg):
                for s in span_sinks:
                    s.on_message(out)
    finally:
        # diagnostics reach interested sinks even when a sink is failing
        for s in sinks:
            hook = getattr(s, "on_diagnostics", None)
            if hook is not None:
                hook(list(interval.orphans))
    results = {s.name: s.on_finish() for s in sinks}
    return PipelineResult(sink_results=results, stats=interval.stats)
