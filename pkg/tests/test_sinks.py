import json
import random
import re
from pathlib import Path

import pytest

from hapitrace.harness import bundled_registry, bundled_workload, trace_workload
from hapitrace.pipeline import END_OF_STREAM, Message, Span, run_pipeline
from hapitrace.sampler import TelemetrySample
from hapitrace.sinks import (
    PrettyPrintSink,
    TallyReport,
    TallyRow,
    TallySink,
    TimelineSink,
    check_timeline_object,
    fmt_duration,
    format_event_line,
    render_tally,
)
from hapitrace.tracefile import EventRecord, open_trace_reader

GOLDEN = Path(__file__).parent / "golden"


def _span(name, start, end, result=0, kind="host_api", tid=1, **kw):
    return Span(name=name, kind=kind, hostname="n0", pid=1, tid=tid,
                start_ns=start, end_ns=end, result=result, **kw)


# ---------------------------------------------------------------------------
# pretty print


def test_pretty_memcpy_golden(registry):
    ts = (21 * 3600 + 41 * 60 + 26) * 10**9 + 240059291
    schema = registry.schema("ze:zeMockCommandListAppendMemoryCopy_entry")
    rec = EventRecord(
        schema.id,
        ts,
        {
            "hCommandList": 0x0508AEA8,
            "dstptr": 0xFF007FFFFFF90000,
            "srcptr": 0x00007FFFEDCEAB98,
            "size": 472,
            "hSignalEvent": 0x05165898,
            "numWaitEvents": 0,
            "phWaitEvents": 0,
            "phWaitEvents_vals": b"",
        },
        hostname="x4204c0s1b0n0",
        pid=124765,
        tid=124765,
    )
    line = format_event_line(registry, rec)
    assert "size: 472" in line
    assert "dstptr: 0xff007ffffff90000" in line
    assert "srcptr: 0x00007fffedceab98" in line
    assert line + "\n" == (GOLDEN / "pretty_memcpy.txt").read_text()


def test_pretty_empty_trace_empty_output(registry):
    sink = PrettyPrintSink()
    sink.on_start(registry)
    sink.on_message(Message(END_OF_STREAM))
    assert sink.on_finish() == ""


_LINE_RE = re.compile(
    r"^(\d{2}):(\d{2}):(\d{2})\.(\d{9}) - (\S+) - "
    r"vpid: (\d+), vtid: (\d+) - ([\w.]+:[\w]+): \{ ?(.*?) ?\}$"
)
_VALUE_RE = re.compile(
    r"(\w+): (0x[0-9a-f]{16}|-?\d+\.\d+(?:e[+-]?\d+)?|-?\d+|\"(?:[^\"\\]|\\.)*\"|\[[^\]]*\])"
)


def test_every_line_reparses_under_documented_grammar(tmp_path, w1):
    trace_workload(w1, tmp_path / "t", mode="full", sample=True)
    reader = open_trace_reader(tmp_path / "t")
    result = run_pipeline(reader, sinks=[PrettyPrintSink()])
    lines = result["pretty"].splitlines()
    assert lines
    for line in lines:
        m = _LINE_RE.match(line)
        assert m, f"line does not parse: {line!r}"
        fields_text = m.group(9)
        if fields_text:
            parsed = _VALUE_RE.findall(fields_text)
            reconstructed = ", ".join(f"{k}: {v}" for k, v in parsed)
            assert reconstructed == fields_text, f"field grammar mismatch: {line!r}"


# ---------------------------------------------------------------------------
# tally


def test_tally_paper_style_fixture_golden():
    report = TallyReport(
        fingerprint=None,
        backends=("BACKEND_HIP", "BACKEND_ZE"),
        hostnames=frozenset({"aurora-node"}),
        processes=frozenset({("aurora-node", 1)}),
        threads=frozenset({("aurora-node", 1, 1)}),
    )
    rows = [
        ("hipDeviceSynchronize", 4_730_000_000, 1),
        ("zeEventHostSynchronize", 4_680_000_000, 9),
        ("hipMemcpy", 1_770_000_000, 3),
        ("__hipUnregisterFatBinary", 500_910_000, 1),
        ("zeCommandListAppendMemoryCopy", 394_500_000, 5),
        ("hipLaunchKernel", 262_700_000, 2),
        ("zeModuleCreate", 256_090_000, 1),
        ("other", 55_800_000, 4),
    ]
    assert sum(t for _, t, _ in rows) == 12_650_000_000
    for name, total, calls in rows:
        report.rows[("host", name)] = TallyRow(
            name, "host", time_ns=total, count=calls, min_ns=total // calls, max_ns=total // calls
        )
    text = render_tally(report)
    assert "hipDeviceSynchronize |    4.73s |   37.39" in text
    assert "zeEventHostSynchronize |    4.68s |   36.99" in text
    assert text == (GOLDEN / "tally_fixture.txt").read_text()


def test_single_1ns_span_is_100_percent():
    sink = TallySink()
    sink.on_start(bundled_registry())
    sink.on_message(Message("span", span=_span("f", 10, 11)))
    report = sink.on_finish()
    assert "f | 1.00ns |  100.00 |" in render_tally(report)


def _fold_oracle(spans):
    acc = {}
    for s in spans:
        key = ("host" if s.kind == "host_api" else "device", s.name)
        tot, cnt, mn, mx, err = acc.get(key, (0, 0, None, None, 0))
        d = s.duration_ns
        acc[key] = (
            tot + d,
            cnt + 1,
            d if mn is None else min(mn, d),
            d if mx is None else max(mx, d),
            err + (1 if s.result != 0 else 0),
        )
    return acc


def _random_spans(rng, n):
    spans = []
    for _ in range(n):
        start = rng.randint(0, 10**6)
        spans.append(
            _span(
                rng.choice(["a", "b", "c", "d"]),
                start,
                start + rng.randint(0, 10**5),
                result=rng.choice([0, 0, 0, 3]),
                kind=rng.choice(["host_api", "device_command"]),
            )
        )
    return spans


def _tally_of(spans):
    sink = TallySink()
    sink.on_start(bundled_registry())
    for s in spans:
        sink.on_message(Message("span", span=s))
    return sink.on_finish()


def test_tally_matches_fold_oracle():
    rng = random.Random(31)
    spans = _random_spans(rng, 3000)
    report = _tally_of(spans)
    oracle = _fold_oracle(spans)
    assert set(report.rows) == set(oracle)
    for key, (tot, cnt, mn, mx, err) in oracle.items():
        row = report.rows[key]
        assert (row.time_ns, row.count, row.min_ns, row.max_ns, row.error_count) == (
            tot, cnt, mn, mx, err,
        )


def test_tally_time_conservation_exact():
    rng = random.Random(32)
    spans = _random_spans(rng, 500)
    report = _tally_of(spans)
    host_total = sum(r.time_ns for r in report.rows.values() if r.section == "host")
    assert host_total == sum(s.duration_ns for s in spans if s.kind == "host_api")


def test_tally_merge_compatibility():
    from hapitrace.aggregator import merge_tallies

    rng = random.Random(33)
    a = _random_spans(rng, 400)
    b = _random_spans(rng, 700)
    merged = merge_tallies([_tally_of(a), _tally_of(b)])
    combined = _tally_of(a + b)
    assert merged.rows == combined.rows


def test_tally_row_invariant():
    rng = random.Random(34)
    report = _tally_of(_random_spans(rng, 1000))
    for row in report.rows.values():
        assert row.min_ns <= row.time_ns / row.count <= row.max_ns


def test_tally_json_round_trip():
    rng = random.Random(35)
    report = _tally_of(_random_spans(rng, 100))
    again = TallyReport.from_json(report.to_json())
    assert again == report


def test_fmt_duration_scaling():
    assert fmt_duration(4_730_000_000) == "4.73s"
    assert fmt_duration(500_910_000) == "500.91ms"
    assert fmt_duration(394_500_000) == "394.50ms"
    assert fmt_duration(1) == "1.00ns"
    assert fmt_duration(0) == "0.00ns"
    assert fmt_duration(1_500) == "1.50us"


# ---------------------------------------------------------------------------
# timeline


def test_single_host_span_object():
    sink = TimelineSink()
    sink.on_message(Message("span", span=_span("f", 2000, 5000)))
    objs = [o for o in sink.on_finish() if o["ph"] == "X"]
    (obj,) = objs
    assert obj["name"] == "f"
    assert obj["ts"] == 2.0 and obj["dur"] == 3.0  # microseconds
    assert obj["pid"] == 1 and obj["tid"] == 1
    assert check_timeline_object(obj)


def test_counter_tracks_from_samples(tmp_path):
    sink = TimelineSink(out_path=tmp_path / "tl.json")
    for counter, domain in (
        ("power", 0), ("power", 1), ("power", 2),
        ("frequency", 0), ("frequency", 1),
        ("compute_engine", 0), ("compute_engine", 1),
        ("copy_engine", 0), ("copy_engine", 1),
    ):
        sink.on_message(Message("sample", sample=TelemetrySample(1000, counter, domain, 1.0)))
    objs = json.loads((tmp_path / "tl.json").read_text()) if sink.on_finish() else []
    names = {o["name"] for o in objs if o["ph"] == "C"}
    assert names == {
        "Power|Domain 0", "Power|Domain 1", "Power|Domain 2",
        "GPU Frequency|Domain 0", "GPU Frequency|Domain 1",
        "Compute Engine|Tile 0", "Compute Engine|Tile 1",
        "Copy Engine|Tile 0", "Copy Engine|Tile 1",
    }


def test_timeline_schema_over_full_export(tmp_path, w1):
    trace_workload(w1, tmp_path / "t", mode="full", sample=True, sample_period_ns=50_000)
    reader = open_trace_reader(tmp_path / "t")
    result = run_pipeline(reader, sinks=[TimelineSink(out_path=tmp_path / "tl.json")])
    objs = json.loads((tmp_path / "tl.json").read_text())
    assert objs == result["timeline"]
    assert all(check_timeline_object(o) for o in objs)
    device_spans = [o for o in objs if o["ph"] == "X" and o["pid"] >= 9_000_000]
    assert device_spans, "device spans must land on the synthetic device track"
