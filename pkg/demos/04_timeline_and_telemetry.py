#!/usr/bin/env python3
"""Telemetry sampling and timeline export.

Traces W1 with a fast sampling period, exports a Chrome-trace-format JSON
(load it at https://ui.perfetto.dev), and prints the counter rows captured
at one sampling instant.
"""
import json
import tempfile
from pathlib import Path

from hapitrace.harness import bundled_workload, trace_workload
from hapitrace.pipeline import run_pipeline
from hapitrace.sinks import TimelineSink
from hapitrace.tracefile import open_trace_reader

base = Path(tempfile.mkdtemp(prefix="hapitrace-demo-"))
out = base / "w1-sampled"

# 0.02 ms period so the ~0.35 ms virtual workload gets many instants
session = trace_workload(bundled_workload("w1"), out, mode="full",
                         sample=True, sample_period_ns=20_000)
print(f"emitted {session.sample_count} telemetry samples")

timeline_path = base / "timeline.json"
run_pipeline(open_trace_reader(out), sinks=[TimelineSink(out_path=timeline_path)])
objs = json.loads(timeline_path.read_text())
counters = [o for o in objs if o["ph"] == "C"]
spans = [o for o in objs if o["ph"] == "X"]
print(f"timeline: {len(spans)} span objects, {len(counters)} counter points")
print(f"wrote {timeline_path}\n")

instant = sorted({o["ts"] for o in counters})[len(counters) // 18]
print(f"counters at t={instant}us:")
for o in counters:
    if o["ts"] == instant:
        print(f"  {o['name']:<24} {o['args']['value']}")
