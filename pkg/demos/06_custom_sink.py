#!/usr/bin/env python3
"""Writing a custom analysis sink.

The pipeline's sink contract is three callbacks; this one builds a histogram
of host-API span durations and runs alongside the built-in tally in a
single pass over the trace.
"""
import tempfile
from collections import Counter
from pathlib import Path

from hapitrace.harness import bundled_workload, trace_workload
from hapitrace.pipeline import Sink, run_pipeline
from hapitrace.sinks import TallySink
from hapitrace.tracefile import open_trace_reader


class DurationHistogram(Sink):
    name = "histogram"
    consumes = "intervals"

    BUCKETS = (1_000, 10_000, 100_000, 1_000_000)

    def on_start(self, registry):
        self.counts = Counter()

    def on_message(self, msg):
        if msg.kind != "span" or msg.span.kind != "host_api":
            return
        for bound in self.BUCKETS:
            if msg.span.duration_ns < bound:
                self.counts[f"<{bound}ns"] += 1
                return
        self.counts["huge"] += 1

    def on_finish(self):
        return dict(self.counts)


out = Path(tempfile.mkdtemp(prefix="hapitrace-demo-")) / "w1"
trace_workload(bundled_workload("w1"), out, mode="full")

result = run_pipeline(open_trace_reader(out), sinks=[DurationHistogram(), TallySink()])
print("host span duration histogram:", result["histogram"])
print("tally rows:", len(result["tally"].rows))
