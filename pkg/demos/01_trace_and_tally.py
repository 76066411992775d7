#!/usr/bin/env python3
"""Trace the bundled W1 workload and summarize it.

Walks the whole collection path once: load the API model, replay the
workload through the tracing dispatch table on the virtual clock, then read
the finalized trace back through the analysis pipeline and print the tally.
"""
import tempfile
from pathlib import Path

from hapitrace.harness import bundled_workload, tally_trace, trace_workload
from hapitrace.sinks import render_tally

out = Path(tempfile.mkdtemp(prefix="hapitrace-demo-")) / "w1-trace"

spec = bundled_workload("w1")
session = trace_workload(spec, out, mode="default")

print(f"traced {sum(session.summary.call_counts.values())} API calls "
      f"({session.summary.virtual_duration_ns / 1000:.1f} us of virtual time)")
print(f"trace directory: {session.directory}\n")

report = tally_trace(out)
print(render_tally(report))

print("Try the same via the CLI:")
print(f"  hapitrace analyze {out} --tally --pretty")
