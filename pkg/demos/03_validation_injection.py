#!/usr/bin/env python3
"""Defect injection and post-mortem validation.

Runs W1 clean and once per injected defect class (uninitialized pNext,
leaked event handle, command list executed twice without reset), then lets
the validation sink find exactly the injected mistakes.
"""
import tempfile
from pathlib import Path

from hapitrace.harness import bundled_model, bundled_workload, trace_workload
from hapitrace.pipeline import run_pipeline
from hapitrace.sinks import ValidationSink, render_findings
from hapitrace.tracefile import open_trace_reader

base = Path(tempfile.mkdtemp(prefix="hapitrace-demo-"))
spec = bundled_workload("w1")
model = bundled_model()

for label, inject in [
    ("clean", ()),
    ("uninit_pnext", ("uninit_pnext",)),
    ("leak_event", ("leak_event",)),
    ("no_reset_cmdlist", ("no_reset_cmdlist",)),
]:
    out = base / label
    trace_workload(spec, out, inject=inject)
    findings = run_pipeline(open_trace_reader(out), sinks=[ValidationSink(model)])["validate"]
    print(f"--- {label}")
    print(render_findings(findings))
