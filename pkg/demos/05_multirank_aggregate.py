#!/usr/bin/env python3
"""Aggregate-only multi-rank runs.

Simulates eight ranks, keeps only per-rank tally summaries (raw streams are
deleted as soon as each rank is tallied), merges them hierarchically through
local masters of four ranks each, and prints the composite profile.
"""
from hapitrace.aggregator import aggregate_only_run
from hapitrace.harness import bundled_workload
from hapitrace.sinks import render_tally

composite = aggregate_only_run(bundled_workload("w1"), ranks=8, node_size=4)
print(render_tally(composite))
print("note the header: eight distinct processes, one composite profile,")
print("and no stream files left behind.")
