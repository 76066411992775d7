"""Command-line launcher and analysis front end.

``hapitrace trace -- workload.yaml`` replays a workload under tracing and
prints the tally summary; ``analyze`` re-reads a finalized trace through the
pipeline sinks; ``bench`` measures tracing overhead; ``merge`` combines
per-rank tally JSON files. The writer ring capacity honors the
HAPITRACE_BUFFER_CAP environment variable.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import aggregator, bench as bench_mod
from .errors import HapitraceError, TraceDirectoryError
from .harness import (
    bundled_model,
    read_tally_json,
    tally_trace,
    trace_workload,
    write_tally_json,
)
from .pipeline import run_pipeline
from .sinks import (
    PrettyPrintSink,
    TallySink,
    TimelineSink,
    ValidationSink,
    render_findings,
    render_tally,
)
from .tracefile import DEFAULT_BUFFER_CAPACITY, open_trace_reader
from .workload import INJECTION_TAGS, load_workload


def _buffer_capacity() -> int:
    raw = os.environ.get("HAPITRACE_BUFFER_CAP")
    if not raw:
        return DEFAULT_BUFFER_CAPACITY
    try:
        cap = int(raw)
    except ValueError:
        raise click.UsageError(f"HAPITRACE_BUFFER_CAP must be an integer, got {raw!r}")
    if cap < 1:
        raise click.UsageError("HAPITRACE_BUFFER_CAP must be >= 1")
    return cap


@click.group()
def main():
    """Heterogeneous API tracing toolkit (mock-runtime edition)."""


@main.command("trace")
@click.option("--mode", type=click.Choice(["minimal", "default", "full"]), default="default")
@click.option("--sample", is_flag=True, help="Enable device telemetry sampling.")
@click.option("--sample-period", type=float, default=50.0, show_default=True, help="Sampling period in ms.")
@click.option("--scenario", type=click.Choice(["automatic", "hybrid"]), default="hybrid")
@click.option("--inject", default="", help="Comma-separated defect injections.")
@click.option("--aggregate-only", is_flag=True, help="Keep only the merged tally, discard streams.")
@click.option("--ranks", type=int, default=1, show_default=True, help="Rank instances (aggregate-only).")
@click.option("--node-size", type=int, default=aggregator.DEFAULT_NODE_SIZE, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Trace directory (or tally JSON path).")
@click.argument("workload", type=click.Path(exists=True, dir_okay=False))
def cmd_trace(mode, sample, sample_period, scenario, inject, aggregate_only, ranks, node_size, out, workload):
    """Run WORKLOAD under tracing and print its tally summary."""
    spec = load_workload(Path(workload).read_text(), model=bundled_model())
    injections = tuple(t for t in inject.split(",") if t)
    bad = set(injections) - set(INJECTION_TAGS)
    if bad:
        raise click.UsageError(f"unknown injection tags {sorted(bad)}; valid: {INJECTION_TAGS}")
    if ranks != 1 and not aggregate_only:
        raise click.UsageError("--ranks requires --aggregate-only")
    period_ns = int(sample_period * 1e6)
    common = dict(
        mode=mode,
        scenario=scenario,
        inject=injections,
        sample=sample,
        sample_period_ns=period_ns,
        buffer_capacity=_buffer_capacity(),
    )
    try:
        if aggregate_only:
            report = aggregator.aggregate_only_run(spec, ranks, node_size=node_size, **common)
            out_path = Path(out) if out else Path(f"{spec.name}.tally.json")
            write_tally_json(report, out_path)
            click.echo(render_tally(report), nl=False)
            click.echo(f"composite tally written to {out_path}", err=True)
        else:
            out_dir = Path(out) if out else Path(f"{spec.name}.trace")
            session = trace_workload(spec, out_dir, **common)
            click.echo(render_tally(tally_trace(session.directory)), nl=False)
            click.echo(f"trace written to {session.directory}", err=True)
    except TraceDirectoryError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("analyze")
@click.option("--pretty", is_flag=True, help="Print one line per event.")
@click.option("--tally", "tally_flag", is_flag=True, help="Print the tally summary.")
@click.option("--timeline", type=click.Path(), default=None, help="Write Chrome trace JSON here.")
@click.option("--validate", "validate_flag", is_flag=True, help="Run post-mortem validation rules.")
@click.argument("trace_dir", type=click.Path(exists=True, file_okay=False))
def cmd_analyze(pretty, tally_flag, timeline, validate_flag, trace_dir):
    """Analyze a finalized trace directory in one pipeline pass."""
    sinks = []
    if pretty:
        sinks.append(PrettyPrintSink(write=click.echo))
    if timeline:
        sinks.append(TimelineSink(out_path=timeline))
    if validate_flag:
        sinks.append(ValidationSink(bundled_model()))
    if tally_flag or not sinks:
        sinks.append(TallySink())
    reader = open_trace_reader(trace_dir)
    result = run_pipeline(reader, sinks=sinks)
    if "tally" in result.sink_results:
        click.echo(render_tally(result["tally"]), nl=False)
    if timeline:
        click.echo(f"timeline written to {timeline}", err=True)
    if validate_flag:
        findings = result["validate"]
        click.echo(render_findings(findings), nl=False)
        if findings:
            sys.exit(1)


@main.command("bench")
@click.option("--mode", type=click.Choice(["minimal", "default", "full"]), default=None,
              help="Benchmark only this mode (default: all three).")
@click.option("--sample", is_flag=True, help="Also benchmark with telemetry sampling.")
@click.option("--reps", type=int, default=3, show_default=True)
@click.argument("workload", type=click.Path(exists=True, dir_okay=False))
def cmd_bench(mode, sample, reps, workload):
    """Measure tracing overhead for WORKLOAD against an untraced baseline."""
    spec = load_workload(Path(workload).read_text(), model=bundled_model())
    modes = (mode,) if mode else ("minimal", "default", "full")
    report = bench_mod.run_bench(spec, modes=modes, sample=sample, repetitions=reps)
    click.echo(bench_mod.render_bench(report), nl=False)


@main.command("merge")
@click.option("--out", type=click.Path(), required=True, help="Composite tally JSON path.")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def cmd_merge(out, inputs):
    """Merge per-rank *.tally.json files into a composite profile."""
    reports = [read_tally_json(p) for p in inputs]
    merged = aggregator.merge_tallies(reports)
    write_tally_json(merged, out)
    click.echo(render_tally(merged), nl=False)


def run():
    try:
        main(standalone_mode=True)
    except HapitraceError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run()
