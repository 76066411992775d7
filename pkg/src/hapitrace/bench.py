"""Overhead benchmark: tracing configurations vs an untraced baseline.

Runs the workload wall-clock without tracing, then once per configuration
(each tracing mode, with and without telemetry sampling), repeating each
run and reporting median overhead percentage and on-disk trace size. Also
microbenchmarks the writer's per-event hot path (encode + ring push), which
is the cost injected into every traced call.
"""

from __future__ import annotations

import shutil
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .dispatch import build_dispatch_wrappers
from .harness import bundled_model, bundled_registry, trace_workload
from .mockrt import MockRuntime
from .registry import SchemaRegistry
from .tracefile import EventRecord, TraceWriter
from .workload import WorkloadRunner, WorkloadSpec

HOT_PATH_SAMPLE_EVENTS = 20000


@dataclass
class BenchRow:
    config: str
    median_overhead_pct: float
    trace_bytes: int
    event_count: int


@dataclass
class BenchReport:
    workload: str
    repetitions: int
    baseline_ns: int
    rows: list[BenchRow] = field(default_factory=list)
    hot_path_median_ns: int = 0
    hot_path_p90_ns: int = 0


class _UntracedDispatch:
    """Dispatch stand-in that calls the runtime without emitting events."""

    def __init__(self, model, registry: SchemaRegistry, runtime: MockRuntime):
        self.model = model
        self.registry = registry
        self.runtime = runtime
        self.writer = None
        self._order = {fn.name: [p.name for p in fn.params] for fn in model.functions}

    def call(self, name, args, stream=None):
        return getattr(self.runtime, name)(*[args[n] for n in self._order[name]])


def _run_untraced(spec: WorkloadSpec) -> int:
    dispatch = _UntracedDispatch(bundled_model(), bundled_registry(), MockRuntime())
    t0 = time.perf_counter_ns()
    WorkloadRunner(spec, dispatch, mode="wall").run()
    return time.perf_counter_ns() - t0


def _trace_dir_bytes(directory: Path) -> int:
    return sum(p.stat().st_size for p in directory.glob("stream_*.bin"))


def measure_hot_path(registry: SchemaRegistry | None = None) -> tuple[int, int]:
    """Median and p90 per-event emit cost (ns) on a representative rich event."""
    registry = registry or bundled_registry()
    model = bundled_model()
    fn = next(f for f in model.functions if any(p.deref and p.deref.kind == "array" for p in f.params))
    schema = registry.schema(f"{model.api_name}:{fn.name}_entry")
    payload = {}
    for f in schema.fields:
        payload[f.name] = {
            "u64": 472,
            "i64": 0,
            "f64": 0.0,
            "address": 0xFF007FFFFFF90000,
            "string": "bench",
            "blob": b"\x01" * 8,
        }[f.kind]
    tmp = Path(tempfile.mkdtemp(prefix="hapitrace-hotpath-"))
    try:
        writer = TraceWriter(
            tmp / "t", registry, mode="full", drain="manual",
            buffer_capacity=HOT_PATH_SAMPLE_EVENTS + 16,
        )
        stream = writer.stream()
        rec = EventRecord(schema.id, None, payload)
        samples = []
        clock = time.perf_counter_ns
        for _ in range(HOT_PATH_SAMPLE_EVENTS):
            t0 = clock()
            stream.emit(rec)
            samples.append(clock() - t0)
        writer.finalize()
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    samples.sort()
    return samples[len(samples) // 2], samples[int(len(samples) * 0.9)]


def run_bench(
    spec: WorkloadSpec,
    modes=("minimal", "default", "full"),
    sample: bool = False,
    repetitions: int = 3,
) -> BenchReport:
    baselines = [_run_untraced(spec) for _ in range(repetitions)]
    baseline = int(statistics.median(baselines))
    report = BenchReport(workload=spec.name, repetitions=repetitions, baseline_ns=baseline)

    configs = [(f"T-{m}", m, False) for m in modes]
    if sample:
        configs += [(f"TS-{m}", m, True) for m in modes]
    scratch = Path(tempfile.mkdtemp(prefix="hapitrace-bench-"))
    try:
        for label, mode, with_sampling in configs:
            times = []
            size = events = 0
            for rep in range(repetitions):
                out = scratch / f"{label}-{rep}"
                t0 = time.perf_counter_ns()
                session = trace_workload(
                    spec, out, mode=mode, sample=with_sampling, run_mode="wall"
                )
                times.append(time.perf_counter_ns() - t0)
                size = _trace_dir_bytes(out)
                events = sum(i.event_count for i in session.stream_infos)
                shutil.rmtree(out)
            median = int(statistics.median(times))
            overhead = 100.0 * (median - baseline) / baseline if baseline else 0.0
            report.rows.append(BenchRow(label, overhead, size, events))
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    report.hot_path_median_ns, report.hot_path_p90_ns = measure_hot_path()
    return report


def render_bench(report: BenchReport) -> str:
    lines = [
        f"workload {report.workload}: baseline median "
        f"{report.baseline_ns / 1e6:.2f} ms over {report.repetitions} runs",
        "",
        f"{'config':<12} | {'median %':>9} | {'size bytes':>11} | {'events':>8}",
    ]
    for r in report.rows:
        lines.append(
            f"{r.config:<12} | {r.median_overhead_pct:>8.2f}% | {r.trace_bytes:>11} | {r.event_count:>8}"
        )
    lines.append("")
    lines.append(
        f"per-event hot-path cost: median {report.hot_path_median_ns} ns, "
        f"p90 {report.hot_path_p90_ns} ns"
    )
    return "\n".join(lines) + "\n"
