"""End-to-end tracing sessions over the bundled mock runtime.

Glue shared by the CLI, the aggregator, the benchmark, and the test suite:
load the bundled API model (header plus meta-parameters), build a registry,
wire runtime + writer + dispatch, replay a workload, optionally sample
telemetry, finalize, and analyze.
"""

from __future__ import annotations

import functools
import importlib.resources as resources
import json
from dataclasses import dataclass
from pathlib import Path

from .apimodel import ApiModel, apply_meta_params, load_meta_params_yaml, parse_header_decls
from .dispatch import DispatchTable, build_dispatch_wrappers
from .mockrt import MockRuntime
from .pipeline import run_pipeline
from .registry import SchemaRegistry, build_schema_registry
from .sampler import DEFAULT_PERIOD_NS, SAMPLER_TID_OFFSET, SamplerThread, run_sampler
from .sinks import TallyReport, TallySink
from .tracefile import DEFAULT_BUFFER_CAPACITY, StreamInfo, TraceWriter, open_trace_reader
from .workload import RunSummary, WorkloadRunner, WorkloadSpec, load_workload

VIRTUAL_PID_BASE = 4202000
VIRTUAL_PID_STRIDE = 100  # rank instances get pid = base + rank * stride


def data_text(name: str) -> str:
    return resources.files("hapitrace.data").joinpath(name).read_text()


def data_path(name: str) -> Path:
    return Path(str(resources.files("hapitrace.data").joinpath(name)))


@functools.lru_cache(maxsize=None)
def bundled_model() -> ApiModel:
    """The mock-runtime model: parsed header enriched with bundled meta."""
    model = parse_header_decls(data_text("ze_mock.h"), api_name="ze")
    return apply_meta_params(model, load_meta_params_yaml(data_text("ze_mock_meta.yaml")))


@functools.lru_cache(maxsize=None)
def bundled_registry(scenario: str = "hybrid") -> SchemaRegistry:
    return build_schema_registry(bundled_model(), scenario)


def bundled_workload(name: str) -> WorkloadSpec:
    return load_workload(data_text(f"{name}.yaml"), model=bundled_model())


@dataclass
class TraceSession:
    directory: Path
    summary: RunSummary
    stream_infos: list[StreamInfo]
    sample_count: int = 0


def trace_workload(
    spec: WorkloadSpec,
    out_dir,
    mode: str = "default",
    scenario: str = "hybrid",
    inject=(),
    sample: bool = False,
    sample_period_ns: int = DEFAULT_PERIOD_NS,
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
    run_mode: str = "virtual",
    pid: int | None = None,
    hostname: str | None = None,
) -> TraceSession:
    """Trace one workload run into a fresh trace directory."""
    model = bundled_model()
    registry = build_schema_registry(model, scenario)
    runtime = MockRuntime()
    virtual = run_mode == "virtual"
    writer = TraceWriter(
        out_dir,
        registry,
        mode=mode,
        clock=runtime.clock if virtual else "monotonic-wall",
        buffer_capacity=buffer_capacity,
        drain="manual" if virtual else "thread",
        pid=pid if pid is not None else (VIRTUAL_PID_BASE if virtual else None),
        hostname=hostname,
    )
    dispatch = build_dispatch_wrappers(model, registry, runtime, writer)
    runner = WorkloadRunner(spec, dispatch, inject=inject, mode=run_mode)

    sampler_thread = None
    if sample and not virtual:
        sampler_thread = SamplerThread(runtime, writer, sample_period_ns)
        sampler_thread.start()
    summary = runner.run()
    sample_count = 0
    if sample and virtual:
        stream = writer.stream(tid=writer.pid + SAMPLER_TID_OFFSET)
        sample_count = run_sampler(
            runtime.device,
            sample_period_ns,
            writer,
            until_ns=runtime.clock.now_ns(),
            stream=stream,
        )
        writer.drain()
    if sampler_thread is not None:
        sampler_thread.stop()
        sample_count = sampler_thread.count
    infos = writer.finalize()
    return TraceSession(Path(out_dir), summary, infos, sample_count)


def tally_trace(trace_dir) -> TallyReport:
    """One pipeline pass producing the tally report for a finalized trace."""
    reader = open_trace_reader(trace_dir)
    result = run_pipeline(reader, sinks=[TallySink()])
    return result["tally"]


def write_tally_json(report: TallyReport, path):
    Path(path).write_text(report.to_json())


def read_tally_json(path) -> TallyReport:
    return TallyReport.from_json(Path(path).read_text())


def export_metadata(registry: SchemaRegistry, mode: str, clock_kind: str, path):
    """Standalone metadata.json for out-of-process writers (the C binding)."""
    meta = {
        "format_version": 1,
        "api_name": registry.api_name,
        "mode": mode,
        "clock": clock_kind,
        "buffer_capacity": DEFAULT_BUFFER_CAPACITY,
        "complete": False,
        "registry": registry.to_dict(),
    }
    Path(path).write_text(json.dumps(meta, indent=1))
