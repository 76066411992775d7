"""hapitrace: model-driven API tracing toolkit with a simulated GPU runtime.

Declarative API models generate rich tracepoints and interposition shims;
a non-blocking per-thread writer records events into a compact binary trace
with drop-on-overflow semantics; a plugin pipeline produces pretty-print,
tally, timeline, and validation outputs; telemetry sampling and multi-rank
tally aggregation round out the toolkit.
"""

from .apimodel import (
    ApiModel,
    DerefSpec,
    FunctionDecl,
    MetaParams,
    ParamDecl,
    apply_meta_params,
    dump_api_model_yaml,
    load_api_model_yaml,
    load_meta_params_yaml,
    model_fingerprint,
    parse_header_decls,
)
from .dispatch import DispatchTable, build_dispatch_wrappers
from .interposer import emit_interposer_source
from .mockrt import MockRuntime, VirtualClock
from .pipeline import (
    IntervalBuilder,
    Message,
    Sink,
    Span,
    build_intervals,
    mux_streams,
    run_pipeline,
)
from .registry import EventSchema, FieldSpec, SchemaRegistry, build_schema_registry
from .sampler import TelemetrySample, run_sampler
from .sinks import (
    PrettyPrintSink,
    TallyReport,
    TallyRow,
    TallySink,
    TimelineSink,
    ValidationFinding,
    ValidationSink,
    render_tally,
)
from .tracefile import (
    EventRecord,
    StreamInfo,
    TraceReader,
    TraceWriter,
    open_trace_reader,
    open_trace_writer,
)
from .workload import WorkloadSpec, load_workload, run_workload

__version__ = "0.1.0"

__all__ = [
    "ApiModel",
    "DerefSpec",
    "DispatchTable",
    "EventRecord",
    "EventSchema",
    "FieldSpec",
    "FunctionDecl",
    "IntervalBuilder",
    "Message",
    "MetaParams",
    "MockRuntime",
    "ParamDecl",
    "PrettyPrintSink",
    "SchemaRegistry",
    "Sink",
    "Span",
    "StreamInfo",
    "TallyReport",
    "TallyRow",
    "TallySink",
    "TelemetrySample",
    "TimelineSink",
    "TraceReader",
    "TraceWriter",
    "ValidationFinding",
    "ValidationSink",
    "VirtualClock",
    "WorkloadSpec",
    "apply_meta_params",
    "build_dispatch_wrappers",
    "build_intervals",
    "build_schema_registry",
    "dump_api_model_yaml",
    "emit_interposer_source",
    "load_api_model_yaml",
    "load_meta_params_yaml",
    "load_workload",
    "model_fingerprint",
    "mux_streams",
    "open_trace_reader",
    "open_trace_writer",
    "parse_header_decls",
    "render_tally",
    "run_pipeline",
    "run_sampler",
    "run_workload",
]
