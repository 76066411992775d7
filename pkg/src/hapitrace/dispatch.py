"""In-process dispatch wrappers: the interposer analog without a C toolchain.

For every model function, a wrapper emits the entry event (stack arguments
plus dereferenced inputs), invokes the mock-runtime implementation, then
emits the exit event (result plus dereferenced outputs). Wrappers for the
profiling hook additionally flush completed device-profiling records after
their exit event. Payload capture reads the runtime's host memory exactly
the way the compiled interposer reads process memory, so both paths produce
field-for-field identical payloads.
"""

from __future__ import annotations

import struct

from .apimodel import ApiModel, model_fingerprint
from .errors import FingerprintMismatchError, UnknownFunctionError
from .mockrt import MockRuntime
from .registry import SchemaRegistry
from .tracefile import EventRecord, TraceWriter

BLOB_CAPTURE_LIMIT = 4096  # bounded hot-path cost for array/blob captures


def _deref_byte_size(model: ApiModel, p, args: dict) -> int:
    d = p.deref
    if d.kind == "array":
        length = int(args[d.length_param])
        return length * d.elem_size if d.unit == "elements" else length
    if d.size is not None:
        return d.size
    base, _ = model.base_type(p.c_type)
    return model.struct_defs[base].byte_size


class _Capture:
    """Precomputed capture plan for one deref field."""

    __slots__ = ("param", "field_name", "mode", "scalar_kind")

    def __init__(self, param, field_name, mode, scalar_kind=None):
        self.param = param
        self.field_name = field_name
        self.mode = mode  # "scalar" | "bytes"
        self.scalar_kind = scalar_kind


class _Wrapper:
    def __init__(self, model: ApiModel, registry: SchemaRegistry, fn):
        self.fn = fn
        self.param_names = [p.name for p in fn.params]
        self.entry = registry.schema(f"{model.api_name}:{fn.name}_entry")
        self.exit = registry.schema(f"{model.api_name}:{fn.name}_exit")
        entry_names = set(self.entry.field_names())
        exit_names = set(self.exit.field_names())
        self.entry_captures: list[_Capture] = []
        self.exit_captures: list[_Capture] = []
        for p in fn.params:
            if p.deref is None:
                continue
            if p.deref.kind == "scalar":
                in_name, out_name = f"{p.name}_val", p.name
                kind = p.deref.value_kind or model.pointee_kind(p.c_type)
                if in_name in entry_names:
                    self.entry_captures.append(_Capture(p, in_name, "scalar", kind))
                if out_name in exit_names:
                    self.exit_captures.append(_Capture(p, out_name, "scalar", kind))
            else:
                name = f"{p.name}_vals"
                if name in entry_names:
                    self.entry_captures.append(_Capture(p, name, "bytes"))
                if name in exit_names:
                    self.exit_captures.append(_Capture(p, name, "bytes"))

    def capture(self, model, runtime, args, captures, payload):
        mem = runtime.memory
        for c in captures:
            addr = int(args[c.param.name])
            if c.mode == "scalar":
                if addr and mem.valid(addr, 8):
                    raw = mem.read(addr, 8)
                    if c.scalar_kind == "i64":
                        payload[c.field_name] = struct.unpack("<q", raw)[0]
                    elif c.scalar_kind == "f64":
                        payload[c.field_name] = struct.unpack("<d", raw)[0]
                    else:
                        payload[c.field_name] = struct.unpack("<Q", raw)[0]
                else:
                    payload[c.field_name] = 0.0 if c.scalar_kind == "f64" else 0
            else:
                size = min(_deref_byte_size(model, c.param, args), BLOB_CAPTURE_LIMIT)
                if addr and size > 0 and mem.valid(addr, size):
                    payload[c.field_name] = mem.read(addr, size)
                else:
                    payload[c.field_name] = b""


class DispatchTable:
    """Maps function names to tracing wrappers around a MockRuntime."""

    def __init__(
        self,
        model: ApiModel,
        registry: SchemaRegistry,
        runtime: MockRuntime,
        writer: TraceWriter,
    ):
        if registry.fingerprint != model_fingerprint(model):
            raise FingerprintMismatchError(
                "registry was generated from a different model "
                f"({registry.fingerprint} != {model_fingerprint(model)})"
            )
        self.model = model
        self.registry = registry
        self.runtime = runtime
        self.writer = writer
        self._wrappers = {fn.name: _Wrapper(model, registry, fn) for fn in model.functions}
        self._profiling_schemas = {
            s.function: s for s in registry.schemas if s.event_class == "device_profiling"
        }
        self._hook = model.profiling_hook if self._profiling_schemas else None

    def functions(self):
        return tuple(self._wrappers)

    def call(self, name: str, args: dict, stream=None) -> int:
        """Invoke one traced call; returns the runtime result code."""
        w = self._wrappers.get(name)
        if w is None:
            raise UnknownFunctionError(f"no dispatch wrapper for {name!r}")
        impl = getattr(self.runtime, name)
        emit = (stream or self.writer).emit

        entry_payload = {}
        for p in w.fn.params:
            entry_payload[p.name] = args[p.name]
        w.capture(self.model, self.runtime, args, w.entry_captures, entry_payload)
        emit(EventRecord(w.entry.id, None, entry_payload))

        result = impl(*[args[n] for n in w.param_names])

        exit_payload = {"result": result}
        w.capture(self.model, self.runtime, args, w.exit_captures, exit_payload)
        emit(EventRecord(w.exit.id, None, exit_payload))

        if name == self._hook:
            for rec in self.runtime.fetch_profiling(self.runtime.clock.now_ns()):
                schema = self._profiling_schemas.get(rec.function)
                if schema is None:
                    continue
                emit(
                    EventRecord(
                        schema.id,
                        None,
                        {
                            "device_start_ns": rec.device_start_ns,
                            "device_end_ns": rec.device_end_ns,
                            "command_kind": rec.command_kind,
                            "name": rec.name,
                            "tile": rec.tile,
                            "engine": rec.engine,
                        },
                    )
                )
        return result


def build_dispatch_wrappers(
    model: ApiModel, registry: SchemaRegistry, runtime: MockRuntime, writer: TraceWriter
) -> DispatchTable:
    return DispatchTable(model, registry, runtime, writer)
