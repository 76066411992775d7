"""Event schema registry: the trace model generated from an ApiModel.

Every traced function gets a host entry/exit schema pair. In the hybrid
scenario, entry schemas additionally capture values behind in-pointers and
exit schemas capture values behind out-pointers plus the call result;
functions flagged ``profiled`` get a device-profiling schema. The automatic
scenario (headers only, no meta) captures stack arguments and results only:
no dereferenced payloads, no device timing. Telemetry schemas for the nine
device counter rows and one annotation schema are always present.

Schema ids are dense and deterministically ordered: host pairs in model
order (entry before exit), device profiling next, the annotation schema,
telemetry last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .apimodel import ApiModel, FunctionDecl, ParamDecl, model_fingerprint
from .errors import IncompleteModelError, RegistryError

FIELD_KINDS = ("u64", "i64", "f64", "address", "string", "blob")
EVENT_CLASSES = ("host_entry", "host_exit", "device_profiling", "telemetry_sample", "meta")
MODES = ("minimal", "default", "full")
ALL_MODES = frozenset(MODES)

# (counter key, timeline track name); order follows the timeline row layout:
# chip power, tile powers, tile frequencies, compute then copy utilization.
TELEMETRY_COUNTERS = (
    ("power_domain_0", "Power|Domain 0"),
    ("power_domain_1", "Power|Domain 1"),
    ("power_domain_2", "Power|Domain 2"),
    ("frequency_domain_0", "GPU Frequency|Domain 0"),
    ("frequency_domain_1", "GPU Frequency|Domain 1"),
    ("compute_tile_0", "Compute Engine|Tile 0"),
    ("compute_tile_1", "Compute Engine|Tile 1"),
    ("copy_tile_0", "Copy Engine|Tile 0"),
    ("copy_tile_1", "Copy Engine|Tile 1"),
)

ANNOTATION_SCHEMA_SUFFIX = "annotation"

PROFILING_FIELDS = (
    ("device_start_ns", "u64"),
    ("device_end_ns", "u64"),
    ("command_kind", "string"),
    ("name", "string"),
    ("tile", "u64"),
    ("engine", "u64"),
)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    origin: str  # stack_arg | deref_in | deref_out | result | profiling | telemetry


@dataclass(frozen=True)
class EventSchema:
    id: int
    name: str
    event_class: str
    fields: tuple[FieldSpec, ...]
    mode_mask: frozenset[str]
    function: str | None = None  # owning API function, when applicable

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)


@dataclass(frozen=True)
class SchemaRegistry:
    api_name: str
    fingerprint: str
    schemas: tuple[EventSchema, ...]
    by_id: dict[int, EventSchema] = field(default_factory=dict, compare=False, repr=False)
    by_name: dict[str, EventSchema] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.by_id.update({s.id: s for s in self.schemas})
        self.by_name.update({s.name: s for s in self.schemas})

    def enabled_ids(self, mode: str) -> frozenset[int]:
        if mode not in MODES:
            raise RegistryError(f"unknown tracing mode {mode!r}")
        return frozenset(s.id for s in self.schemas if mode in s.mode_mask)

    def schema(self, name: str) -> EventSchema:
        try:
            return self.by_name[name]
        except KeyError:
            raise RegistryError(f"no schema named {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "api_name": self.api_name,
            "fingerprint": self.fingerprint,
            "schemas": [
                {
                    "id": s.id,
                    "name": s.name,
                    "class": s.event_class,
                    "function": s.function,
                    "mode_mask": sorted(s.mode_mask),
                    "fields": [
                        {"name": f.name, "kind": f.kind, "origin": f.origin} for f in s.fields
                    ],
                }
                for s in self.schemas
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SchemaRegistry":
        schemas = tuple(
            EventSchema(
                id=int(s["id"]),
                name=s["name"],
                event_class=s["class"],
                fields=tuple(FieldSpec(f["name"], f["kind"], f["origin"]) for f in s["fields"]),
                mode_mask=frozenset(s["mode_mask"]),
                function=s.get("function"),
            )
            for s in doc["schemas"]
        )
        return cls(api_name=doc["api_name"], fingerprint=doc["fingerprint"], schemas=schemas)


def _stack_fields(model: ApiModel, fn: FunctionDecl) -> list[FieldSpec]:
    return [FieldSpec(p.name, model.stack_kind(p.c_type), "stack_arg") for p in fn.params]


def _deref_field(model: ApiModel, p: ParamDecl, origin: str) -> FieldSpec:
    d = p.deref
    if d.kind == "scalar":
        kind = d.value_kind or model.pointee_kind(p.c_type)
        if kind is None or kind == "blob":
            raise RegistryError(f"cannot infer scalar deref kind for {p.name!r}")
        # exit-side scalar outputs keep the bare parameter name (cuMemGetInfo
        # style); entry-side gets a _val suffix to avoid the stack-arg name
        name = p.name if origin == "deref_out" else f"{p.name}_val"
        return FieldSpec(name, kind, origin)
    return FieldSpec(f"{p.name}_vals", "blob", origin)


def _entry_schema_fields(model: ApiModel, fn: FunctionDecl, hybrid: bool) -> tuple[FieldSpec, ...]:
    fields = _stack_fields(model, fn)
    if hybrid:
        for p in fn.params:
            if p.deref is not None and p.direction in ("in", "inout"):
                fields.append(_deref_field(model, p, "deref_in"))
    _check_unique(fn.name + "_entry", fields)
    return tuple(fields)


def _exit_schema_fields(model: ApiModel, fn: FunctionDecl, hybrid: bool) -> tuple[FieldSpec, ...]:
    base, depth = model.base_type(fn.return_type)
    if depth > 0:
        kind = "address"
    elif base in model.enums:
        kind = "i64"
    else:
        kind = model.stack_kind(fn.return_type) if base != "void" else "i64"
    fields = [FieldSpec("result", kind, "result")]
    if hybrid:
        for p in fn.params:
            if p.deref is not None and p.direction in ("out", "inout"):
                fields.append(_deref_field(model, p, "deref_out"))
    _check_unique(fn.name + "_exit", fields)
    return tuple(fields)


def _check_unique(where: str, fields: list[FieldSpec]):
    seen = set()
    for f in fields:
        if f.name in seen:
            raise RegistryError(f"duplicate field {f.name!r} in schema for {where}")
        seen.add(f.name)


def build_schema_registry(model: ApiModel, scenario: str = "hybrid") -> SchemaRegistry:
    """Build the deterministic event schema registry for a model."""
    if scenario not in ("automatic", "hybrid"):
        raise RegistryError(f"unknown scenario {scenario!r}")
    hybrid = scenario == "hybrid"
    if hybrid:
        offenders = [
            fn.name
            for fn in model.functions
            if "profiled" in fn.attrs and any(p.direction == "unknown" for p in fn.params)
        ]
        if offenders:
            raise IncompleteModelError(offenders)

    api = model.api_name
    schemas: list[EventSchema] = []

    def add(name, event_class, fields, mode_mask, function=None):
        schemas.append(
            EventSchema(len(schemas), name, event_class, tuple(fields), frozenset(mode_mask), function)
        )

    for fn in model.functions:
        mask = {"full"}
        if "default_excluded" not in fn.attrs:
            mask.add("default")
        if "minimal_included" in fn.attrs:
            mask.add("minimal")
        add(f"{api}:{fn.name}_entry", "host_entry", _entry_schema_fields(model, fn, hybrid), mask, fn.name)
        add(f"{api}:{fn.name}_exit", "host_exit", _exit_schema_fields(model, fn, hybrid), mask, fn.name)

    if hybrid:
        for fn in model.functions:
            if "profiled" not in fn.attrs:
                continue
            fields = [FieldSpec(n, k, "profiling") for n, k in PROFILING_FIELDS]
            add(f"{api}:{fn.name}_profiling", "device_profiling", fields, ALL_MODES, fn.name)

    add(f"{api}:{ANNOTATION_SCHEMA_SUFFIX}", "meta", [FieldSpec("label", "string", "stack_arg")], ALL_MODES)

    for key, _track in TELEMETRY_COUNTERS:
        fields = [FieldSpec("device", "u64", "telemetry"), FieldSpec("value", "f64", "telemetry")]
        add(f"{api}:telemetry_{key}", "telemetry_sample", fields, ALL_MODES)

    return SchemaRegistry(api_name=api, fingerprint=model_fingerprint(model), schemas=tuple(schemas))


def telemetry_track_name(schema_name: str) -> str | None:
    """Timeline counter-track name for a telemetry schema, if it is one."""
    for key, track in TELEMETRY_COUNTERS:
        if schema_name.endswith(f"telemetry_{key}"):
            return track
    return None
