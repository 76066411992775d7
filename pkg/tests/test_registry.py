import pytest

from hapitrace.apimodel import load_api_model_yaml
from hapitrace.errors import IncompleteModelError
from hapitrace.harness import bundled_model
from hapitrace.registry import SchemaRegistry, build_schema_registry


def test_registry_is_deterministic(model):
    a = build_schema_registry(model, "hybrid")
    b = build_schema_registry(model, "hybrid")
    assert a == b
    assert [s.id for s in a.schemas] == list(range(len(a.schemas)))


def test_entry_exit_pairing(registry):
    entries = {s.function for s in registry.schemas if s.event_class == "host_entry"}
    exits = {s.function for s in registry.schemas if s.event_class == "host_exit"}
    assert entries == exits
    for s in registry.schemas:
        if s.event_class == "host_entry":
            assert registry.schema(s.name.replace("_entry", "_exit")).function == s.function


def test_mode_monotonicity(registry):
    minimal = registry.enabled_ids("minimal")
    default = registry.enabled_ids("default")
    full = registry.enabled_ids("full")
    assert minimal <= default <= full
    assert full == {s.id for s in registry.schemas}


def test_automatic_scenario_has_no_rich_payloads(model):
    reg = build_schema_registry(model, "automatic")
    assert not any(s.event_class == "device_profiling" for s in reg.schemas)
    for s in reg.schemas:
        assert not any(f.origin in ("deref_in", "deref_out") for f in s.fields)


def test_deref_out_only_in_exit_schemas(registry):
    for s in registry.schemas:
        if s.event_class != "host_exit":
            assert not any(f.origin == "deref_out" for f in s.fields)


def test_cu_mem_get_info_exit_fields():
    doc = """
api_name: cu
version: "1.0"
functions:
  - name: cuMemGetInfo
    return: int
    params:
      - {name: free, type: "size_t*", direction: out, deref: {kind: scalar}}
      - {name: total, type: "size_t*", direction: out, deref: {kind: scalar}}
"""
    reg = build_schema_registry(load_api_model_yaml(doc), "hybrid")
    exit_schema = reg.schema("cu:cuMemGetInfo_exit")
    fields = {f.name: (f.kind, f.origin) for f in exit_schema.fields}
    assert fields["free"] == ("u64", "deref_out")
    assert fields["total"] == ("u64", "deref_out")
    assert fields["result"] == ("i64", "result")


def test_memcpy_entry_matches_trace_excerpt_field_list(registry):
    entry = registry.schema("ze:zeMockCommandListAppendMemoryCopy_entry")
    assert [(f.name, f.kind) for f in entry.fields] == [
        ("hCommandList", "address"),
        ("dstptr", "address"),
        ("srcptr", "address"),
        ("size", "u64"),
        ("hSignalEvent", "address"),
        ("numWaitEvents", "u64"),
        ("phWaitEvents", "address"),
        ("phWaitEvents_vals", "blob"),
    ]


def test_empty_model_registry_has_only_telemetry_and_meta():
    reg = build_schema_registry(
        load_api_model_yaml("api_name: x\nversion: '1'\nfunctions: []\n"), "hybrid"
    )
    classes = {s.event_class for s in reg.schemas}
    assert classes == {"telemetry_sample", "meta"}
    assert sum(1 for s in reg.schemas if s.event_class == "telemetry_sample") == 9


def test_hybrid_requires_directions_on_profiled_functions():
    doc = """
api_name: x
version: "1"
functions:
  - name: f
    return: int
    params:
      - {name: a, type: uint64_t}
    attrs: [profiled]
"""
    model = load_api_model_yaml(doc)
    with pytest.raises(IncompleteModelError) as exc:
        build_schema_registry(model, "hybrid")
    assert exc.value.offenders == ["f"]
    # automatic generation remains possible
    build_schema_registry(model, "automatic")


def test_registry_dict_round_trip(registry):
    assert SchemaRegistry.from_dict(registry.to_dict()) == registry


def test_fingerprint_matches_model(registry):
    from hapitrace.apimodel import model_fingerprint

    assert registry.fingerprint == model_fingerprint(bundled_model())
