import random
import re

import pytest

from hapitrace.apimodel import (
    apply_meta_params,
    dump_api_model_yaml,
    load_api_model_yaml,
    load_meta_params_yaml,
    model_fingerprint,
    parse_header_decls,
)
from hapitrace.errors import HeaderSyntaxError, MetaParamError, ModelError, ModelSchemaError
from hapitrace.harness import data_text

CU_MEM_GET_INFO_YAML = """
api_name: cu
version: "1.0"
functions:
  - name: cuMemGetInfo
    return: int
    params:
      - {name: free, type: "size_t*", direction: out, deref: {kind: scalar}}
      - {name: total, type: "size_t*", direction: out, deref: {kind: scalar}}
"""


def test_minimal_handle_grammar():
    model = parse_header_decls("typedef void* ze_handle_t; int zeMemFree(ze_handle_t h);")
    assert len(model.functions) == 1
    (fn,) = model.functions
    assert fn.name == "zeMemFree"
    (param,) = fn.params
    assert param.is_handle
    assert param.direction == "unknown"


def test_bundled_header_function_count_matches_grep(model):
    # independent oracle: count prototype lines in the header text
    header = data_text("ze_mock.h")
    decls = re.findall(r"^ze_mock_result_t\s+(\w+)\(", header, re.MULTILINE)
    assert len(model.functions) == len(decls)
    assert [fn.name for fn in model.functions] == decls


def test_unterminated_declaration_reports_position():
    with pytest.raises(HeaderSyntaxError) as exc:
        parse_header_decls("int f(int x")
    assert exc.value.line == 1


def test_duplicate_function_rejected():
    with pytest.raises(ModelError, match="duplicate function"):
        parse_header_decls("int f(int a); int f(int b);")


def test_unresolvable_type_rejected():
    with pytest.raises(ModelError, match="unresolvable type"):
        parse_header_decls("int f(mystery_t a);")


def test_yaml_cu_mem_get_info():
    model = load_api_model_yaml(CU_MEM_GET_INFO_YAML)
    (fn,) = model.functions
    assert [p.direction for p in fn.params] == ["out", "out"]
    assert all(p.deref.kind == "scalar" for p in fn.params)
    assert model.pointee_kind("size_t*") == "u64"


def test_yaml_empty_functions_valid():
    model = load_api_model_yaml("api_name: x\nversion: '1'\nfunctions: []\n")
    assert model.functions == ()


def test_yaml_inout_on_scalar_rejected():
    doc = """
api_name: x
version: "1"
functions:
  - name: f
    return: int
    params:
      - {name: a, type: uint32_t, direction: inout}
"""
    with pytest.raises(ModelSchemaError):
        load_api_model_yaml(doc)


def test_yaml_schema_violation_names_path():
    doc = 'api_name: x\nversion: "1"\nfunctions:\n  - {name: f, return: int}\n'
    with pytest.raises(ModelSchemaError, match=r"functions\[0\]"):
        load_api_model_yaml(doc)


def _random_header(rng: random.Random) -> str:
    lines = ["typedef void* h0_t;", "typedef void* h1_t;"]
    lines.append("typedef enum { E_A = 0, E_B = 1 } e0_t;")
    lines.append("typedef struct { void* pNext; uint32_t a; uint64_t b; } s0_t;")
    types = ["uint32_t", "uint64_t", "int64_t", "double", "h0_t", "h1_t", "e0_t",
             "void*", "const char*", "uint64_t*", "s0_t*"]
    for i in range(rng.randint(1, 8)):
        params = ", ".join(
            f"{rng.choice(types)} p{j}" for j in range(rng.randint(0, 5))
        )
        lines.append(f"int fn{i}({params});")
    return "\n".join(lines)


def test_yaml_round_trip_identity_on_random_headers():
    rng = random.Random(1234)
    for _ in range(50):
        model = parse_header_decls(_random_header(rng))
        again = load_api_model_yaml(dump_api_model_yaml(model))
        assert again == model
        assert model_fingerprint(again) == model_fingerprint(model)


def test_bundled_model_round_trip(model):
    assert load_api_model_yaml(dump_api_model_yaml(model)) == model


def test_meta_flag_round_trip(model):
    sync = model.function("zeMockEventHostSynchronize")
    assert "default_excluded" in sync.attrs


def test_apply_empty_meta_is_identity(model):
    from hapitrace.apimodel import MetaParams

    assert apply_meta_params(model, MetaParams()) == model


def test_apply_meta_is_idempotent():
    raw = parse_header_decls(data_text("ze_mock.h"), api_name="ze")
    meta = load_meta_params_yaml(data_text("ze_mock_meta.yaml"))
    once = apply_meta_params(raw, meta)
    twice = apply_meta_params(once, meta)
    assert once == twice


def test_meta_unknown_function_rejected(model):
    meta = load_meta_params_yaml("functions:\n  zeBogus:\n    attrs: [profiled]\n")
    with pytest.raises(MetaParamError, match="zeBogus"):
        apply_meta_params(model, meta)


def test_meta_unknown_parameter_rejected(model):
    meta = load_meta_params_yaml(
        "functions:\n  zeMockInit:\n    params:\n      nope: {direction: in}\n"
    )
    with pytest.raises(MetaParamError, match="nope"):
        apply_meta_params(model, meta)


def test_meta_conflicting_direction_rejected(model):
    meta = load_meta_params_yaml(
        "functions:\n  zeMockInit:\n    params:\n      flags: {direction: out}\n"
    )
    with pytest.raises((MetaParamError, ModelError)):
        apply_meta_params(model, meta)


def test_array_deref_length_must_exist_and_be_integral():
    doc = """
api_name: x
version: "1"
functions:
  - name: f
    return: int
    params:
      - {name: buf, type: "uint64_t*", direction: in,
         deref: {kind: array, length: nope, unit: bytes}}
"""
    with pytest.raises(ModelSchemaError, match="nope"):
        load_api_model_yaml(doc)


def test_array_deref_lengths_in_bundled_model_resolve(model):
    for fn in model.functions:
        for p in fn.params:
            if p.deref is not None and p.deref.kind == "array":
                lp = next(q for q in fn.params if q.name == p.deref.length_param)
                assert model.stack_kind(lp.c_type) in ("u64", "i64")


def test_fingerprint_tracks_model_changes(model):
    fp = model_fingerprint(model)
    assert fp == model_fingerprint(model)
    doc = dump_api_model_yaml(model).replace("version: '1.0'", "version: '1.1'")
    assert model_fingerprint(load_api_model_yaml(doc)) != fp
