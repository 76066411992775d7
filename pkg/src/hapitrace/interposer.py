"""C interposer generation: same-signature preload shims from the schema registry.

For every model function the emitted C source defines a wrapper with the
original signature that packs the entry payload, resolves the real symbol
via next-symbol dynamic lookup, calls it, packs the exit payload (result
plus dereferenced outputs), and hands both records to the five-function
writer binding (docs/writer-binding.md). The profiling hook wrapper also
drains completed device-profiling records from the traced runtime through
``profiling_fetch_symbol``.

Payload layouts match the Python codecs byte for byte: fixed kinds are 8
bytes little-endian, strings and blobs are u32-length-prefixed, fields in
schema order. Output is deterministic: identical model and registry yield
byte-identical text.
"""

from __future__ import annotations

from .apimodel import ApiModel, model_fingerprint
from .errors import FingerprintMismatchError, RegistryError
from .registry import SchemaRegistry

_PRELUDE = """\
#define _GNU_SOURCE
#include <dlfcn.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "ze_mock.h"
#include "writer_binding.h"

#define ZTRC_BLOB_CAP 4096u

static size_t ztrc_pack_u64(uint8_t* b, size_t o, uint64_t v) { memcpy(b + o, &v, 8); return o + 8; }
static size_t ztrc_pack_i64(uint8_t* b, size_t o, int64_t v) { memcpy(b + o, &v, 8); return o + 8; }
static size_t ztrc_pack_f64(uint8_t* b, size_t o, double v) { memcpy(b + o, &v, 8); return o + 8; }

static size_t ztrc_pack_bytes(uint8_t* b, size_t o, const void* p, uint32_t n) {
    memcpy(b + o, &n, 4);
    o += 4;
    if (n) memcpy(b + o, p, n);
    return o + n;
}

static size_t ztrc_pack_str(uint8_t* b, size_t o, const char* s) {
    uint32_t n = s ? (uint32_t)strlen(s) : 0u;
    return ztrc_pack_bytes(b, o, s, n);
}

static uint64_t ztrc_deref_u64(const void* p) { uint64_t v; memcpy(&v, p, 8); return v; }

static void* ztrc_real(const char* name) {
    void* fn = dlsym(RTLD_NEXT, name);
    if (!fn) {
        fprintf(stderr, "interposer: missing real symbol %s\\n", name);
        _exit(127);
    }
    return fn;
}
"""

_PROFILING_SUPPORT = """\
/* profiling drain support provided by the traced runtime */
typedef struct {
    char function[64];
    char command_kind[16];
    char name[64];
    uint64_t device_start_ns;
    uint64_t device_end_ns;
    uint32_t tile;
    uint32_t engine;
} ztrc_profiling_record_t;

extern uint32_t %(fetch)s(ztrc_profiling_record_t* out, uint32_t max_records);

static void ztrc_drain_profiling(ztrc_stream_t* s) {
    ztrc_profiling_record_t recs[64];
    uint32_t n;
    while ((n = %(fetch)s(recs, 64)) > 0) {
        for (uint32_t i = 0; i < n; i++) {
            uint8_t pb[256];
            size_t po = 0;
            uint32_t sid;
            po = ztrc_pack_u64(pb, po, recs[i].device_start_ns);
            po = ztrc_pack_u64(pb, po, recs[i].device_end_ns);
            po = ztrc_pack_str(pb, po, recs[i].command_kind);
            po = ztrc_pack_str(pb, po, recs[i].name);
            po = ztrc_pack_u64(pb, po, (uint64_t)recs[i].tile);
            po = ztrc_pack_u64(pb, po, (uint64_t)recs[i].engine);
%(dispatch)s
            ztrc_emit(s, sid, ztrc_clock_ns(), pb, (uint32_t)po);
        }
        if (n < 64) break;
    }
}
"""

_CTOR = """\
__attribute__((constructor)) static void ztrc_ctor(void) {
    const char* dir = getenv("HAPITRACE_OUT");
    const char* meta = getenv("HAPITRACE_METADATA");
    const char* cap = getenv("HAPITRACE_BUFFER_CAP");
    if (!dir || !meta) {
        fprintf(stderr, "interposer: HAPITRACE_OUT and HAPITRACE_METADATA must be set\\n");
        _exit(125);
    }
    if (ztrc_open(dir, meta, cap ? strtoull(cap, NULL, 10) : 65536u) != 0) {
        fprintf(stderr, "interposer: cannot open trace at %s\\n", dir);
        _exit(125);
    }
}

__attribute__((destructor)) static void ztrc_dtor(void) { ztrc_close(); }
"""


def _stack_pack(model: ApiModel, p) -> str:
    kind = model.stack_kind(p.c_type)
    if kind == "string":
        return f"off = ztrc_pack_str(buf, off, {p.name});"
    if kind == "address":
        return f"off = ztrc_pack_u64(buf, off, (uint64_t)(uintptr_t){p.name});"
    if kind == "u64":
        return f"off = ztrc_pack_u64(buf, off, (uint64_t){p.name});"
    if kind == "i64":
        return f"off = ztrc_pack_i64(buf, off, (int64_t){p.name});"
    return f"off = ztrc_pack_f64(buf, off, (double){p.name});"


def _deref_len_expr(model: ApiModel, p) -> str:
    d = p.deref
    if d.kind == "array":
        mult = f" * {d.elem_size}u" if d.unit == "elements" else ""
        return f"(uint32_t){d.length_param}{mult}"
    if d.size is not None:
        return f"{d.size}u"
    base, _ = model.base_type(p.c_type)
    return f"{model.struct_defs[base].byte_size}u"


def _deref_pack(model: ApiModel, p) -> list[str]:
    d = p.deref
    if d.kind == "scalar":
        kind = d.value_kind or model.pointee_kind(p.c_type)
        read = f"{p.name} ? ztrc_deref_u64((const void*){p.name}) : 0u"
        if kind == "i64":
            return [f"off = ztrc_pack_i64(buf, off, (int64_t)({read}));"]
        if kind == "f64":
            return [
                f"off = ztrc_pack_f64(buf, off, {p.name} ? *(const double*){p.name} : 0.0);"
            ]
        return [f"off = ztrc_pack_u64(buf, off, (uint64_t)({read}));"]
    return [
        "{",
        f"    uint32_t blen = {_deref_len_expr(model, p)};",
        "    if (blen > ZTRC_BLOB_CAP) blen = ZTRC_BLOB_CAP;",
        f"    if (!{p.name}) blen = 0;",
        f"    off = ztrc_pack_bytes(buf, off, (const void*){p.name}, blen);",
        "}",
    ]


def _result_pack(model: ApiModel, fn) -> str:
    base, depth = model.base_type(fn.return_type)
    if depth > 0:
        return "off = ztrc_pack_u64(buf, off, (uint64_t)(uintptr_t)result);"
    if base in model.enums or base in ("int", "int32_t", "int64_t", "long"):
        return "off = ztrc_pack_i64(buf, off, (int64_t)result);"
    if base in ("float", "double"):
        return "off = ztrc_pack_f64(buf, off, (double)result);"
    return "off = ztrc_pack_u64(buf, off, (uint64_t)result);"


def emit_interposer_source(
    model: ApiModel,
    registry: SchemaRegistry,
    profiling_fetch_symbol: str | None = None,
) -> str:
    """Deterministic C99 interposer text for the given model/registry pair."""
    if registry.fingerprint != model_fingerprint(model):
        raise FingerprintMismatchError(
            "registry was generated from a different model "
            f"({registry.fingerprint} != {model_fingerprint(model)})"
        )
    api = model.api_name
    profiling = [s for s in registry.schemas if s.event_class == "device_profiling"]
    if profiling and profiling_fetch_symbol is None:
        raise RegistryError(
            "registry carries device-profiling schemas; a profiling_fetch_symbol is required"
        )

    out = [
        f"/* API interposer for {api!s} API, model fingerprint {registry.fingerprint}.",
        " * Generated by hapitrace codegen; do not edit by hand. */",
        _PRELUDE,
    ]
    if profiling:
        branches = []
        first = True
        for s in profiling:
            kw = "if" if first else "else if"
            first = False
            branches.append(
                f'            {kw} (strcmp(recs[i].function, "{s.function}") == 0) sid = {s.id}u;'
            )
        branches.append("            else continue;")
        out.append(_PROFILING_SUPPORT % {"fetch": profiling_fetch_symbol, "dispatch": "\n".join(branches)})

    for fn in model.functions:
        entry = registry.schema(f"{api}:{fn.name}_entry")
        exit_ = registry.schema(f"{api}:{fn.name}_exit")
        params_sig = ", ".join(f"{p.c_type} {p.name}" for p in fn.params) or "void"
        params_types = ", ".join(p.c_type for p in fn.params) or "void"
        args = ", ".join(p.name for p in fn.params)
        lines = [
            f"{fn.return_type} {fn.name}({params_sig}) {{",
            f"    static {fn.return_type} (*real_fn)({params_types}) = 0;",
            f'    if (!real_fn) *(void**)(&real_fn) = ztrc_real("{fn.name}");',
            "    ztrc_stream_t* s = ztrc_stream_acquire();",
            "    uint8_t buf[ZTRC_BLOB_CAP + 512];",
            "    size_t off = 0;",
            f"    /* {entry.name} */",
        ]
        by_param = {p.name: p for p in fn.params}
        for f in entry.fields:
            if f.origin == "stack_arg":
                lines.append("    " + _stack_pack(model, by_param[f.name]))
            else:  # deref_in
                pname = f.name[: -len("_vals")] if f.name.endswith("_vals") else f.name[: -len("_val")]
                lines.extend("    " + l for l in _deref_pack(model, by_param[pname]))
        lines.append(f"    ztrc_emit(s, {entry.id}u, ztrc_clock_ns(), buf, (uint32_t)off);")
        lines.append(f"    {fn.return_type} result = real_fn({args});")
        lines.append("    off = 0;")
        lines.append(f"    /* {exit_.name} */")
        for f in exit_.fields:
            if f.origin == "result":
                lines.append("    " + _result_pack(model, fn))
            else:  # deref_out
                pname = f.name[: -len("_vals")] if f.name.endswith("_vals") else f.name
                lines.extend("    " + l for l in _deref_pack(model, by_param[pname]))
        lines.append(f"    ztrc_emit(s, {exit_.id}u, ztrc_clock_ns(), buf, (uint32_t)off);")
        if profiling and fn.name == model.profiling_hook:
            lines.append("    ztrc_drain_profiling(s);")
        lines.append("    return result;")
        lines.append("}")
        out.append("\n".join(lines))

    out.append(_CTOR)
    return "\n\n".join(out) + "\n"
