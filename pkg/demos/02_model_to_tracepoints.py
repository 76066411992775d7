#!/usr/bin/env python3
"""From header text to generated tracepoints.

Shows the two-scenario story: parsing a header alone captures only stack
arguments (directions unknown, no device timing), while enriching the model
with meta-parameters unlocks dereferenced payloads and device profiling.
Also prints a slice of the generated C interposer.
"""
from hapitrace.apimodel import apply_meta_params, load_meta_params_yaml, parse_header_decls
from hapitrace.interposer import emit_interposer_source
from hapitrace.registry import build_schema_registry

HEADER = """
typedef void* cu_stream_t;
int cuMemGetInfo(size_t* free, size_t* total);
int cuStreamSynchronize(cu_stream_t stream);
"""

META = """
profiling_hook: cuStreamSynchronize
functions:
  cuMemGetInfo:
    params:
      free: {direction: out, deref: {kind: scalar}}
      total: {direction: out, deref: {kind: scalar}}
  cuStreamSynchronize:
    params:
      stream: {direction: in}
"""

bare = parse_header_decls(HEADER, api_name="cu")
print("scenario 1 (headers only):")
auto = build_schema_registry(bare, "automatic")
exit_schema = auto.schema("cu:cuMemGetInfo_exit")
print("  cuMemGetInfo exit fields:", [f.name for f in exit_schema.fields])

rich = apply_meta_params(bare, load_meta_params_yaml(META))
hybrid = build_schema_registry(rich, "hybrid")
exit_schema = hybrid.schema("cu:cuMemGetInfo_exit")
print("scenario 2 (headers + meta-parameters):")
print("  cuMemGetInfo exit fields:", [f.name for f in exit_schema.fields])

src = emit_interposer_source(rich, hybrid)
wrapper = src[src.index("int cuMemGetInfo"):]
wrapper = wrapper[: wrapper.index("}\n") + 2]
print("\ngenerated interposer wrapper:\n")
print(wrapper)
