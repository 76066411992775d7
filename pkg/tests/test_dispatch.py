import pytest

from hapitrace import mockrt
from hapitrace.dispatch import build_dispatch_wrappers
from hapitrace.errors import FingerprintMismatchError, UnknownFunctionError
from hapitrace.harness import bundled_model, bundled_registry
from hapitrace.mockrt import MockRuntime
from hapitrace.registry import build_schema_registry
from hapitrace.tracefile import TraceWriter, open_trace_reader


@pytest.fixture
def session(tmp_path):
    model = bundled_model()
    registry = bundled_registry()
    runtime = MockRuntime()
    writer = TraceWriter(tmp_path / "t", registry, mode="full",
                         clock=runtime.clock, drain="manual", pid=1000)
    table = build_dispatch_wrappers(model, registry, runtime, writer)
    return model, registry, runtime, writer, table


def _events(tmp_path, writer, registry):
    writer.drain()
    writer.finalize()
    reader = open_trace_reader(tmp_path / "t")
    return [(registry.by_id[e.schema_id].name, e.payload) for e in reader.all_events()]


def test_entry_then_exit_order(tmp_path, session):
    model, registry, runtime, writer, table = session
    stream = writer.stream(tid=1000)
    table.call("zeMockInit", {"flags": 0}, stream=stream)
    slot = runtime.staging_slot(0)
    rc = table.call(
        "zeMockMemAlloc",
        {"space": mockrt.SPACE_HOST, "size": 472, "pptr": slot},
        stream=stream,
    )
    assert rc == mockrt.SUCCESS
    events = _events(tmp_path, writer, registry)
    names = [n for n, _ in events]
    assert names == [
        "ze:zeMockInit_entry",
        "ze:zeMockInit_exit",
        "ze:zeMockMemAlloc_entry",
        "ze:zeMockMemAlloc_exit",
    ]
    alloc_exit = events[3][1]
    assert alloc_exit["result"] == 0
    assert alloc_exit["pptr"] == runtime.memory.read_u64(slot)  # deref_out capture


def test_unknown_function_rejected(session):
    *_, table = session
    with pytest.raises(UnknownFunctionError):
        table.call("zeBogus", {})


def test_fingerprint_mismatch_rejected(tmp_path):
    from hapitrace.apimodel import load_api_model_yaml

    other = load_api_model_yaml("api_name: x\nversion: '1'\nfunctions: []\n")
    other_registry = build_schema_registry(other, "hybrid")
    runtime = MockRuntime()
    writer = TraceWriter(tmp_path / "t", other_registry, drain="manual")
    with pytest.raises(FingerprintMismatchError):
        build_dispatch_wrappers(bundled_model(), other_registry, runtime, writer)
    writer.finalize()


def test_memcpy_payload_matches_address_conventions(tmp_path, session):
    model, registry, runtime, writer, table = session
    stream = writer.stream(tid=1000)
    slot = runtime.staging_slot(0)

    def call(fn, **args):
        return table.call(fn, args, stream=stream)

    call("zeMockInit", flags=0)
    call("zeMockMemAlloc", space=mockrt.SPACE_HOST, size=472, pptr=slot)
    host = runtime.memory.read_u64(slot)
    call("zeMockMemAlloc", space=mockrt.SPACE_DEVICE, size=472, pptr=slot)
    dev = runtime.memory.read_u64(slot)
    call("zeMockCommandListCreate", device=0, phCommandList=slot)
    cl = runtime.memory.read_u64(slot)
    call("zeMockEventCreate", device=0, phEvent=slot)
    ev = runtime.memory.read_u64(slot)
    wait_buf = slot + 16
    runtime.memory.write_u64(wait_buf, ev)
    call(
        "zeMockCommandListAppendMemoryCopy",
        hCommandList=cl, dstptr=dev, srcptr=host, size=472,
        hSignalEvent=0, numWaitEvents=1, phWaitEvents=wait_buf,
    )
    events = dict(_events(tmp_path, writer, registry))
    entry = events["ze:zeMockCommandListAppendMemoryCopy_entry"]
    assert entry["size"] == 472
    assert entry["srcptr"] >> 56 == 0x00
    assert entry["dstptr"] >> 56 == 0xFF
    # wait-event array captured behind the pointer, little-endian u64s
    assert entry["phWaitEvents"] == wait_buf
    assert entry["phWaitEvents_vals"] == ev.to_bytes(8, "little")


def test_properties_blob_captured_on_entry_and_exit(tmp_path, session):
    model, registry, runtime, writer, table = session
    stream = writer.stream(tid=1000)
    table.call("zeMockInit", {"flags": 0}, stream=stream)
    props = runtime.staging_slot(0)
    # skip zeroing: entry blob must expose the 0x5A fill pattern
    table.call("zeMockDeviceGetProperties", {"device": 0, "pProperties": props}, stream=stream)
    events = dict(_events(tmp_path, writer, registry))
    entry = events["ze:zeMockDeviceGetProperties_entry"]
    exit_ = events["ze:zeMockDeviceGetProperties_exit"]
    assert entry["pProperties_vals"][:8] == b"\x5a" * 8
    assert len(exit_["pProperties_vals"]) == 32


def test_profiling_delivered_at_hook_exit(tmp_path, session):
    model, registry, runtime, writer, table = session
    stream = writer.stream(tid=1000)
    slot = runtime.staging_slot(0)

    def call(fn, **args):
        table.call(fn, args, stream=stream)

    call("zeMockInit", flags=0)
    call("zeMockCommandListCreate", device=0, phCommandList=slot)
    cl = runtime.memory.read_u64(slot)
    call("zeMockEventCreate", device=0, phEvent=slot)
    ev = runtime.memory.read_u64(slot)
    call("zeMockCommandListAppendLaunchKernel",
         hCommandList=cl, pKernelName="conv", groupCount=5, hSignalEvent=ev)
    call("zeMockCommandListClose", hCommandList=cl)
    call("zeMockCommandListExecute", hCommandList=cl)
    call("zeMockEventHostSynchronize", hEvent=ev, timeout_ns=10**9)
    names = [n for n, _ in _events(tmp_path, writer, registry)]
    idx_exit = names.index("ze:zeMockEventHostSynchronize_exit")
    idx_prof = names.index("ze:zeMockCommandListAppendLaunchKernel_profiling")
    assert idx_prof == idx_exit + 1  # profiling follows the hook exit


def test_profiling_duration_matches_cost_oracle(tmp_path, session):
    model, registry, runtime, writer, table = session
    stream = writer.stream(tid=1000)
    slot = runtime.staging_slot(0)

    def call(fn, **args):
        table.call(fn, args, stream=stream)

    call("zeMockInit", flags=0)
    call("zeMockCommandListCreate", device=0, phCommandList=slot)
    cl = runtime.memory.read_u64(slot)
    call("zeMockEventCreate", device=0, phEvent=slot)
    ev = runtime.memory.read_u64(slot)
    call("zeMockCommandListAppendLaunchKernel",
         hCommandList=cl, pKernelName="conv", groupCount=7, hSignalEvent=ev)
    call("zeMockCommandListClose", hCommandList=cl)
    call("zeMockCommandListExecute", hCommandList=cl)
    call("zeMockEventHostSynchronize", hEvent=ev, timeout_ns=10**9)
    events = dict(_events(tmp_path, writer, registry))
    prof = events["ze:zeMockCommandListAppendLaunchKernel_profiling"]
    assert prof["device_end_ns"] - prof["device_start_ns"] == 7 * mockrt.KERNEL_PER_GROUP_NS
    assert prof["name"] == "conv"
    assert prof["command_kind"] == "kernel"
