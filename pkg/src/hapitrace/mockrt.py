"""Deterministic mock GPU runtime: the traced subject.

Models one two-tile device with a compute and a copy engine per tile, host
and device memory spaces, command lists, and events, all driven by a virtual
nanosecond clock. Every cost is a fixed constant so timing assertions in
tests are exact:

* host API call overhead: 500 ns per call
* memory copy: 1 ns per byte + 2000 ns fixed
* kernel: 1000 ns per workgroup
* event synchronize: spins in 100 ns polls after the call overhead

Address discipline: host allocations live below 2**56 (leading byte 0x00),
device allocations carry a leading 0xff byte. All bases and handle values
are fixed constants, so a given call sequence always produces identical
payloads; the optional C build replays the same scheme bit for bit.

Host memory is real in the sense that the runtime stores bytes for it:
out-parameters are written through pointers into this memory, and the
dispatch layer captures dereferenced values from it exactly like the
compiled interposer reads process memory. Fresh host memory is filled with
0x5A, so forgetting to zero a property block is observable (nonzero pNext).
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field

from .errors import HapitraceError

# result codes; must mirror ze_mock_result_t in data/ze_mock.h
SUCCESS = 0
NOT_READY = 1
ERROR_UNINITIALIZED = 2
ERROR_INVALID_HANDLE = 3
ERROR_INVALID_STATE = 4
ERROR_NOT_CLOSED = 5
ERROR_ALREADY_CLOSED = 6
ERROR_DOUBLE_EXECUTE = 7
ERROR_TIMEOUT = 8
ERROR_INVALID_ARGUMENT = 9

SPACE_HOST = 0
SPACE_DEVICE = 1

# cost table (virtual ns)
HOST_CALL_OVERHEAD_NS = 500
MEMCPY_FIXED_NS = 2000
MEMCPY_PER_BYTE_NS = 1
KERNEL_PER_GROUP_NS = 1000
SYNC_POLL_NS = 100

# address scheme; shared with the C port in cinterpose/
HOST_BASE = 0x00004AAA00000000
DEVICE_BASE = 0xFF007FFF00000000
CMDLIST_HANDLE_BASE = 0x00005EED00010000
EVENT_HANDLE_BASE = 0x00005EED00020000
HANDLE_STRIDE = 0x40
STAGING_SLOT_SIZE = 4096
ALLOC_REGION_OFFSET = 0x40000
ALLOC_ALIGN = 16
FILL_BYTE = 0x5A
POISON_BYTE = 0xEE

# device property block contents (see ze_mock_device_properties_t)
PROPS_DEVICE_ID = 0x1550
PROPS_NUM_TILES = 2
PROPS_CORE_CLOCK_MHZ = 1600
PROPS_ENGINES_PER_TILE = 2
PROPS_TOTAL_MEM_BYTES = 0x1000000000
PROPS_STRUCT_SIZE = 32

ENGINE_COMPUTE = 0
ENGINE_COPY = 1


class VirtualClock:
    """Monotone virtual nanosecond clock owned by the runtime."""

    __slots__ = ("_now",)

    def __init__(self, start_ns: int = 0):
        self._now = start_ns

    def now_ns(self) -> int:
        return self._now

    def advance(self, ns: int) -> int:
        self._now += ns
        return self._now


@dataclass
class Allocation:
    base: int
    size: int
    space: int


@dataclass
class MockEvent:
    handle: int
    state: str = "created"  # created | signaled | destroyed
    signal_time_ns: int | None = None  # set when a command schedules it


@dataclass
class MockCommandList:
    handle: int
    state: str = "open"  # open | closed | executed
    commands: list = field(default_factory=list)
    reset_count: int = 0


@dataclass
class ProfilingRecord:
    function: str  # API function that appended the command
    command_kind: str  # "memcpy" | "kernel"
    name: str
    device_start_ns: int
    device_end_ns: int
    tile: int
    engine: int
    seq: int


class _Engine:
    __slots__ = ("tile", "kind", "next_free_ns", "busy")

    def __init__(self, tile: int, kind: int):
        self.tile = tile
        self.kind = kind
        self.next_free_ns = 0
        self.busy: list[tuple[int, int, str]] = []  # (start, end, name)


class MockDevice:
    """One device, two tiles, one compute plus one copy engine per tile."""

    def __init__(self, index: int = 0, num_tiles: int = 2):
        self.index = index
        self.num_tiles = num_tiles
        self.engines = {
            (tile, kind): _Engine(tile, kind)
            for tile in range(num_tiles)
            for kind in (ENGINE_COMPUTE, ENGINE_COPY)
        }
        self._rr = {ENGINE_COMPUTE: 0, ENGINE_COPY: 0}

    def pick_engine(self, kind: int) -> _Engine:
        tile = self._rr[kind] % self.num_tiles
        self._rr[kind] += 1
        return self.engines[(tile, kind)]

    def busy_intervals(self, tile: int, kind: int) -> list[tuple[int, int]]:
        return [(s, e) for s, e, _ in self.engines[(tile, kind)].busy]

    def busy_at(self, tile: int, kind: int, t_ns: int) -> bool:
        # half-open intervals: an instant exactly at end is idle
        return any(s <= t_ns < e for s, e, _ in self.engines[(tile, kind)].busy)

    def makespan_end_ns(self) -> int:
        return max((e.next_free_ns for e in self.engines.values()), default=0)


class _HostMemory:
    """Flat segment map standing in for dereferenceable host memory."""

    def __init__(self):
        self._segments: dict[int, bytearray] = {}

    def add_segment(self, base: int, size: int, fill: int = FILL_BYTE):
        self._segments[base] = bytearray([fill]) * size if size else bytearray()

    def drop_segment(self, base: int):
        self._segments.pop(base, None)

    def _locate(self, addr: int, n: int) -> tuple[bytearray, int] | None:
        for base, seg in self._segments.items():
            if base <= addr and addr + n <= base + len(seg):
                return seg, addr - base
        return None

    def valid(self, addr: int, n: int) -> bool:
        return self._locate(addr, n) is not None

    def read(self, addr: int, n: int) -> bytes:
        loc = self._locate(addr, n)
        if loc is None:
            raise HapitraceError(f"host memory read outside any segment: 0x{addr:x}+{n}")
        seg, off = loc
        return bytes(seg[off : off + n])

    def write(self, addr: int, data: bytes):
        loc = self._locate(addr, len(data))
        if loc is None:
            raise HapitraceError(f"host memory write outside any segment: 0x{addr:x}+{len(data)}")
        seg, off = loc
        seg[off : off + len(data)] = data

    def read_u64(self, addr: int) -> int:
        return struct.unpack("<Q", self.read(addr, 8))[0]

    def write_u64(self, addr: int, value: int):
        self.write(addr, struct.pack("<Q", value))


class MockRuntime:
    """State machine behind the 13 traced API functions.

    Out-parameters are written through host-memory pointers; every function
    returns only the integer result code, mirroring the C ABI.
    """

    def __init__(self):
        self.clock = VirtualClock()
        self.device = MockDevice()
        self.memory = _HostMemory()
        self.initialized = False
        self._alloc_next = {SPACE_HOST: HOST_BASE + ALLOC_REGION_OFFSET, SPACE_DEVICE: DEVICE_BASE}
        self.allocations: dict[int, Allocation] = {}
        self._cmdlists: dict[int, MockCommandList] = {}
        self._events: dict[int, MockEvent] = {}
        self._next_cmdlist = CMDLIST_HANDLE_BASE
        self._next_event = EVENT_HANDLE_BASE
        self._pending_profiling: list[ProfilingRecord] = []
        self._profiling_seq = 0
        self._staged = 0
        self._lock = threading.RLock()

    # -- harness helpers (not part of the traced surface) ------------------

    def staging_slot(self, index: int) -> int:
        """Reserve a 4 KiB scratch page for a workload thread's pointer args."""
        base = HOST_BASE + index * STAGING_SLOT_SIZE
        if index >= ALLOC_REGION_OFFSET // STAGING_SLOT_SIZE:
            raise HapitraceError("staging slot index out of range")
        if self.memory._locate(base, 1) is None:
            self.memory.add_segment(base, STAGING_SLOT_SIZE)
        self._staged = max(self._staged, index + 1)
        return base

    def fetch_profiling(self, now_ns: int) -> list[ProfilingRecord]:
        """Profiling records of commands completed by ``now_ns``, in completion order."""
        ready = [r for r in self._pending_profiling if r.device_end_ns <= now_ns]
        if ready:
            ready.sort(key=lambda r: (r.device_end_ns, r.seq))
            remaining = [r for r in self._pending_profiling if r.device_end_ns > now_ns]
            self._pending_profiling = remaining
        return ready

    def event_signaled(self, handle: int) -> bool:
        ev = self._events.get(handle)
        return bool(
            ev and ev.signal_time_ns is not None and self.clock.now_ns() >= ev.signal_time_ns
        )

    # -- traced API surface -------------------------------------------------

    def zeMockInit(self, flags: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            self.initialized = True
            return SUCCESS

    def zeMockDeviceGetProperties(self, device: int, pProperties: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            if device != self.device.index:
                return ERROR_INVALID_ARGUMENT
            if not self.memory.valid(pProperties, PROPS_STRUCT_SIZE):
                return ERROR_INVALID_ARGUMENT
            pnext = self.memory.read_u64(pProperties)
            if pnext != 0:
                # undefined behavior stand-in: poison block, pNext left as-is
                self.memory.write(pProperties + 8, bytes([POISON_BYTE]) * 24)
                return SUCCESS
            self.memory.write(
                pProperties + 8,
                struct.pack(
                    "<IIIIQ",
                    PROPS_DEVICE_ID,
                    PROPS_NUM_TILES,
                    PROPS_CORE_CLOCK_MHZ,
                    PROPS_ENGINES_PER_TILE,
                    PROPS_TOTAL_MEM_BYTES,
                ),
            )
            return SUCCESS

    def zeMockMemAlloc(self, space: int, size: int, pptr: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            if space not in (SPACE_HOST, SPACE_DEVICE) or size <= 0:
                return ERROR_INVALID_ARGUMENT
            if not self.memory.valid(pptr, 8):
                return ERROR_INVALID_ARGUMENT
            base = self._alloc_next[space]
            aligned = (size + ALLOC_ALIGN - 1) // ALLOC_ALIGN * ALLOC_ALIGN
            self._alloc_next[space] = base + aligned
            self.allocations[base] = Allocation(base, size, space)
            if space == SPACE_HOST:
                self.memory.add_segment(base, size)
            self.memory.write_u64(pptr, base)
            return SUCCESS

    def zeMockMemFree(self, ptr: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            alloc = self.allocations.pop(ptr, None)
            if alloc is None:
                return ERROR_INVALID_HANDLE
            if alloc.space == SPACE_HOST:
                self.memory.drop_segment(ptr)
            return SUCCESS

    def zeMockCommandListCreate(self, device: int, phCommandList: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            if device != self.device.index or not self.memory.valid(phCommandList, 8):
                return ERROR_INVALID_ARGUMENT
            handle = self._next_cmdlist
            self._next_cmdlist += HANDLE_STRIDE
            self._cmdlists[handle] = MockCommandList(handle)
            self.memory.write_u64(phCommandList, handle)
            return SUCCESS

    def _memcpy_tag(self, dst: int, src: int) -> str:
        d = "D" if dst >= DEVICE_BASE else "H"
        s = "D" if src >= DEVICE_BASE else "H"
        return f"memcpy({s}2{d})"

    def zeMockCommandListAppendMemoryCopy(
        self,
        hCommandList: int,
        dstptr: int,
        srcptr: int,
        size: int,
        hSignalEvent: int,
        numWaitEvents: int,
        phWaitEvents: int,
    ) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            cl = self._cmdlists.get(hCommandList)
            if cl is None:
                return ERROR_INVALID_HANDLE
            if cl.state != "open":
                return ERROR_ALREADY_CLOSED
            if dstptr not in self.allocations or srcptr not in self.allocations:
                return ERROR_INVALID_HANDLE
            if size <= 0:
                return ERROR_INVALID_ARGUMENT
            waits = []
            if numWaitEvents:
                if not self.memory.valid(phWaitEvents, 8 * numWaitEvents):
                    return ERROR_INVALID_ARGUMENT
                waits = [
                    self.memory.read_u64(phWaitEvents + 8 * i) for i in range(numWaitEvents)
                ]
                if any(h not in self._events for h in waits):
                    return ERROR_INVALID_HANDLE
            if hSignalEvent and hSignalEvent not in self._events:
                return ERROR_INVALID_HANDLE
            cl.commands.append(
                {
                    "kind": "memcpy",
                    "function": "zeMockCommandListAppendMemoryCopy",
                    "name": self._memcpy_tag(dstptr, srcptr),
                    "duration": size * MEMCPY_PER_BYTE_NS + MEMCPY_FIXED_NS,
                    "signal": hSignalEvent,
                    "waits": waits,
                }
            )
            return SUCCESS

    def zeMockCommandListAppendLaunchKernel(
        self, hCommandList: int, pKernelName: str, groupCount: int, hSignalEvent: int
    ) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            cl = self._cmdlists.get(hCommandList)
            if cl is None:
                return ERROR_INVALID_HANDLE
            if cl.state != "open":
                return ERROR_ALREADY_CLOSED
            if groupCount <= 0 or not pKernelName:
                return ERROR_INVALID_ARGUMENT
            if hSignalEvent and hSignalEvent not in self._events:
                return ERROR_INVALID_HANDLE
            cl.commands.append(
                {
                    "kind": "kernel",
                    "function": "zeMockCommandListAppendLaunchKernel",
                    "name": pKernelName,
                    "duration": groupCount * KERNEL_PER_GROUP_NS,
                    "signal": hSignalEvent,
                    "waits": [],
                }
            )
            return SUCCESS

    def zeMockCommandListClose(self, hCommandList: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            cl = self._cmdlists.get(hCommandList)
            if cl is None:
                return ERROR_INVALID_HANDLE
            if cl.state != "open":
                return ERROR_ALREADY_CLOSED
            cl.state = "closed"
            return SUCCESS

    def zeMockCommandListExecute(self, hCommandList: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            cl = self._cmdlists.get(hCommandList)
            if cl is None:
                return ERROR_INVALID_HANDLE
            if cl.state == "open":
                return ERROR_NOT_CLOSED
            if cl.state == "executed":
                return ERROR_DOUBLE_EXECUTE
            # commands in one list run in order; each waits for the previous
            # one plus any explicit wait events, on its engine's queue
            prev_end = self.clock.now_ns()
            for cmd in cl.commands:
                engine = self.device.pick_engine(
                    ENGINE_COPY if cmd["kind"] == "memcpy" else ENGINE_COMPUTE
                )
                start = max(engine.next_free_ns, prev_end)
                for wh in cmd["waits"]:
                    ev = self._events.get(wh)
                    if ev is None or ev.signal_time_ns is None:
                        return ERROR_INVALID_STATE
                    start = max(start, ev.signal_time_ns)
                end = start + cmd["duration"]
                engine.next_free_ns = end
                engine.busy.append((start, end, cmd["name"]))
                prev_end = end
                if cmd["signal"]:
                    ev = self._events.get(cmd["signal"])
                    if ev is not None:
                        ev.signal_time_ns = end
                self._pending_profiling.append(
                    ProfilingRecord(
                        function=cmd["function"],
                        command_kind=cmd["kind"],
                        name=cmd["name"],
                        device_start_ns=start,
                        device_end_ns=end,
                        tile=engine.tile,
                        engine=engine.kind,
                        seq=self._profiling_seq,
                    )
                )
                self._profiling_seq += 1
            cl.state = "executed"
            return SUCCESS

    def zeMockCommandListReset(self, hCommandList: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            cl = self._cmdlists.get(hCommandList)
            if cl is None:
                return ERROR_INVALID_HANDLE
            cl.state = "open"
            cl.commands.clear()
            cl.reset_count += 1
            return SUCCESS

    def zeMockEventCreate(self, device: int, phEvent: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            if device != self.device.index or not self.memory.valid(phEvent, 8):
                return ERROR_INVALID_ARGUMENT
            handle = self._next_event
            self._next_event += HANDLE_STRIDE
            self._events[handle] = MockEvent(handle)
            self.memory.write_u64(phEvent, handle)
            return SUCCESS

    def zeMockEventDestroy(self, hEvent: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            if hEvent not in self._events:
                return ERROR_INVALID_HANDLE
            del self._events[hEvent]
            return SUCCESS

    def zeMockEventHostSynchronize(self, hEvent: int, timeout_ns: int) -> int:
        with self._lock:
            self.clock.advance(HOST_CALL_OVERHEAD_NS)
            if not self.initialized:
                return ERROR_UNINITIALIZED
            ev = self._events.get(hEvent)
            if ev is None:
                return ERROR_INVALID_HANDLE
            elapsed = 0
            while True:
                self.clock.advance(SYNC_POLL_NS)
                elapsed += SYNC_POLL_NS
                if ev.signal_time_ns is not None and self.clock.now_ns() >= ev.signal_time_ns:
                    ev.state = "signaled"
                    return SUCCESS
                if elapsed >= timeout_ns:
                    return NOT_READY if timeout_ns == 0 else ERROR_TIMEOUT


API_FUNCTIONS = (
    "zeMockInit",
    "zeMockDeviceGetProperties",
    "zeMockMemAlloc",
    "zeMockMemFree",
    "zeMockCommandListCreate",
    "zeMockCommandListAppendMemoryCopy",
    "zeMockCommandListAppendLaunchKernel",
    "zeMockCommandListClose",
    "zeMockCommandListExecute",
    "zeMockCommandListReset",
    "zeMockEventCreate",
    "zeMockEventDestroy",
    "zeMockEventHostSynchronize",
)
