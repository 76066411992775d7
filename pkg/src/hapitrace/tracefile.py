"""Binary trace format: per-thread stream files, non-blocking writer, reader.

Directory layout: ``metadata.json`` (registry, tracing mode, clock kind,
format version, completeness flag) plus one ``stream_<pid>_<tid>.bin`` file
per thread, and a ``streams.json`` index written at finalize.

Stream files are little-endian throughout. 16-byte file header: u32 magic
0x54485049, u32 format version, u64 reserved. Each record is
``[u32 schema_id][u64 timestamp_ns][u32 payload_len][payload]`` with payload
fields in schema order: u64/i64/f64/address are 8 bytes fixed, string and
blob are a u32 length followed by raw bytes.

The writer never blocks the traced program: each thread owns a private
ring buffer acquired on first emit, and when that ring is full the incoming
event is discarded (drop-newest) and counted, mirroring tracers that shed
events under pressure instead of stalling the application. A single drainer
moves ring contents to the per-stream files.
"""

from __future__ import annotations

import io
import json
import os
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CorruptRecordError,
    PayloadMismatchError,
    TraceDirectoryError,
    TraceError,
    UnknownSchemaError,
)
from .registry import EventSchema, SchemaRegistry

MAGIC = 0x54485049
FORMAT_VERSION = 1
DEFAULT_BUFFER_CAPACITY = 1 << 16

_FILE_HEADER = struct.Struct("<IIQ")
_REC_HEADER = struct.Struct("<IQI")
_U32 = struct.Struct("<I")

_FIXED_CODES = {"u64": "Q", "i64": "q", "f64": "d", "address": "Q"}


@dataclass
class EventRecord:
    """One timestamped event; stream identity is attached by the reader."""

    schema_id: int
    timestamp_ns: int | None
    payload: dict
    hostname: str | None = field(default=None, compare=False)
    pid: int | None = field(default=None, compare=False)
    tid: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class StreamInfo:
    hostname: str
    pid: int
    tid: int
    event_count: int
    dropped_count: int


class _SchemaCodec:
    """Per-schema encoder/decoder, precompiled for the hot path."""

    def __init__(self, schema: EventSchema):
        self.schema = schema
        self.names = schema.field_names()
        self.kinds = tuple(f.kind for f in schema.fields)
        self.fixed_only = all(k in _FIXED_CODES for k in self.kinds)
        if self.fixed_only:
            fmt = "<IQI" + "".join(_FIXED_CODES[k] for k in self.kinds)
            self._full = struct.Struct(fmt)
            self._payload = struct.Struct("<" + "".join(_FIXED_CODES[k] for k in self.kinds))
            self.payload_len = 8 * len(self.kinds)
        else:
            # consecutive fixed fields collapse into single struct packs
            self._ops: list[tuple] = []
            run: list[tuple[str, str]] = []
            for n, k in zip(self.names, self.kinds):
                if k in _FIXED_CODES:
                    run.append((n, k))
                    continue
                if run:
                    self._ops.append(self._fixed_op(run))
                    run = []
                self._ops.append(("str" if k == "string" else "blob", n))
            if run:
                self._ops.append(self._fixed_op(run))

    @staticmethod
    def _fixed_op(run):
        s = struct.Struct("<" + "".join(_FIXED_CODES[k] for _, k in run))
        return ("fix", s, tuple(n for n, _ in run))

    def encode_record(self, timestamp_ns: int, payload: dict) -> bytes:
        names = self.names
        if len(payload) != len(names):
            raise PayloadMismatchError(
                f"schema {self.schema.name}: expected {len(names)} fields, got {len(payload)}"
            )
        try:
            if self.fixed_only:
                return self._full.pack(
                    self.schema.id,
                    timestamp_ns,
                    self.payload_len,
                    *[payload[n] for n in names],
                )
            parts = []
            for op in self._ops:
                tag = op[0]
                if tag == "fix":
                    _, s, keys = op
                    parts.append(s.pack(*[payload[k] for k in keys]))
                elif tag == "str":
                    b = payload[op[1]].encode("utf-8")
                    parts.append(_U32.pack(len(b)))
                    parts.append(b)
                else:
                    v = payload[op[1]]
                    if not isinstance(v, (bytes, bytearray)):
                        raise PayloadMismatchError(
                            f"schema {self.schema.name}: field {op[1]} wants bytes"
                        )
                    parts.append(_U32.pack(len(v)))
                    parts.append(bytes(v))
            body = b"".join(parts)
            return _REC_HEADER.pack(self.schema.id, timestamp_ns, len(body)) + body
        except KeyError as e:
            raise PayloadMismatchError(
                f"schema {self.schema.name}: missing field {e.args[0]!r}"
            ) from None
        except (struct.error, AttributeError, TypeError) as e:
            raise PayloadMismatchError(f"schema {self.schema.name}: {e}") from None

    def decode_payload(self, buf: bytes) -> dict:
        if self.fixed_only:
            if len(buf) != self.payload_len:
                raise ValueError("payload length mismatch")
            return dict(zip(self.names, self._payload.unpack(buf)))
        out = {}
        off = 0
        for n, k in zip(self.names, self.kinds):
            if k in _FIXED_CODES:
                (v,) = struct.unpack_from("<" + _FIXED_CODES[k], buf, off)
                off += 8
            else:
                (ln,) = _U32.unpack_from(buf, off)
                off += 4
                raw = buf[off : off + ln]
                if len(raw) != ln:
                    raise ValueError("truncated variable field")
                off += ln
                v = raw.decode("utf-8") if k == "string" else bytes(raw)
            out[n] = v
        if off != len(buf):
            raise ValueError("trailing payload bytes")
        return out


class _CodecTable:
    def __init__(self, registry: SchemaRegistry):
        self.by_id = {s.id: _SchemaCodec(s) for s in registry.schemas}

    def get(self, schema_id: int) -> _SchemaCodec:
        try:
            return self.by_id[schema_id]
        except KeyError:
            raise UnknownSchemaError(f"unknown schema id {schema_id}") from None


def encode_record(schema: EventSchema, timestamp_ns: int, payload: dict) -> bytes:
    return _SchemaCodec(schema).encode_record(timestamp_ns, payload)


def decode_records(data: bytes, registry: SchemaRegistry, stream: str = "<memory>"):
    """Decode a headerless record sequence; mainly for tests and tools."""
    table = _CodecTable(registry)
    off = 0
    out = []
    while off < len(data):
        rec, off = _decode_one(data, off, table, stream)
        out.append(rec)
    return out


def _decode_one(data: bytes, off: int, table: _CodecTable, stream: str):
    if off + _REC_HEADER.size > len(data):
        raise CorruptRecordError("truncated record header", stream, off)
    schema_id, ts, plen = _REC_HEADER.unpack_from(data, off)
    body_start = off + _REC_HEADER.size
    if body_start + plen > len(data):
        raise CorruptRecordError("truncated record payload", stream, off)
    try:
        codec = table.get(schema_id)
    except UnknownSchemaError:
        raise UnknownSchemaError(
            f"unknown schema id {schema_id} (stream {stream}, byte offset {off})"
        ) from None
    try:
        payload = codec.decode_payload(data[body_start : body_start + plen])
    except ValueError as e:
        raise CorruptRecordError(str(e), stream, off) from None
    return EventRecord(schema_id, ts, payload), body_start + plen


# ---------------------------------------------------------------------------
# writer


class _Ring:
    """Single-producer single-consumer ring; drop-newest on overflow."""

    __slots__ = ("buf", "cap", "head", "tail")

    def __init__(self, capacity: int):
        self.buf = [None] * capacity
        self.cap = capacity
        self.head = 0  # consumer position
        self.tail = 0  # producer position

    def push(self, item) -> bool:
        tail = self.tail
        if tail - self.head >= self.cap:
            return False
        self.buf[tail % self.cap] = item
        self.tail = tail + 1
        return True

    def pop_batch(self) -> list:
        head, tail = self.head, self.tail
        out = []
        while head < tail:
            out.append(self.buf[head % self.cap])
            head += 1
        self.head = head
        return out


class _Stream:
    def __init__(self, hostname: str, pid: int, tid: int, capacity: int, path: Path):
        self.hostname = hostname
        self.pid = pid
        self.tid = tid
        self.path = path
        self.ring = _Ring(capacity)
        self.enqueued = 0
        self.dropped = 0
        self._fh: io.BufferedWriter | None = None

    def emit_bytes(self, data: bytes) -> bool:
        if self.ring.push(data):
            self.enqueued += 1
            return True
        self.dropped += 1
        return False

    def flush_to_file(self):
        batch = self.ring.pop_batch()
        if not batch:
            return
        if self._fh is None:
            self._fh = open(self.path, "wb")
            self._fh.write(_FILE_HEADER.pack(MAGIC, FORMAT_VERSION, 0))
        self._fh.write(b"".join(batch))

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def info(self) -> StreamInfo:
        return StreamInfo(self.hostname, self.pid, self.tid, self.enqueued, self.dropped)


class TraceWriter:
    """Trace handle for emitting events; see module docstring for contracts.

    ``drain`` selects who moves ring contents to disk: ``"thread"`` starts a
    background drainer (wall-clock tracing), ``"manual"`` leaves draining to
    explicit ``drain()`` calls (deterministic virtual-clock runs and overflow
    tests).
    """

    def __init__(
        self,
        directory,
        registry: SchemaRegistry,
        mode: str = "default",
        clock="monotonic-wall",
        buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
        drain: str = "thread",
        hostname: str | None = None,
        pid: int | None = None,
    ):
        if buffer_capacity < 1:
            raise TraceError("buffer_capacity must be at least 1")
        self.dir = Path(directory)
        if self.dir.exists():
            if not self.dir.is_dir() or any(self.dir.iterdir()):
                raise TraceDirectoryError(f"{self.dir} exists and is not an empty directory")
        else:
            try:
                self.dir.mkdir(parents=True)
            except OSError as e:
                raise TraceDirectoryError(f"cannot create {self.dir}: {e}") from None
        self.registry = registry
        self.mode = mode
        self.capacity = buffer_capacity
        self.hostname = hostname or socket.gethostname()
        self.pid = pid if pid is not None else os.getpid()
        if clock == "monotonic-wall":
            self.clock_kind = "monotonic-wall"
            self._now = time.monotonic_ns
        else:
            self.clock_kind = "virtual"
            self._now = clock.now_ns
        self._codecs = _CodecTable(registry)
        self._enabled = registry.enabled_ids(mode)
        self._streams: dict[tuple[int, int], _Stream] = {}
        self._streams_lock = threading.Lock()
        self._tls = threading.local()
        self._finalized = False
        self._stop = threading.Event()
        self._drainer = None
        self._write_metadata(complete=False)
        if drain == "thread":
            self._drainer = threading.Thread(target=self._drain_loop, daemon=True)
            self._drainer.start()
        elif drain != "manual":
            raise TraceError(f"unknown drain policy {drain!r}")

    def _write_metadata(self, complete: bool):
        meta = {
            "format_version": FORMAT_VERSION,
            "api_name": self.registry.api_name,
            "mode": self.mode,
            "clock": self.clock_kind,
            "buffer_capacity": self.capacity,
            "complete": complete,
            "registry": self.registry.to_dict(),
        }
        (self.dir / "metadata.json").write_text(json.dumps(meta, indent=1))

    def stream(self, pid: int | None = None, tid: int | None = None) -> "StreamHandle":
        """Acquire (or create) the stream for an explicit (pid, tid) identity."""
        key = (self.pid if pid is None else pid, threading.get_native_id() if tid is None else tid)
        with self._streams_lock:
            s = self._streams.get(key)
            if s is None:
                path = self.dir / f"stream_{key[0]}_{key[1]}.bin"
                s = _Stream(self.hostname, key[0], key[1], self.capacity, path)
                self._streams[key] = s
        return StreamHandle(self, s)

    def _thread_stream(self) -> "StreamHandle":
        h = getattr(self._tls, "handle", None)
        if h is None:
            h = self.stream()
            self._tls.handle = h
        return h

    def emit(self, rec: EventRecord) -> str:
        """Emit on the calling thread's stream; returns written/filtered/dropped."""
        return self._thread_stream().emit(rec)

    def _emit_on(self, stream: _Stream, rec: EventRecord) -> str:
        if self._finalized:
            raise TraceError("emit after finalize")
        schema_id = rec.schema_id
        if schema_id not in self._codecs.by_id:
            raise UnknownSchemaError(f"unknown schema id {schema_id}")
        if schema_id not in self._enabled:
            return "filtered"
        ts = rec.timestamp_ns if rec.timestamp_ns is not None else self._now()
        data = self._codecs.by_id[schema_id].encode_record(ts, rec.payload)
        return "written" if stream.emit_bytes(data) else "dropped"

    def _drain_loop(self):
        while not self._stop.is_set():
            self.drain()
            self._stop.wait(0.002)

    def drain(self):
        with self._streams_lock:
            streams = list(self._streams.values())
        for s in streams:
            s.flush_to_file()

    def finalize(self) -> list[StreamInfo]:
        """Flush everything, write the stream index, mark the trace complete.

        Callers must guarantee quiescence: no emits may be in flight.
        """
        if self._finalized:
            raise TraceError("finalize called twice")
        if self._drainer is not None:
            self._stop.set()
            self._drainer.join()
        self._finalized = True
        infos = []
        try:
            with self._streams_lock:
                streams = sorted(
                    self._streams.values(), key=lambda s: (s.hostname, s.pid, s.tid)
                )
            for s in streams:
                s.flush_to_file()
                s.close()
                if s.enqueued or s.dropped:  # acquired-but-silent streams are not listed
                    infos.append(s.info())
            index = {
                "streams": [
                    {
                        "hostname": i.hostname,
                        "pid": i.pid,
                        "tid": i.tid,
                        "event_count": i.event_count,
                        "dropped_count": i.dropped_count,
                        "file": f"stream_{i.pid}_{i.tid}.bin",
                    }
                    for i in infos
                ]
            }
            (self.dir / "streams.json").write_text(json.dumps(index, indent=1))
            self._write_metadata(complete=True)
        except OSError as e:
            # leave the complete:false marker in place
            raise TraceError(f"finalize failed, trace marked incomplete: {e}") from None
        return infos


class StreamHandle:
    """Cheap facade binding a writer to one stream identity."""

    __slots__ = ("_writer", "_stream")

    def __init__(self, writer: TraceWriter, stream: _Stream):
        self._writer = writer
        self._stream = stream

    def emit(self, rec: EventRecord) -> str:
        return self._writer._emit_on(self._stream, rec)

    @property
    def identity(self) -> tuple[str, int, int]:
        s = self._stream
        return (s.hostname, s.pid, s.tid)


def open_trace_writer(
    directory,
    registry: SchemaRegistry,
    mode: str = "default",
    clock="monotonic-wall",
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
    **kw,
) -> TraceWriter:
    return TraceWriter(directory, registry, mode, clock, buffer_capacity, **kw)


# ---------------------------------------------------------------------------
# reader


class StreamCursor:
    """Sequential reader over one stream file; yields records in file order."""

    def __init__(self, directory: Path, entry: dict, registry: SchemaRegistry, codecs: _CodecTable):
        self.hostname = entry["hostname"]
        self.pid = entry["pid"]
        self.tid = entry["tid"]
        self.info = StreamInfo(
            self.hostname, self.pid, self.tid, entry["event_count"], entry["dropped_count"]
        )
        self.name = entry["file"]
        self._codecs = codecs
        self._data = (directory / entry["file"]).read_bytes() if entry["event_count"] else b""
        self._off = 0
        if self._data:
            if len(self._data) < _FILE_HEADER.size:
                raise CorruptRecordError("truncated file header", self.name, 0)
            magic, version, _ = _FILE_HEADER.unpack_from(self._data, 0)
            if magic != MAGIC:
                raise CorruptRecordError(f"bad magic 0x{magic:08x}", self.name, 0)
            if version != FORMAT_VERSION:
                raise CorruptRecordError(f"unsupported format version {version}", self.name, 4)
            self._off = _FILE_HEADER.size

    def next_event(self) -> EventRecord | None:
        if not self._data or self._off >= len(self._data):
            return None
        rec, self._off = _decode_one(self._data, self._off, self._codecs, self.name)
        rec.hostname = self.hostname
        rec.pid = self.pid
        rec.tid = self.tid
        return rec

    def __iter__(self):
        while True:
            rec = self.next_event()
            if rec is None:
                return
            yield rec


class TraceReader:
    def __init__(self, directory):
        self.dir = Path(directory)
        meta_path = self.dir / "metadata.json"
        if not meta_path.exists():
            raise TraceDirectoryError(f"{self.dir} is not a trace directory (no metadata.json)")
        meta = json.loads(meta_path.read_text())
        if not meta.get("complete", False):
            raise TraceDirectoryError(f"{self.dir} holds an unfinalized or incomplete trace")
        self.metadata = meta
        self.mode = meta["mode"]
        self.clock_kind = meta["clock"]
        self.registry = SchemaRegistry.from_dict(meta["registry"])
        self._codecs = _CodecTable(self.registry)
        index = json.loads((self.dir / "streams.json").read_text())
        self._entries = sorted(
            index["streams"], key=lambda e: (e["hostname"], e["pid"], e["tid"])
        )

    def streams(self) -> list[StreamCursor]:
        return [StreamCursor(self.dir, e, self.registry, self._codecs) for e in self._entries]

    def stream_infos(self) -> list[StreamInfo]:
        return [
            StreamInfo(e["hostname"], e["pid"], e["tid"], e["event_count"], e["dropped_count"])
            for e in self._entries
        ]

    def all_events(self):
        """Per-stream concatenation, mainly for tests; use the muxer for analysis."""
        for cur in self.streams():
            yield from cur


def open_trace_reader(directory) -> TraceReader:
    return TraceReader(directory)


def next_event(cursor: StreamCursor) -> EventRecord | None:
    return cursor.next_event()
