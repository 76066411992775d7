"""Built-in analysis sinks: pretty print, tally, timeline export, validation.

Output formats are frozen by golden tests and documented in
docs/analysis-outputs.md:

* pretty print: one line per event,
  ``HH:MM:SS.nnnnnnnnn - <hostname> - vpid: P, vtid: T - <api>:<event>: { f: v, ... }``
  with addresses as 0x-prefixed 16-hex-digit values and blobs as
  ``[ b0, b1, ... ]`` byte lists.
* tally: per-name aggregation (count, total, min, max, average) split into a
  host-API and a device-command section, mergeable across ranks.
* timeline: Chrome trace event JSON (Perfetto-loadable), complete events for
  spans and counter events for the nine telemetry rows, microsecond stamps.
* validation: post-mortem rule checks over raw events (uninitialized pNext
  extension slots, leaked event handles, command lists executed twice
  without a reset, orphan exits forwarded from the interval stage).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .apimodel import ApiModel
from .errors import FingerprintMismatchError, HapitraceError
from .pipeline import Message, Sink
from .registry import SchemaRegistry
from .tracefile import StreamInfo

# ---------------------------------------------------------------------------
# shared rendering helpers

_TIME_UNITS = ((1_000_000_000, "s"), (1_000_000, "ms"), (1_000, "us"), (1, "ns"))


def fmt_duration(ns: int) -> str:
    """Scale to the largest unit keeping magnitude >= 1, two decimals."""
    for div, unit in _TIME_UNITS:
        if ns >= div:
            return f"{ns / div:.2f}{unit}"
    return "0.00ns"


def fmt_timestamp(ns: int) -> str:
    s, frac = divmod(ns, 1_000_000_000)
    s %= 86400
    return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}.{frac:09d}"


def _fmt_value(kind: str, value) -> str:
    if kind == "address":
        return f"0x{value:016x}"
    if kind == "string":
        return json.dumps(value)
    if kind == "blob":
        return "[ " + ", ".join(str(b) for b in value) + " ]"
    if kind == "f64":
        return repr(float(value))
    return str(value)


# ---------------------------------------------------------------------------
# pretty print


class PrettyPrintSink(Sink):
    """Renders every raw event as one text line."""

    name = "pretty"
    consumes = "events"

    def __init__(self, write=None):
        self._write = write
        self._lines: list[str] = []

    def on_start(self, registry: SchemaRegistry):
        self._registry = registry

    def on_message(self, msg: Message):
        if msg.kind != "event":
            return
        rec = msg.event
        schema = self._registry.by_id[rec.schema_id]
        fields = ", ".join(
            f"{f.name}: {_fmt_value(f.kind, rec.payload[f.name])}" for f in schema.fields
        )
        line = (
            f"{fmt_timestamp(rec.timestamp_ns)} - {rec.hostname} - "
            f"vpid: {rec.pid}, vtid: {rec.tid} - {schema.name}: "
            + ("{ " + fields + " }" if fields else "{ }")
        )
        if self._write is not None:
            self._write(line)
        else:
            self._lines.append(line)

    def on_finish(self) -> str:
        return "\n".join(self._lines) + ("\n" if self._lines else "")


def format_event_line(registry: SchemaRegistry, rec) -> str:
    """Render one record exactly as the pretty sink would."""
    sink = PrettyPrintSink()
    sink.on_start(registry)
    sink.on_message(Message("event", event=rec))
    return sink._lines[0]


# ---------------------------------------------------------------------------
# tally


@dataclass
class TallyRow:
    name: str
    section: str  # "host" | "device"
    time_ns: int = 0
    count: int = 0
    min_ns: int = 0
    max_ns: int = 0
    error_count: int = 0

    def fold(self, duration_ns: int, error: bool):
        if self.count == 0:
            self.min_ns = self.max_ns = duration_ns
        else:
            self.min_ns = min(self.min_ns, duration_ns)
            self.max_ns = max(self.max_ns, duration_ns)
        self.count += 1
        self.time_ns += duration_ns
        if error:
            self.error_count += 1

    @property
    def average_ns(self) -> float:
        return self.time_ns / self.count if self.count else 0.0


@dataclass
class TallyReport:
    fingerprint: str | None = None
    backends: tuple[str, ...] = ()
    hostnames: frozenset = frozenset()
    processes: frozenset = frozenset()  # (hostname, pid)
    threads: frozenset = frozenset()  # (hostname, pid, tid)
    rows: dict = field(default_factory=dict)  # (section, name) -> TallyRow
    dropped: dict = field(default_factory=dict)  # (hostname, pid, tid) -> count

    def section_rows(self, section: str) -> list[TallyRow]:
        rows = [r for r in self.rows.values() if r.section == section]
        rows.sort(key=lambda r: (-r.time_ns, r.name))
        return rows

    def total_dropped(self) -> int:
        return sum(self.dropped.values())

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "fingerprint": self.fingerprint,
            "backends": sorted(self.backends),
            "hostnames": sorted(self.hostnames),
            "processes": sorted([list(p) for p in self.processes]),
            "threads": sorted([list(t) for t in self.threads]),
            "rows": [
                {
                    "section": r.section,
                    "name": r.name,
                    "time_ns": r.time_ns,
                    "count": r.count,
                    "min_ns": r.min_ns,
                    "max_ns": r.max_ns,
                    "error_count": r.error_count,
                }
                for _, r in sorted(self.rows.items())
            ],
            "dropped": [
                {"hostname": h, "pid": p, "tid": t, "count": c}
                for (h, p, t), c in sorted(self.dropped.items())
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TallyReport":
        doc = json.loads(text)
        rows = {}
        for r in doc["rows"]:
            rows[(r["section"], r["name"])] = TallyRow(
                name=r["name"],
                section=r["section"],
                time_ns=r["time_ns"],
                count=r["count"],
                min_ns=r["min_ns"],
                max_ns=r["max_ns"],
                error_count=r["error_count"],
            )
        return cls(
            fingerprint=doc["fingerprint"],
            backends=tuple(doc["backends"]),
            hostnames=frozenset(doc["hostnames"]),
            processes=frozenset(tuple(p) for p in doc["processes"]),
            threads=frozenset(tuple(t) for t in doc["threads"]),
            rows=rows,
            dropped={(d["hostname"], d["pid"], d["tid"]): d["count"] for d in doc["dropped"]},
        )


class TallySink(Sink):
    name = "tally"
    consumes = "intervals"

    def on_start(self, registry: SchemaRegistry):
        self.report = TallyReport(
            fingerprint=registry.fingerprint,
            backends=(f"BACKEND_{registry.api_name.upper()}",),
        )
        self._hostnames = set()
        self._processes = set()
        self._threads = set()

    def on_streams(self, infos: list[StreamInfo]):
        for i in infos:
            self._hostnames.add(i.hostname)
            self._processes.add((i.hostname, i.pid))
            self._threads.add((i.hostname, i.pid, i.tid))
            if i.dropped_count:
                self.report.dropped[(i.hostname, i.pid, i.tid)] = i.dropped_count

    def on_message(self, msg: Message):
        if msg.kind != "span":
            return
        span = msg.span
        section = "host" if span.kind == "host_api" else "device"
        key = (section, span.name)
        row = self.report.rows.get(key)
        if row is None:
            row = self.report.rows[key] = TallyRow(span.name, section)
        row.fold(span.duration_ns, span.result != 0)
        self._hostnames.add(span.hostname)
        self._processes.add((span.hostname, span.pid))
        self._threads.add((span.hostname, span.pid, span.tid))

    def on_finish(self) -> TallyReport:
        self.report.hostnames = frozenset(self._hostnames)
        self.report.processes = frozenset(self._processes)
        self.report.threads = frozenset(self._threads)
        return self.report


def _percent(part: int, total: int) -> str:
    # truncated, not rounded: 36.996 % prints as 36.99
    basis = int(part * 10000 // total) if total else 0
    return f"{basis // 100}.{basis % 100:02d}"


def _render_table(rows: list[TallyRow]) -> list[str]:
    total = sum(r.time_ns for r in rows)
    headers = ("Name", "Time", "Time(%)", "Calls", "Average", "Min", "Max")
    cells = [
        (
            r.name,
            fmt_duration(r.time_ns),
            _percent(r.time_ns, total),
            str(r.count),
            fmt_duration(int(r.average_ns)),
            fmt_duration(r.min_ns),
            fmt_duration(r.max_ns),
        )
        for r in rows
    ]
    widths = [
        max(len(headers[i]), max((len(c[i]) for c in cells), default=0)) for i in range(7)
    ]
    lines = [" | ".join(h.rjust(widths[i]) for i, h in enumerate(headers))]
    for c in cells:
        lines.append(" | ".join(v.rjust(widths[i]) for i, v in enumerate(c)))
    return lines


def render_tally(report: TallyReport) -> str:
    """Fixed-width text rendering; host section first, then device commands."""
    banner = (
        ",".join(sorted(report.backends))
        + f" | {len(report.hostnames)} Hostnames"
        + f" | {len(report.processes)} Processes"
        + f" | {len(report.threads)} Threads | "
    )
    out = [banner, ""]
    host_rows = report.section_rows("host")
    if host_rows:
        out.extend(_render_table(host_rows))
    device_rows = report.section_rows("device")
    if device_rows:
        out.extend(["", "Device commands:", ""])
        out.extend(_render_table(device_rows))
    dropped = report.total_dropped()
    if dropped:
        detail = ", ".join(
            f"{h}/{p}/{t}: {c}" for (h, p, t), c in sorted(report.dropped.items())
        )
        out.extend(["", f"Dropped events: {dropped} ({detail})"])
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# timeline export (Chrome trace event JSON)

DEVICE_TRACK_PID_BASE = 9_000_000

_COUNTER_TRACKS = {
    ("power", 0): "Power|Domain 0",
    ("power", 1): "Power|Domain 1",
    ("power", 2): "Power|Domain 2",
    ("frequency", 0): "GPU Frequency|Domain 0",
    ("frequency", 1): "GPU Frequency|Domain 1",
    ("compute_engine", 0): "Compute Engine|Tile 0",
    ("compute_engine", 1): "Compute Engine|Tile 1",
    ("copy_engine", 0): "Copy Engine|Tile 0",
    ("copy_engine", 1): "Copy Engine|Tile 1",
}

_DEVICE_TRACK_NAMES = {
    (0, 0): "Tile 0 Compute",
    (0, 1): "Tile 0 Copy",
    (1, 0): "Tile 1 Compute",
    (1, 1): "Tile 1 Copy",
}


def _json_safe(payload: dict) -> dict:
    out = {}
    for k, v in payload.items():
        if isinstance(v, (bytes, bytearray)):
            out[k] = list(v)
        else:
            out[k] = v
    return out


class TimelineSink(Sink):
    """Exports spans and telemetry samples as Chrome trace events."""

    name = "timeline"
    consumes = "intervals"

    def __init__(self, out_path=None, device_index: int = 0):
        self.out_path = out_path
        self.device_pid = DEVICE_TRACK_PID_BASE + device_index
        self.objects: list[dict] = []
        self._seen_tracks = set()

    def _meta(self, pid: int, tid: int, name: str, kind: str):
        key = (pid, tid, kind)
        if key in self._seen_tracks:
            return
        self._seen_tracks.add(key)
        self.objects.append(
            {"name": kind, "ph": "M", "ts": 0, "pid": pid, "tid": tid, "args": {"name": name}}
        )

    def on_message(self, msg: Message):
        if msg.kind == "span":
            span = msg.span
            if span.kind == "host_api":
                pid, tid = span.pid, span.tid
                self._meta(pid, 0, f"Host {span.hostname} pid {pid}", "process_name")
                args = {"result": span.result}
                if span.truncated:
                    args["truncated"] = True
                obj = {
                    "name": span.name,
                    "ph": "X",
                    "ts": span.start_ns / 1000.0,
                    "dur": span.duration_ns / 1000.0,
                    "pid": pid,
                    "tid": tid,
                    "args": args,
                }
            else:
                tile = int(span.entry_payload.get("tile", 0))
                engine = int(span.entry_payload.get("engine", 0))
                tid = tile * 2 + engine
                self._meta(self.device_pid, 0, "Device 0", "process_name")
                self._meta(
                    self.device_pid, tid, _DEVICE_TRACK_NAMES.get((tile, engine), "Device"), "thread_name"
                )
                obj = {
                    "name": span.name,
                    "ph": "X",
                    "ts": span.start_ns / 1000.0,
                    "dur": span.duration_ns / 1000.0,
                    "pid": self.device_pid,
                    "tid": tid,
                    "args": {"kind": span.entry_payload.get("command_kind", "")},
                }
            self.objects.append(obj)
        elif msg.kind == "sample":
            s = msg.sample
            track = _COUNTER_TRACKS.get((s.counter, s.domain))
            if track is None:
                raise HapitraceError(f"no timeline track for counter {s.counter}|{s.domain}")
            self.objects.append(
                {
                    "name": track,
                    "ph": "C",
                    "ts": s.timestamp_ns / 1000.0,
                    "pid": DEVICE_TRACK_PID_BASE + s.device,
                    "tid": 0,
                    "args": {"value": s.value},
                }
            )

    def on_finish(self) -> list[dict]:
        if self.out_path is not None:
            with open(self.out_path, "w") as fh:
                json.dump(self.objects, fh, indent=1)
        return self.objects


TIMELINE_REQUIRED_KEYS = ("name", "ph", "ts", "pid", "tid")


def check_timeline_object(obj: dict) -> bool:
    """Required-key schema for every exported object; counters also need args."""
    if not all(k in obj for k in TIMELINE_REQUIRED_KEYS):
        return False
    if obj["ph"] == "C" and "args" not in obj:
        return False
    if obj["ph"] == "X" and "dur" not in obj:
        return False
    return True


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationFinding:
    rule: str  # uninit_pnext | leaked_event | cmdlist_not_reset | orphan_exit
    subject: int  # offending handle or address value
    stream: str
    timestamp_ns: int
    message: str


class ValidationSink(Sink):
    """Post-mortem rule checks; needs payloads from a hybrid registry."""

    name = "validate"
    consumes = "events"

    def __init__(self, model: ApiModel):
        self.model = model
        self._findings: list[ValidationFinding] = []
        self._orphans: list[ValidationFinding] = []

    def on_start(self, registry: SchemaRegistry):
        from .apimodel import model_fingerprint

        if registry.fingerprint != model_fingerprint(self.model):
            raise FingerprintMismatchError("validator model does not match the trace registry")
        self.registry = registry
        model = self.model
        # property-query entries: struct-blob params whose struct leads with pNext
        self._pnext_checks = {}
        for fn in model.functions:
            for p in fn.params:
                if p.deref is None or p.deref.kind != "blob":
                    continue
                base, _ = model.base_type(p.c_type)
                sd = model.struct_defs.get(base)
                if sd and sd.fields and sd.fields[0].name == "pNext":
                    entry = registry.schema(f"{model.api_name}:{fn.name}_entry")
                    self._pnext_checks[entry.id] = (fn.name, f"{p.name}_vals")
        # creates/releases pairs: created handle read from the first scalar
        # deref-out address field; released handle from the first handle arg
        self._creators = {}
        self._releasers = {}
        for fn in model.functions:
            if "creates_handle" in fn.attrs:
                ex = registry.schema(f"{model.api_name}:{fn.name}_exit")
                out_field = next(
                    (f.name for f in ex.fields if f.origin == "deref_out" and f.kind == "address"),
                    None,
                )
                if out_field:
                    self._creators[ex.id] = (fn.name, out_field)
            if "releases_handle" in fn.attrs:
                ex = registry.schema(f"{model.api_name}:{fn.name}_exit")
                handle_param = next((p.name for p in fn.params if p.is_handle), None)
                if handle_param:
                    en = registry.schema(f"{model.api_name}:{fn.name}_entry")
                    self._releasers[ex.id] = (fn.name, en.id, handle_param)
        # command-list discipline, matched by name convention
        self._execute_ids = set()
        self._reset_ids = set()
        self._cl_param = {}
        for fn in model.functions:
            if "CommandList" not in fn.name:
                continue
            handle_param = next((p.name for p in fn.params if p.is_handle), None)
            if handle_param is None:
                continue
            ex = registry.schema(f"{model.api_name}:{fn.name}_exit")
            en = registry.schema(f"{model.api_name}:{fn.name}_entry")
            if fn.name.endswith("Execute"):
                self._execute_ids.add(en.id)
                self._cl_param[en.id] = handle_param
            elif fn.name.endswith("Reset"):
                self._reset_ids.add(ex.id)
                self._cl_param[ex.id] = (en.id, handle_param)
        self._live_created: dict[int, ValidationFinding] = {}
        self._executed: dict[int, bool] = {}
        self._pending_entries: dict = {}  # (stream key, schema id) -> last entry payload

    @staticmethod
    def _stream_of(rec) -> str:
        return f"{rec.hostname}/{rec.pid}/{rec.tid}"

    def on_message(self, msg: Message):
        if msg.kind != "event":
            return
        rec = msg.event
        sid = rec.schema_id
        if sid in self._pnext_checks:
            fn_name, blob_field = self._pnext_checks[sid]
            blob = rec.payload.get(blob_field, b"")
            if len(blob) >= 8:
                pnext = int.from_bytes(blob[:8], "little")
                if pnext != 0:
                    self._findings.append(
                        ValidationFinding(
                            "uninit_pnext",
                            pnext,
                            self._stream_of(rec),
                            rec.timestamp_ns,
                            f"{fn_name}: extension slot pNext is 0x{pnext:x}, must be NULL",
                        )
                    )
        schema = self.registry.by_id[sid]
        key = (rec.hostname, rec.pid, rec.tid)
        if schema.event_class == "host_entry":
            self._pending_entries[(key, schema.function)] = rec.payload
            if sid in self._execute_ids:
                h = int(rec.payload[self._cl_param[sid]])
                if self._executed.get(h):
                    self._findings.append(
                        ValidationFinding(
                            "cmdlist_not_reset",
                            h,
                            self._stream_of(rec),
                            rec.timestamp_ns,
                            f"command list 0x{h:x} executed again without a reset",
                        )
                    )
                self._executed[h] = True
            return
        if schema.event_class != "host_exit":
            return
        result = int(rec.payload.get("result", 0))
        if sid in self._creators and result == 0:
            fn_name, out_field = self._creators[sid]
            handle = int(rec.payload[out_field])
            self._live_created[handle] = ValidationFinding(
                "leaked_event",
                handle,
                self._stream_of(rec),
                rec.timestamp_ns,
                f"handle 0x{handle:x} from {fn_name} never released",
            )
        elif sid in self._releasers and result == 0:
            fn_name, entry_id, handle_param = self._releasers[sid]
            entry = self._pending_entries.get(((rec.hostname, rec.pid, rec.tid), fn_name))
            if entry is not None:
                self._live_created.pop(int(entry[handle_param]), None)
        elif sid in self._reset_ids and result == 0:
            entry_id, handle_param = self._cl_param[sid]
            entry = self._pending_entries.get(
                ((rec.hostname, rec.pid, rec.tid), self.registry.by_id[sid].function)
            )
            if entry is not None:
                self._executed[int(entry[handle_param])] = False

    def on_diagnostics(self, orphans):
        self._orphans = [
            ValidationFinding("orphan_exit", 0, stream, ts, f"exit of {fn} without matching entry")
            for stream, ts, fn in orphans
        ]

    def on_finish(self) -> list[ValidationFinding]:
        leaks = sorted(self._live_created.values(), key=lambda f: f.subject)
        return self._findings + leaks + self._orphans


def render_findings(findings: list[ValidationFinding]) -> str:
    if not findings:
        return "validation: clean, 0 findings\n"
    lines = [f"validation: {len(findings)} finding(s)"]
    for f in findings:
        lines.append(
            f"  [{f.rule}] {f.message} (stream {f.stream}, t={f.timestamp_ns})"
        )
    return "\n".join(lines) + "\n"
