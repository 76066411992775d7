"""Workload DSL: declarative call sequences replayed through the dispatch table.

A workload document is a YAML mapping with ``name``, ``seed``, and one or
more ``threads``, each carrying staging ``buffers`` (scratch host memory for
pointer arguments, carved from a fixed per-thread page so addresses are
reproducible) and ``steps``. Step forms:

* ``{call: fn, args: {...}, save: {var: buffer}, repeat: N,
  spin_until_success: true, max_spins: N, inject_skip: tag}``
* ``{write: buffer, fill: byte}`` or ``{write: buffer, u64s: [...], offset: N}``
* ``{annotate: label}``

Argument values may be integers, enum constant names from the API model,
``$var`` references, ``@buffer`` addresses, or plain strings for char*
parameters. ``inject_skip`` names a defect-injection tag; when that tag is
active the step is skipped, which is how the bundled workloads model
forgetting to zero a property block, to release an event, or to reset a
command list.

In virtual-clock mode threads interleave deterministically, one step per
round-robin turn, and each DSL thread writes to its own logical stream
(tid = pid + thread index). Wall-clock mode runs real threads and is only
used by the overhead benchmark.
"""

from __future__ import annotations

import struct
import threading
from collections import Counter
from dataclasses import dataclass, field

import yaml

from .dispatch import DispatchTable
from .errors import WorkloadError
from .mockrt import STAGING_SLOT_SIZE
from .registry import ANNOTATION_SCHEMA_SUFFIX
from .tracefile import EventRecord

INJECTION_TAGS = ("uninit_pnext", "leak_event", "no_reset_cmdlist")
DEFAULT_MAX_SPINS = 1_000_000

_STEP_KEYS = {
    "call",
    "args",
    "save",
    "repeat",
    "spin_until_success",
    "max_spins",
    "inject_skip",
    "write",
    "fill",
    "u64s",
    "offset",
    "annotate",
}


@dataclass(frozen=True)
class BufferDecl:
    name: str
    size: int


@dataclass(frozen=True)
class Step:
    kind: str  # call | write | annotate
    call: str | None = None
    args: dict = field(default_factory=dict)
    save: dict = field(default_factory=dict)
    repeat: int = 1
    spin_until_success: bool = False
    max_spins: int = DEFAULT_MAX_SPINS
    inject_skip: str | None = None
    write: str | None = None
    fill: int | None = None
    u64s: tuple = ()
    offset: int = 0
    annotate: str | None = None


@dataclass(frozen=True)
class ThreadSpec:
    buffers: tuple[BufferDecl, ...]
    steps: tuple[Step, ...]


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    seed: int
    threads: tuple[ThreadSpec, ...]
    description: str = ""


@dataclass
class RunSummary:
    name: str
    seed: int
    injected: tuple[str, ...]
    virtual_duration_ns: int
    call_counts: Counter


def _parse_step(node, path: str) -> Step:
    if not isinstance(node, dict):
        raise WorkloadError(f"{path}: step must be a mapping")
    extra = set(node) - _STEP_KEYS
    if extra:
        raise WorkloadError(f"{path}: unknown step keys {sorted(extra)}")
    kinds = [k for k in ("call", "write", "annotate") if k in node]
    if len(kinds) != 1:
        raise WorkloadError(f"{path}: step needs exactly one of call/write/annotate")
    kind = kinds[0]
    if node.get("inject_skip") is not None and node["inject_skip"] not in INJECTION_TAGS:
        raise WorkloadError(f"{path}: unknown injection tag {node['inject_skip']!r}")
    if kind == "call":
        repeat = int(node.get("repeat", 1))
        spin = bool(node.get("spin_until_success", False))
        if spin and "repeat" in node:
            raise WorkloadError(f"{path}: repeat and spin_until_success are exclusive")
        if repeat < 1:
            raise WorkloadError(f"{path}: repeat must be >= 1")
        save = node.get("save") or {}
        if not isinstance(save, dict):
            raise WorkloadError(f"{path}: save must map variable -> buffer")
        return Step(
            kind="call",
            call=node["call"],
            args=dict(node.get("args") or {}),
            save=dict(save),
            repeat=repeat,
            spin_until_success=spin,
            max_spins=int(node.get("max_spins", DEFAULT_MAX_SPINS)),
            inject_skip=node.get("inject_skip"),
        )
    if kind == "write":
        if ("fill" in node) == ("u64s" in node):
            raise WorkloadError(f"{path}: write step needs exactly one of fill/u64s")
        return Step(
            kind="write",
            write=node["write"],
            fill=node.get("fill"),
            u64s=tuple(node.get("u64s") or ()),
            offset=int(node.get("offset", 0)),
            inject_skip=node.get("inject_skip"),
        )
    return Step(kind="annotate", annotate=str(node["annotate"]), inject_skip=node.get("inject_skip"))


def load_workload(document: str, model=None) -> WorkloadSpec:
    doc = yaml.safe_load(document)
    if not isinstance(doc, dict) or "name" not in doc:
        raise WorkloadError("workload document must be a mapping with a 'name'")
    extra = set(doc) - {"name", "description", "seed", "threads", "buffers", "steps"}
    if extra:
        raise WorkloadError(f"unknown workload keys {sorted(extra)}")
    if "threads" in doc and ("buffers" in doc or "steps" in doc):
        raise WorkloadError("use either 'threads' or top-level 'buffers'/'steps', not both")
    thread_docs = doc.get("threads") or [
        {"buffers": doc.get("buffers") or [], "steps": doc.get("steps") or []}
    ]
    threads = []
    for ti, tdoc in enumerate(thread_docs):
        tpath = f"threads[{ti}]"
        textra = set(tdoc) - {"buffers", "steps"}
        if textra:
            raise WorkloadError(f"{tpath}: unknown keys {sorted(textra)}")
        buffers = []
        offset = 0
        for bi, b in enumerate(tdoc.get("buffers") or []):
            if not isinstance(b, dict) or "name" not in b or "size" not in b:
                raise WorkloadError(f"{tpath}.buffers[{bi}]: needs name and size")
            size = int(b["size"])
            offset = (offset + 15) // 16 * 16 + size
            if offset > STAGING_SLOT_SIZE:
                raise WorkloadError(f"{tpath}: staging buffers exceed {STAGING_SLOT_SIZE} bytes")
            buffers.append(BufferDecl(b["name"], size))
        steps = tuple(
            _parse_step(s, f"{tpath}.steps[{si}]") for si, s in enumerate(tdoc.get("steps") or [])
        )
        threads.append(ThreadSpec(tuple(buffers), steps))
    spec = WorkloadSpec(
        name=str(doc["name"]),
        seed=int(doc.get("seed", 0)),
        threads=tuple(threads),
        description=str(doc.get("description", "")),
    )
    if model is not None:
        known = {fn.name for fn in model.functions}
        for ti, t in enumerate(spec.threads):
            for si, s in enumerate(t.steps):
                if s.kind == "call" and s.call not in known:
                    raise WorkloadError(
                        f"threads[{ti}].steps[{si}]: unknown function {s.call!r}"
                    )
    return spec


class _ThreadState:
    def __init__(self, index: int, spec: ThreadSpec, base_addr: int):
        self.index = index
        self.spec = spec
        self.vars: dict[str, int] = {}
        self.buffers: dict[str, tuple[int, int]] = {}  # name -> (addr, size)
        offset = 0
        for b in spec.buffers:
            offset = (offset + 15) // 16 * 16
            self.buffers[b.name] = (base_addr + offset, b.size)
            offset += b.size


class WorkloadRunner:
    def __init__(
        self,
        spec: WorkloadSpec,
        dispatch: DispatchTable,
        inject=(),
        mode: str = "virtual",
    ):
        bad = set(inject) - set(INJECTION_TAGS)
        if bad:
            raise WorkloadError(f"unknown injection tags {sorted(bad)}")
        if mode not in ("virtual", "wall"):
            raise WorkloadError(f"unknown run mode {mode!r}")
        self.spec = spec
        self.dispatch = dispatch
        self.inject = frozenset(inject)
        self.mode = mode
        self.counts: Counter = Counter()
        self._counts_lock = threading.Lock()
        model = dispatch.model
        self._annotation_id = dispatch.registry.schema(
            f"{model.api_name}:{ANNOTATION_SCHEMA_SUFFIX}"
        ).id

    # -- argument / memory plumbing ----------------------------------------

    def _resolve(self, fn_name: str, pname: str, raw, t: _ThreadState):
        model = self.dispatch.model
        fn = model.function(fn_name)
        p = next(q for q in fn.params if q.name == pname)
        if isinstance(raw, str):
            if raw.startswith("$"):
                try:
                    return t.vars[raw[1:]]
                except KeyError:
                    raise WorkloadError(f"undefined variable {raw!r} in {fn_name}") from None
            if raw.startswith("@"):
                try:
                    return t.buffers[raw[1:]][0]
                except KeyError:
                    raise WorkloadError(f"undefined buffer {raw!r} in {fn_name}") from None
            base, _ = model.base_type(p.c_type)
            if base in model.enums:
                members = model.enums[base]
                if raw in members:
                    return members[raw]
                raise WorkloadError(f"{fn_name}.{pname}: unknown enum constant {raw!r}")
            if model.stack_kind(p.c_type) == "string":
                return raw
            raise WorkloadError(f"{fn_name}.{pname}: cannot resolve value {raw!r}")
        return int(raw)

    def _do_write(self, step: Step, t: _ThreadState):
        if step.write not in t.buffers:
            raise WorkloadError(f"write to undefined buffer {step.write!r}")
        addr, size = t.buffers[step.write]
        mem = self.dispatch.runtime.memory
        if step.fill is not None:
            mem.write(addr, bytes([step.fill & 0xFF]) * size)
        else:
            values = []
            for v in step.u64s:
                if isinstance(v, str) and v.startswith("$"):
                    values.append(t.vars[v[1:]])
                else:
                    values.append(int(v))
            mem.write(addr + step.offset, struct.pack(f"<{len(values)}Q", *values))

    def _do_save(self, step: Step, t: _ThreadState):
        mem = self.dispatch.runtime.memory
        for var, buf in step.save.items():
            if buf not in t.buffers:
                raise WorkloadError(f"save from undefined buffer {buf!r}")
            t.vars[var] = mem.read_u64(t.buffers[buf][0])

    # -- execution ----------------------------------------------------------

    def _thread_turns(self, t: _ThreadState, stream):
        """Generator yielding once per turn (one step or one spin poll)."""
        for step in t.spec.steps:
            if step.inject_skip and step.inject_skip in self.inject:
                continue
            if step.kind == "write":
                self._do_write(step, t)
                yield
            elif step.kind == "annotate":
                (stream or self.dispatch.writer).emit(
                    EventRecord(self._annotation_id, None, {"label": step.annotate})
                )
                yield
            else:
                args_spec = step.args
                iterations = step.max_spins if step.spin_until_success else step.repeat
                for _ in range(iterations):
                    args = {
                        k: self._resolve(step.call, k, v, t) for k, v in args_spec.items()
                    }
                    rc = self.dispatch.call(step.call, args, stream=stream)
                    with self._counts_lock:
                        self.counts[step.call] += 1
                    self._do_save(step, t)
                    yield
                    if step.spin_until_success and rc == 0:
                        break

    def run(self) -> RunSummary:
        runtime = self.dispatch.runtime
        writer = self.dispatch.writer
        states = [
            _ThreadState(i, tspec, runtime.staging_slot(i))
            for i, tspec in enumerate(self.spec.threads)
        ]
        start_ns = runtime.clock.now_ns()
        if self.mode == "virtual":
            turns = [
                self._thread_turns(t, writer.stream(tid=writer.pid + t.index)) for t in states
            ]
            live = list(turns)
            while live:
                for gen in list(live):
                    try:
                        next(gen)
                    except StopIteration:
                        live.remove(gen)
                writer.drain()
        else:
            def _drive(gen):
                for _ in gen:
                    pass

            threads = [
                threading.Thread(target=_drive, args=(self._thread_turns(t, None),))
                for t in states
            ]
            for th in threads:
                th.start()
            for th in threads:
                th.join()
        return RunSummary(
            name=self.spec.name,
            seed=self.spec.seed,
            injected=tuple(sorted(self.inject)),
            virtual_duration_ns=runtime.clock.now_ns() - start_ns,
            call_counts=self.counts,
        )


def run_workload(
    spec: WorkloadSpec, dispatch: DispatchTable, inject=(), mode: str = "virtual"
) -> RunSummary:
    return WorkloadRunner(spec, dispatch, inject=inject, mode=mode).run()
