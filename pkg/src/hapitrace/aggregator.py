"""Multi-rank aggregation: merge per-rank tally reports into a composite.

Merging is a commutative monoid over fingerprint-compatible reports: counts
and total times add, minima and maxima combine, identity sets union, and the
empty report is the identity element. Aggregate-only runs tally each rank in
a scratch directory, merge hierarchically (local masters over groups of
``node_size`` ranks, then a global master), and keep only the merged
summaries; raw streams are deleted.
"""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

from .errors import FingerprintMismatchError
from .harness import (
    VIRTUAL_PID_BASE,
    VIRTUAL_PID_STRIDE,
    tally_trace,
    trace_workload,
)
from .sinks import TallyReport, TallyRow
from .workload import WorkloadSpec

DEFAULT_NODE_SIZE = 4


def empty_report() -> TallyReport:
    """Merge identity; compatible with any fingerprint."""
    return TallyReport()


def merge_tallies(reports: list[TallyReport]) -> TallyReport:
    """Combine per-rank reports by (section, name); header counts re-derived."""
    fingerprints = {r.fingerprint for r in reports if r.fingerprint is not None}
    if len(fingerprints) > 1:
        raise FingerprintMismatchError(
            f"cannot merge reports from different models: {sorted(fingerprints)}"
        )
    out = TallyReport(fingerprint=next(iter(fingerprints)) if fingerprints else None)
    backends: set[str] = set()
    hostnames: set = set()
    processes: set = set()
    threads: set = set()
    for r in reports:
        backends.update(r.backends)
        hostnames.update(r.hostnames)
        processes.update(r.processes)
        threads.update(r.threads)
        for key, row in r.rows.items():
            acc = out.rows.get(key)
            if acc is None:
                out.rows[key] = TallyRow(
                    name=row.name,
                    section=row.section,
                    time_ns=row.time_ns,
                    count=row.count,
                    min_ns=row.min_ns,
                    max_ns=row.max_ns,
                    error_count=row.error_count,
                )
            else:
                acc.time_ns += row.time_ns
                acc.count += row.count
                acc.min_ns = min(acc.min_ns, row.min_ns)
                acc.max_ns = max(acc.max_ns, row.max_ns)
                acc.error_count += row.error_count
        for key, count in r.dropped.items():
            out.dropped[key] = out.dropped.get(key, 0) + count
    out.backends = tuple(sorted(backends))
    out.hostnames = frozenset(hostnames)
    out.processes = frozenset(processes)
    out.threads = frozenset(threads)
    return out


def aggregate_only_run(
    spec: WorkloadSpec,
    ranks: int,
    node_size: int = DEFAULT_NODE_SIZE,
    scratch_dir=None,
    **trace_kw,
) -> TallyReport:
    """Run ``ranks`` rank instances, keep only the merged tally.

    Each rank traces into scratch space, is tallied, and its raw streams are
    deleted immediately; local masters merge each group of ``node_size``
    ranks and the global master merges the locals.
    """
    if ranks < 1:
        raise ValueError("ranks must be >= 1")
    own_scratch = scratch_dir is None
    scratch = Path(scratch_dir) if scratch_dir else Path(tempfile.mkdtemp(prefix="hapitrace-agg-"))
    per_rank: list[TallyReport] = []
    try:
        for rank in range(ranks):
            rank_dir = scratch / f"rank{rank}"
            trace_workload(
                spec, rank_dir, pid=VIRTUAL_PID_BASE + rank * VIRTUAL_PID_STRIDE, **trace_kw
            )
            per_rank.append(tally_trace(rank_dir))
            shutil.rmtree(rank_dir)
        locals_ = [
            merge_tallies(per_rank[i : i + node_size]) for i in range(0, ranks, node_size)
        ]
        return merge_tallies(locals_)
    finally:
        if own_scratch:
            shutil.rmtree(scratch, ignore_errors=True)
