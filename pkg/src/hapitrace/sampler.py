"""Simulated device telemetry sampling.

Emits the nine counter rows (chip power, two tile powers, two tile
frequencies, compute and copy engine utilization per tile) into the trace
at a fixed period, default 50 ms. The synthetic model is deliberately
simple and deterministic so samples can be cross-checked against device
spans: utilization at an instant is 1.0 exactly when a command occupies
that tile's engine (half-open intervals), tile power is an idle floor plus
a per-engine active bump, chip power is the tile sum plus package overhead,
and frequency is a constant base clock.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import HapitraceError, TraceError
from .mockrt import ENGINE_COMPUTE, ENGINE_COPY, MockDevice, PROPS_CORE_CLOCK_MHZ
from .registry import TELEMETRY_COUNTERS
from .tracefile import EventRecord, TraceWriter

DEFAULT_PERIOD_NS = 50_000_000  # 50 ms

IDLE_TILE_WATTS = 25.0
COMPUTE_ACTIVE_WATTS = 90.0
COPY_ACTIVE_WATTS = 35.0
CHIP_OVERHEAD_WATTS = 45.0
BASE_FREQUENCY_MHZ = float(PROPS_CORE_CLOCK_MHZ)

SAMPLER_TID_OFFSET = 99  # sampler stream tid = pid + offset (virtual-clock runs)

COUNTERS = tuple(key for key, _ in TELEMETRY_COUNTERS)


@dataclass(frozen=True)
class TelemetrySample:
    timestamp_ns: int
    counter: str  # power | frequency | compute_engine | copy_engine
    domain: int  # power: 0=chip 1..2=tiles; others: tile index
    value: float  # watts | MHz | utilization fraction
    device: int = 0

    def __post_init__(self):
        if self.counter in ("compute_engine", "copy_engine") and not 0.0 <= self.value <= 1.0:
            raise HapitraceError(f"utilization out of range: {self.value}")
        if self.counter in ("power", "frequency") and self.value < 0.0:
            raise HapitraceError(f"{self.counter} must be non-negative: {self.value}")


def parse_counter_key(schema_name: str) -> tuple[str, int]:
    """Map a telemetry schema name to (counter kind, domain index)."""
    key = schema_name.rsplit("telemetry_", 1)[-1]
    prefix, _, idx = key.rpartition("_")
    domain = int(idx)
    kind = {
        "power_domain": "power",
        "frequency_domain": "frequency",
        "compute_tile": "compute_engine",
        "copy_tile": "copy_engine",
    }.get(prefix)
    if kind is None:
        raise HapitraceError(f"not a telemetry schema: {schema_name!r}")
    return kind, domain


def counter_values_at(device: MockDevice, t_ns: int) -> dict[str, float]:
    """All nine counter values at one instant, keyed like TELEMETRY_COUNTERS."""
    util = {
        (tile, kind): 1.0 if device.busy_at(tile, kind, t_ns) else 0.0
        for tile in range(device.num_tiles)
        for kind in (ENGINE_COMPUTE, ENGINE_COPY)
    }
    tile_power = [
        IDLE_TILE_WATTS
        + COMPUTE_ACTIVE_WATTS * util[(tile, ENGINE_COMPUTE)]
        + COPY_ACTIVE_WATTS * util[(tile, ENGINE_COPY)]
        for tile in range(device.num_tiles)
    ]
    return {
        "power_domain_0": sum(tile_power) + CHIP_OVERHEAD_WATTS,
        "power_domain_1": tile_power[0],
        "power_domain_2": tile_power[1],
        "frequency_domain_0": BASE_FREQUENCY_MHZ,
        "frequency_domain_1": BASE_FREQUENCY_MHZ,
        "compute_tile_0": util[(0, ENGINE_COMPUTE)],
        "compute_tile_1": util[(1, ENGINE_COMPUTE)],
        "copy_tile_0": util[(0, ENGINE_COPY)],
        "copy_tile_1": util[(1, ENGINE_COPY)],
    }


def _telemetry_schema_ids(writer: TraceWriter) -> dict[str, int]:
    api = writer.registry.api_name
    return {key: writer.registry.schema(f"{api}:telemetry_{key}").id for key in COUNTERS}


def run_sampler(
    device: MockDevice,
    period_ns: int,
    writer: TraceWriter,
    until_ns: int,
    start_ns: int = 0,
    stream=None,
) -> int:
    """Sample all counters at start, start+p, ... up to and including until_ns.

    Virtual-clock form: instants land on an exact arithmetic progression with
    no jitter. Returns the number of samples emitted (9 per instant); stops
    early with a partial count if the writer has been finalized.
    """
    if period_ns <= 0:
        raise HapitraceError("sampling period must be positive")
    ids = _telemetry_schema_ids(writer)
    target = stream if stream is not None else writer
    count = 0
    t = start_ns
    while t <= until_ns:
        values = counter_values_at(device, t)
        for key in COUNTERS:
            rec = EventRecord(ids[key], t, {"device": device.index, "value": values[key]})
            try:
                target.emit(rec)
            except TraceError:
                return count
            count += 1
        t += period_ns
    return count


class SamplerThread:
    """Wall-clock periodic sampler writing to its own stream (bench runs)."""

    def __init__(self, runtime, writer: TraceWriter, period_ns: int = DEFAULT_PERIOD_NS):
        self.runtime = runtime
        self.writer = writer
        self.period_s = period_ns / 1e9
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self.count = 0

    def _loop(self):
        ids = _telemetry_schema_ids(self.writer)
        stream = self.writer.stream(tid=self.writer.pid + SAMPLER_TID_OFFSET)
        device = self.runtime.device
        while not self._stop.is_set():
            now_v = self.runtime.clock.now_ns()
            values = counter_values_at(device, now_v)
            for key in COUNTERS:
                try:
                    stream.emit(EventRecord(ids[key], None, {"device": device.index, "value": values[key]}))
                except TraceError:
                    return
                self.count += 1
            self._stop.wait(self.period_s)

    def start(self):
        self._thread.start()

    def stop(self):
        self._stop.set()
        self._thread.join()
