"""Traffic-trace data model, structural validation, and dataset summary stats.

A trace is an ordered sequence of (direction, size, timestamp) packets:
direction +1 is outgoing (device to server), -1 incoming (server to device),
size is bytes, and timestamps are milliseconds from the start of the trace.
Timestamps are stored as integer tenths of a millisecond so serialization
round-trips exactly.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ValidationError

OUTGOING = 1
INCOMING = -1

#: log-spaced packet-size bins, bytes
SIZE_BIN_EDGES: tuple[float, ...] = tuple(np.geomspace(1.0, 2048.0, 33))
#: log-spaced interarrival bins, 0.1 ms .. 10 s
INTERARRIVAL_BIN_EDGES: tuple[float, ...] = tuple(np.geomspace(0.1, 10_000.0, 41))
#: default split between intra-burst and inter-burst gaps
DEFAULT_BURST_GAP_THRESHOLD_MS = 50.0


@dataclass(frozen=True)
class Packet:
    """One observed packet: direction in {+1,-1}, size in bytes, time in tenths of ms."""

    direction: int
    size: int
    time_tenths: int

    @property
    def timestamp_ms(self) -> float:
        return self.time_tenths / 10.0


def packet(direction: int, size: int, ms: float) -> Packet:
    """Build a Packet from a millisecond timestamp (rounded to 0.1 ms)."""
    return Packet(direction, size, int(round(ms * 10.0)))


@dataclass(frozen=True)
class Trace:
    """Ordered packet sequence for one command/response exchange."""

    packets: tuple[Packet, ...]

    def __init__(self, packets) -> None:
        object.__setattr__(self, "packets", tuple(packets))

    def __len__(self) -> int:
        return len(self.packets)

    def __iter__(self):
        return iter(self.packets)

    def directions(self) -> np.ndarray:
        return np.array([p.direction for p in self.packets], dtype=np.int64)

    def sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.packets], dtype=np.int64)

    def times_ms(self) -> np.ndarray:
        return np.array([p.time_tenths for p in self.packets], dtype=np.float64) / 10.0

    def duration_ms(self) -> float:
        return (self.packets[-1].time_tenths - self.packets[0].time_tenths) / 10.0


class CommandCategory(Enum):
    """Response behaviour of a voice command."""

    SINGLE = "single"
    TIME_SENSITIVE = "time_sensitive"
    MULTIPLE = "multiple"


@dataclass(frozen=True)
class LabeledTrace:
    """Trace plus class label, response category, speaking voice, and world flag."""

    trace: Trace
    command_id: int
    category: CommandCategory
    voice_id: int
    monitored: bool = True

    def __post_init__(self) -> None:
        if self.command_id < 0:
            raise ValidationError(f"command_id must be >= 0, got {self.command_id}")
        if not 0 <= self.voice_id <= 4:
            raise ValidationError(f"voice_id must be in [0, 4], got {self.voice_id}")


@dataclass(frozen=True)
class Dataset:
    """A labelled trace collection plus its provenance manifest."""

    traces: tuple[LabeledTrace, ...]
    num_classes: int
    manifest: dict = field(default_factory=dict)

    def __init__(self, traces, num_classes: int, manifest: dict | None = None) -> None:
        traces = tuple(traces)
        if not traces:
            raise ValidationError("dataset must contain at least one trace")
        for lt in traces:
            if lt.command_id >= num_classes:
                raise ValidationError(
                    f"command_id {lt.command_id} outside num_classes {num_classes}"
                )
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "num_classes", num_classes)
        object.__setattr__(self, "manifest", dict(manifest or {}))

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def labels(self) -> np.ndarray:
        return np.array([lt.command_id for lt in self.traces], dtype=np.int64)

    def categories(self) -> list[CommandCategory]:
        return [lt.category for lt in self.traces]


@dataclass(frozen=True)
class Violation:
    """One structural defect, tied to the packet index that exhibits it."""

    index: int
    message: str


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[Violation, ...] = ()


def validate_trace(t: Trace) -> ValidationResult:
    """Check every packet/trace invariant; violations are reported, not raised."""
    violations: list[Violation] = []
    if len(t.packets) == 0:
        return ValidationResult(False, (Violation(0, "trace is empty"),))
    prev_time = None
    for i, p in enumerate(t.packets):
        if p.direction not in (OUTGOING, INCOMING):
            violations.append(Violation(i, f"direction must be +1 or -1, got {p.direction}"))
        if p.size < 1:
            violations.append(Violation(i, f"size must be >= 1, got {p.size}"))
        if p.time_tenths < 0:
            violations.append(Violation(i, f"timestamp must be >= 0, got {p.timestamp_ms} ms"))
        if prev_time is not None and p.time_tenths < prev_time:
            violations.append(Violation(i, "timestamp decreases"))
        prev_time = p.time_tenths
    return ValidationResult(not violations, tuple(violations))


@dataclass(frozen=True)
class Histogram:
    """Normalized histogram over strictly increasing bin edges.

    ``bin_mass`` holds zero mass in every bin when there was no data to
    summarize; ``is_empty`` flags that case.
    """

    bin_edges: tuple[float, ...]
    bin_mass: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.bin_mass) != len(self.bin_edges) - 1:
            raise ValidationError("bin_mass length must be len(bin_edges) - 1")
        if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ValidationError("bin edges must be strictly increasing")
        if any(m < 0 for m in self.bin_mass):
            raise ValidationError("bin masses must be non-negative")
        total = sum(self.bin_mass)
        if total > 0 and abs(total - 1.0) > 1e-9:
            raise ValidationError(f"bin masses must sum to 1, got {total}")

    @property
    def is_empty(self) -> bool:
        return sum(self.bin_mass) == 0.0

    @classmethod
    def from_values(cls, values, edges) -> "Histogram":
        """Bin values (clamped into the edge range) and normalize to unit mass."""
        edges = tuple(float(e) for e in edges)
        counts = [0] * (len(edges) - 1)
        for v in values:
            v = min(max(float(v), edges[0]), edges[-1])
            idx = min(bisect.bisect_right(edges, v) - 1, len(counts) - 1)
            counts[idx] += 1
        total = sum(counts)
        if total == 0:
            return cls(edges, tuple(0.0 for _ in counts))
        return cls(edges, tuple(c / total for c in counts))


@dataclass(frozen=True)
class SummaryStats:
    """Per-direction size distributions and burst/gap interarrival distributions.

    These are the empirical distributions the traffic obfuscator samples
    dummy-packet sizes and send gaps from.
    """

    packet_size_hist_in: Histogram
    packet_size_hist_out: Histogram
    interarrival_hist_burst: Histogram
    interarrival_hist_gap: Histogram
    max_abs_size: int
    burst_gap_threshold_ms: float = DEFAULT_BURST_GAP_THRESHOLD_MS


def dataset_stats(
    d: Dataset, burst_gap_threshold_ms: float = DEFAULT_BURST_GAP_THRESHOLD_MS
) -> SummaryStats:
    """Summarize packet sizes per direction and interarrival gaps per mode.

    Gaps between consecutive packets of a trace shorter than the threshold
    feed the burst histogram; the rest feed the gap histogram.
    """
    if len(d) == 0:
        raise ValidationError("empty dataset")
    if burst_gap_threshold_ms <= 0:
        raise ValidationError("burst/gap threshold must be > 0")
    sizes_in: list[int] = []
    sizes_out: list[int] = []
    gaps_burst: list[float] = []
    gaps_gap: list[float] = []
    max_size = 0
    for lt in d.traces:
        pkts = lt.trace.packets
        for p in pkts:
            (sizes_out if p.direction == OUTGOING else sizes_in).append(p.size)
            max_size = max(max_size, p.size)
        for a, b in zip(pkts, pkts[1:]):
            gap_ms = (b.time_tenths - a.time_tenths) / 10.0
            (gaps_burst if gap_ms < burst_gap_threshold_ms else gaps_gap).append(gap_ms)
    return SummaryStats(
        packet_size_hist_in=Histogram.from_values(sizes_in, SIZE_BIN_EDGES),
        packet_size_hist_out=Histogram.from_values(sizes_out, SIZE_BIN_EDGES),
        interarrival_hist_burst=Histogram.from_values(gaps_burst, INTERARRIVAL_BIN_EDGES),
        interarrival_hist_gap=Histogram.from_values(gaps_gap, INTERARRIVAL_BIN_EDGES),
        max_abs_size=max_size,
        burst_gap_threshold_ms=burst_gap_threshold_ms,
    )
