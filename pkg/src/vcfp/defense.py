"""Packet-level traffic obfuscation simulator and its cost model.

The obfuscator processes each direction of a trace independently with an
event-driven pass:

* dummy packets are scheduled by sampling interarrival gaps from the burst
  histogram while close to real traffic and from the gap histogram
  otherwise; a real packet arriving first preempts the pending dummy,
* every emission (real or dummy) gets signed integer noise added to its
  scheduled size, clamped into the configured wire bounds,
* real bytes displaced by negative noise wait in a FIFO byte buffer and ride
  out on the next emissions (buffered bytes first, then the packet's own),
* real packets are never delayed: each is emitted at its original timestamp,
* after the last real packet, dummies continue until the direction's packet
  count hits the next power of two; any leftover buffered bytes are flushed
  with minimal extra dummies, then the count is rounded up again.

Latency and bandwidth accounting measure when each real packet's last byte
actually departs and how many extra bytes the wire carries.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ValidationError
from .traces import (
    INCOMING,
    OUTGOING,
    Dataset,
    Histogram,
    LabeledTrace,
    Packet,
    SummaryStats,
    Trace,
)

DEFAULT_SENSITIVITY_BYTES = 500.0
DEFAULT_MIN_WIRE_SIZE = 60
DEFAULT_MAX_WIRE_SIZE = 1514

_STREAM_NOISE = 1
_STREAM_PADDING = 2
_STREAM_SIZES = 3
_DIR_TAG = {OUTGOING: 10, INCOMING: 20}


class NoiseMechanism(Enum):
    LAPLACE_PER_PACKET = "laplace_per_packet"
    RECURSIVE_REFERENCE = "recursive_reference"


@runtime_checkable
class NoiseSource(Protocol):
    """Pluggable per-emission noise; used to inject fixed noise in tests."""

    def sample(self, step_index: int, rng: np.random.Generator) -> int: ...


def target_length(m: int) -> int:
    """Least power of two >= m."""
    if m < 1:
        raise ValidationError("length must be >= 1")
    return 1 << (m - 1).bit_length()


def laplace_value(scale: float, u: float) -> float:
    """Inverse-CDF Laplace(0, scale) draw from a uniform u in [0, 1)."""
    if scale == 0.0:
        return 0.0
    centered = u - 0.5
    return -scale * math.copysign(1.0, centered) * math.log(max(1.0 - 2.0 * abs(centered), 1e-300))


@dataclass(frozen=True)
class ObfuscationParams:
    """Defense configuration.

    Smaller epsilon means larger size noise (Laplace scale is
    sensitivity/epsilon bytes). ``adaptive_padding`` switches the
    histogram-driven dummy stream on or off; size noise, the byte buffer,
    and length rounding apply either way.
    """

    epsilon: float
    stats: SummaryStats
    noise_mechanism: NoiseMechanism | NoiseSource = NoiseMechanism.LAPLACE_PER_PACKET
    sensitivity: float = DEFAULT_SENSITIVITY_BYTES
    min_wire_size: int = DEFAULT_MIN_WIRE_SIZE
    max_wire_size: int = DEFAULT_MAX_WIRE_SIZE
    seed: int = 0
    adaptive_padding: bool = True
    recursive_horizon: int = 1024

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if self.sensitivity <= 0:
            raise ValidationError("sensitivity must be > 0")
        if self.min_wire_size < 1 or self.min_wire_size > self.max_wire_size:
            raise ValidationError("need 1 <= min_wire_size <= max_wire_size")
        if self.recursive_horizon < 1:
            raise ValidationError("recursive_horizon must be >= 1")

    @property
    def noise_scale(self) -> float:
        return 0.0 if math.isinf(self.epsilon) else self.sensitivity / self.epsilon


def dstar_noise(params: ObfuscationParams, step_index: int, rng: np.random.Generator) -> int:
    """Signed integer byte noise for one emission."""
    mech = params.noise_mechanism
    if isinstance(mech, NoiseMechanism):
        b = params.noise_scale
        if mech is NoiseMechanism.LAPLACE_PER_PACKET:
            return int(round(laplace_value(b, float(rng.random()))))
        # binary-tree referenced variant: step t draws one noise term per
        # tree level, each at scale b * ceil(log2(T))
        levels = math.ceil(math.log2(step_index + 1)) if step_index >= 1 else 0
        level_scale = b * max(1.0, math.ceil(math.log2(max(2, params.recursive_horizon))))
        total = sum(laplace_value(level_scale, float(rng.random())) for _ in range(levels))
        return int(round(total))
    return int(mech.sample(step_index, rng))


class _HistSampler:
    """Inverse-CDF sampler over a Histogram with in-bin linear interpolation."""

    def __init__(self, h: Histogram) -> None:
        self.edges = np.asarray(h.bin_edges, dtype=np.float64)
        self.mass = np.asarray(h.bin_mass, dtype=np.float64)
        self.cum = np.cumsum(self.mass)
        self.empty = h.is_empty

    def sample(self, u: float) -> float:
        if self.empty:
            raise ValidationError("cannot sample from an empty-mass histogram")
        u = min(max(u, 0.0), 1.0) * self.cum[-1]
        idx = int(np.searchsorted(self.cum, u, side="left"))
        idx = min(idx, len(self.mass) - 1)
        while self.mass[idx] == 0.0 and idx + 1 < len(self.mass):
            idx += 1
        before = self.cum[idx] - self.mass[idx]
        frac = (u - before) / self.mass[idx] if self.mass[idx] > 0 else 0.0
        frac = min(max(frac, 0.0), 1.0)
        lo, hi = self.edges[idx], self.edges[idx + 1]
        return float(lo + frac * (hi - lo))


def sample_histogram(h: Histogram, u: float) -> float:
    """One inverse-CDF draw; u in [0, 1]."""
    return _HistSampler(h).sample(u)


@dataclass(frozen=True)
class WirePacket:
    """One on-the-wire packet with payload bookkeeping.

    ``real_payload`` lists (origin packet index, byte count) chunks carried by
    this packet; padding fills the rest. Dummy packets may still carry
    buffered real bytes.
    """

    direction: int
    wire_size: int
    send_time_ms: float
    real_payload: tuple[tuple[int, int], ...]
    pad_bytes: int
    is_dummy: bool

    def __post_init__(self) -> None:
        carried = sum(c for _, c in self.real_payload)
        if carried + self.pad_bytes != self.wire_size:
            raise ValidationError("payload bytes + pad bytes must equal wire size")


@dataclass(frozen=True)
class ObfuscatedTrace:
    original: Trace
    outgoing: tuple[WirePacket, ...]
    incoming: tuple[WirePacket, ...]
    #: per-direction packet count before the final power-of-two rounding
    pre_rounding_lengths: dict = None  # type: ignore[assignment]

    def wire_packets(self, direction: int) -> tuple[WirePacket, ...]:
        return self.outgoing if direction == OUTGOING else self.incoming

    def final_lengths(self) -> dict[int, int]:
        return {OUTGOING: len(self.outgoing), INCOMING: len(self.incoming)}

    def as_trace(self) -> Trace:
        """Attacker's view: a plain trace of wire packets, merged by send time."""
        merged = sorted(
            list(self.outgoing) + list(self.incoming),
            key=lambda wp: (wp.send_time_ms, wp.direction == INCOMING),
        )
        return Trace(
            Packet(wp.direction, wp.wire_size, int(round(wp.send_time_ms * 10.0)))
            for wp in merged
        )


class _DirectionPass:
    """Sequential obfuscation of one direction; the byte buffer is ordered state."""

    def __init__(self, params, direction, size_hist, noise_rng, pad_rng, size_rng):
        self.params = params
        self.direction = direction
        self.size_sampler = _HistSampler(size_hist)
        self.burst_sampler = _HistSampler(params.stats.interarrival_hist_burst)
        self.gap_sampler = _HistSampler(params.stats.interarrival_hist_gap)
        self.noise_rng = noise_rng
        self.pad_rng = pad_rng
        self.size_rng = size_rng
        self.buffer: deque[list[int]] = deque()
        self.wire: list[WirePacket] = []
        self.step = 0
        self.pre_rounding_length = 0

    def _take_buffered(self, capacity: int) -> tuple[list[tuple[int, int]], int]:
        payload: list[tuple[int, int]] = []
        while self.buffer and capacity > 0:
            origin, remaining = self.buffer[0]
            chunk = min(capacity, remaining)
            payload.append((origin, chunk))
            capacity -= chunk
            if chunk == remaining:
                self.buffer.popleft()
            else:
                self.buffer[0][1] = remaining - chunk
        return payload, capacity

    def _emit(self, scheduled: int, at_ms: float, own: tuple[int, int] | None, is_dummy: bool):
        sigma = dstar_noise(self.params, self.step, self.noise_rng)
        self.step += 1
        wire_size = int(
            min(max(scheduled + sigma, self.params.min_wire_size), self.params.max_wire_size)
        )
        payload, capacity = self._take_buffered(wire_size)
        if own is not None:
            origin, size = own
            chunk = min(capacity, size)
            if chunk > 0:
                payload.append((origin, chunk))
                capacity -= chunk
            if size - chunk > 0:
                self.buffer.append([origin, size - chunk])
        self.wire.append(
            WirePacket(self.direction, wire_size, at_ms, tuple(payload), capacity, is_dummy)
        )

    def _sample_gap(self, now: float, last_real: float) -> float:
        # burst histogram close to real traffic, gap histogram otherwise
        in_burst = (now - last_real) < self.params.stats.burst_gap_threshold_ms
        sampler = self.burst_sampler if in_burst else self.gap_sampler
        return sampler.sample(float(self.pad_rng.random()))

    def _dummy_size(self) -> int:
        return max(1, int(round(self.size_sampler.sample(float(self.size_rng.random())))))

    def run(self, reals: list[tuple[int, int, float]]) -> list[WirePacket]:
        now = math.nan
        last_real = math.nan
        i = 0
        while i < len(reals):
            origin, size, t = reals[i]
            if math.isnan(now) or not self.params.adaptive_padding:
                self._emit(size, t, (origin, size), is_dummy=False)
                now = last_real = t
                i += 1
                continue
            candidate = now + self._sample_gap(now, last_real)
            if t <= candidate:
                self._emit(size, t, (origin, size), is_dummy=False)
                now = last_real = t
                i += 1
            else:
                self._emit(self._dummy_size(), candidate, None, is_dummy=True)
                now = candidate
        if self.params.adaptive_padding:
            # keep padding until the count sits exactly on a power of two
            while len(self.wire) != target_length(len(self.wire)):
                now += self._sample_gap(now, last_real)
                self._emit(self._dummy_size(), now, None, is_dummy=True)
        # flush leftover buffered bytes with as few extra dummies as possible;
        # these are drain packets, so no size noise is added
        while self.buffer:
            pending = sum(rem for _, rem in self.buffer)
            wire_size = int(
                min(max(pending, self.params.min_wire_size), self.params.max_wire_size)
            )
            payload, capacity = self._take_buffered(wire_size)
            self.wire.append(
                WirePacket(self.direction, wire_size, now, tuple(payload), capacity, True)
            )
        # flushing may have pushed the count past the power of two: round again
        self.pre_rounding_length = len(self.wire)
        final = target_length(len(self.wire))
        while len(self.wire) < final:
            if self.params.adaptive_padding:
                now += self._sample_gap(now, last_real)
            self._emit(self._dummy_size(), now, None, is_dummy=True)
        return self.wire


def obfuscate_trace(t: Trace, params: ObfuscationParams, trace_key: int = 0) -> ObfuscatedTrace:
    """Obfuscate one trace; directions are processed independently."""
    per_direction: dict[int, list[WirePacket]] = {OUTGOING: [], INCOMING: []}
    pre_rounding: dict[int, int] = {}
    for direction in (OUTGOING, INCOMING):
        reals = [
            (idx, p.size, p.timestamp_ms)
            for idx, p in enumerate(t.packets)
            if p.direction == direction
        ]
        if not reals:
            continue
        size_hist = (
            params.stats.packet_size_hist_out
            if direction == OUTGOING
            else params.stats.packet_size_hist_in
        )
        if size_hist.is_empty:
            raise ValidationError(
                f"size histogram for direction {direction:+d} is empty"
            )
        tag = _DIR_TAG[direction]
        rngs = [
            np.random.default_rng(np.random.SeedSequence([params.seed, trace_key, tag, s]))
            for s in (_STREAM_NOISE, _STREAM_PADDING, _STREAM_SIZES)
        ]
        run = _DirectionPass(params, direction, size_hist, *rngs)
        per_direction[direction] = run.run(reals)
        pre_rounding[direction] = run.pre_rounding_length
    return ObfuscatedTrace(
        t, tuple(per_direction[OUTGOING]), tuple(per_direction[INCOMING]), pre_rounding
    )


@dataclass(frozen=True)
class DefenseMetrics:
    """Latency/bandwidth costs of one obfuscated trace."""

    latency_per_packet_ms: float
    latency_per_trace_ms: float
    latency_per_trace_pct: float
    bandwidth_overhead_kb: float
    bandwidth_overhead_pct: float

    def __post_init__(self) -> None:
        for name in (
            "latency_per_packet_ms",
            "latency_per_trace_ms",
            "latency_per_trace_pct",
            "bandwidth_overhead_kb",
            "bandwidth_overhead_pct",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")


def defense_metrics(t: Trace, o: ObfuscatedTrace) -> DefenseMetrics:
    """Cost accounting: when real bytes depart and how many extra bytes flow.

    Per-packet latency is the gap between a real packet's original timestamp
    and the send time of the wire packet carrying its last byte, averaged
    over real packets. Per-trace latency compares the departure of the final
    real byte with the original last-packet timestamp.
    """
    if o.original is not t and o.original != t:
        raise ValidationError("obfuscated trace was not produced from this trace")
    delivered = np.zeros(len(t.packets), dtype=np.int64)
    last_departure = np.full(len(t.packets), -1.0)
    total_wire = 0
    for direction in (OUTGOING, INCOMING):
        for wp in o.wire_packets(direction):
            total_wire += wp.wire_size
            for origin, count in wp.real_payload:
                delivered[origin] += count
                last_departure[origin] = max(last_departure[origin], wp.send_time_ms)
    sizes = t.sizes()
    if not np.array_equal(delivered, sizes):
        raise ValidationError("delivered bytes do not match original packet sizes")
    times = t.times_ms()
    latencies = last_departure - times
    per_packet = float(latencies.mean())
    per_trace = float(last_departure.max() - times.max())
    duration = float(times.max() - times.min())
    if duration > 0:
        pct = 100.0 * per_trace / duration
    else:
        pct = 0.0 if per_trace <= 0 else math.inf
    total_real = int(sizes.sum())
    overhead = total_wire - total_real
    return DefenseMetrics(
        latency_per_packet_ms=per_packet,
        latency_per_trace_ms=per_trace,
        latency_per_trace_pct=pct,
        bandwidth_overhead_kb=overhead / 1024.0,
        bandwidth_overhead_pct=100.0 * overhead / total_real,
    )


def obfuscate_dataset(
    d: Dataset, params: ObfuscationParams
) -> tuple[list[ObfuscatedTrace], list[DefenseMetrics]]:
    """Obfuscate every trace with per-trace rng streams derived from the seed."""
    obfs = []
    metrics = []
    for idx, lt in enumerate(d.traces):
        o = obfuscate_trace(lt.trace, params, trace_key=idx)
        obfs.append(o)
        metrics.append(defense_metrics(lt.trace, o))
    return obfs, metrics


def wire_dataset(d: Dataset, obfs: list[ObfuscatedTrace], extra_manifest: dict | None = None) -> Dataset:
    """Repackage obfuscated traces as a labelled dataset (attacker's view)."""
    traces = [
        LabeledTrace(o.as_trace(), lt.command_id, lt.category, lt.voice_id, lt.monitored)
        for lt, o in zip(d.traces, obfs)
    ]
    manifest = dict(d.manifest)
    manifest.update(extra_manifest or {})
    return Dataset(traces, d.num_classes, manifest)


def aggregate_metrics(metrics: list[DefenseMetrics]) -> dict[str, float]:
    """Mean of each cost column over traces."""
    if not metrics:
        raise ValidationError("no metrics to aggregate")
    return {
        "latency_per_packet_ms": float(np.mean([m.latency_per_packet_ms for m in metrics])),
        "latency_per_trace_ms": float(np.mean([m.latency_per_trace_ms for m in metrics])),
        "latency_per_trace_pct": float(np.mean([m.latency_per_trace_pct for m in metrics])),
        "bandwidth_overhead_kb": float(np.mean([m.bandwidth_overhead_kb for m in metrics])),
        "bandwidth_overhead_pct": float(np.mean([m.bandwidth_overhead_pct for m in metrics])),
    }


def format_tradeoff_row(m: DefenseMetrics | dict) -> str:
    """Render one tradeoff-table row, e.g. ``16.5 ms / 136.0 ms (2.6%) / 55.82 KB (138.7%)``."""
    if isinstance(m, DefenseMetrics):
        vals = (
            m.latency_per_packet_ms,
            m.latency_per_trace_ms,
            m.latency_per_trace_pct,
            m.bandwidth_overhead_kb,
            m.bandwidth_overhead_pct,
        )
    else:
        vals = (
            m["latency_per_packet_ms"],
            m["latency_per_trace_ms"],
            m["latency_per_trace_pct"],
            m["bandwidth_overhead_kb"],
            m["bandwidth_overhead_pct"],
        )
    return f"{vals[0]:.1f} ms / {vals[1]:.1f} ms ({vals[2]:.1f}%) / {vals[3]:.2f} KB ({vals[4]:.1f}%)"
