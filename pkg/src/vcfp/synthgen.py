"""Seeded synthetic trace generator.

Emulates the structure of smart-speaker voice traffic at desk scale: a short
outgoing upload burst whose shape depends on the speaking voice, a server
"thinking" pause, then an incoming response burst that depends only on the
command (and, per category, on the epoch or a random variant). All sampling
is driven by per-trace rng streams derived from the config seed, so a config
fully determines the dataset.

Shape parameter ranges are calibration knobs, not measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .traces import (
    INCOMING,
    OUTGOING,
    CommandCategory,
    Dataset,
    LabeledTrace,
    Packet,
    Trace,
)

#: Ethernet frame bounds applied to every generated packet size
MIN_PACKET_BYTES = 60
MAX_PACKET_BYTES = 1514

#: epoch variants pre-built for every time-sensitive command
TIME_EPOCH_VARIANTS = 16

# rng stream tags, to keep profile/voice/trace streams independent
_TAG_PROFILE = 101
_TAG_TRACE = 202
_TAG_LEAD_IN = 777
_TAG_VOICE = 931

# outgoing gaps are clipped well below the response lead-in floor so the
# query burst always finishes before the response starts, for every voice
_OUT_GAP_CLIP_MS = (0.5, 12.0)
_IN_GAP_CLIP_MS = (0.5, 40.0)
_LEAD_IN_RANGE_MS = (800.0, 1600.0)

# transport-level acknowledgements sent upstream while the response streams
# down; they are outgoing, so the incoming projection stays voice-free
_ACK_EVERY = 4
_ACK_BYTES = 66.0
_ACK_DELAY_MS = 0.2


@dataclass(frozen=True)
class ResponseShape:
    """Burst shape: byte budget, per-packet size/gap distributions, jitter level."""

    total_bytes: int
    packet_size_mean: float
    packet_size_std: float
    interarrival_mean: float
    interarrival_std: float
    jitter: float

    def __post_init__(self) -> None:
        if self.total_bytes < 1:
            raise ValidationError("total_bytes must be >= 1")
        if self.packet_size_mean <= 0 or self.interarrival_mean <= 0:
            raise ValidationError("shape means must be > 0")
        if not 0.0 <= self.jitter <= 1.0:
            raise ValidationError("jitter must be in [0, 1]")


# the outgoing query burst uses the same parameterization
OutgoingShape = ResponseShape


@dataclass(frozen=True)
class CommandProfile:
    """Per-command generation recipe: one query shape plus response variants."""

    command_id: int
    category: CommandCategory
    response_variants: tuple[ResponseShape, ...]
    query_shape: OutgoingShape

    def __post_init__(self) -> None:
        n = len(self.response_variants)
        if self.category is CommandCategory.SINGLE and n != 1:
            raise ValidationError("single-response command needs exactly 1 variant")
        if self.category is CommandCategory.MULTIPLE and not 2 <= n <= 8:
            raise ValidationError("multiple-response command needs 2..8 variants")
        if self.category is CommandCategory.TIME_SENSITIVE and n < 2:
            raise ValidationError("time-sensitive command needs >= 2 epoch variants")


@dataclass(frozen=True)
class GenConfig:
    """Generator configuration; identical configs produce identical datasets."""

    num_classes: int
    traces_per_class: int
    category_ratios: tuple[float, float, float] = (0.45, 0.21, 0.34)
    num_voices: int = 5
    noise_level: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 1 or self.traces_per_class < 1:
            raise ValidationError("num_classes and traces_per_class must be >= 1")
        if not 1 <= self.num_voices <= 5:
            raise ValidationError("num_voices must be in [1, 5]")
        if abs(sum(self.category_ratios) - 1.0) > 1e-9:
            raise ValidationError(
                f"category ratios must sum to 1, got {sum(self.category_ratios)}"
            )
        if any(r < 0 for r in self.category_ratios):
            raise ValidationError("category ratios must be non-negative")
        if self.noise_level < 0:
            raise ValidationError("noise_level must be >= 0")


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def _largest_remainder_counts(n: int, ratios: tuple[float, ...]) -> list[int]:
    """Apportion n into len(ratios) integer counts, largest remainders first."""
    raw = [r * n for r in ratios]
    counts = [int(f) for f in raw]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (counts[i] - raw[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _draw_shape(rng: np.random.Generator, jitter_scale: float, incoming: bool) -> ResponseShape:
    total = int(rng.integers(10_000, 60_000)) if incoming else int(rng.integers(8_000, 40_000))
    return ResponseShape(
        total_bytes=total,
        packet_size_mean=float(rng.uniform(700.0, 1400.0)),
        packet_size_std=float(rng.uniform(10.0, 40.0)),
        interarrival_mean=float(rng.uniform(1.0, 25.0 if incoming else 6.0)),
        interarrival_std=float(rng.uniform(0.3, 3.0)),
        jitter=float(min(1.0, rng.uniform(0.08, 0.25) * jitter_scale)),
    )


def make_command_profiles(cfg: GenConfig) -> list[CommandProfile]:
    """Build one profile per class with category counts matching the ratios."""
    counts = _largest_remainder_counts(cfg.num_classes, cfg.category_ratios)
    categories = (
        [CommandCategory.SINGLE] * counts[0]
        + [CommandCategory.TIME_SENSITIVE] * counts[1]
        + [CommandCategory.MULTIPLE] * counts[2]
    )
    profiles = []
    for cid, category in enumerate(categories):
        rng = _rng(cfg.seed, _TAG_PROFILE, cid)
        query = _draw_shape(rng, cfg.noise_level, incoming=False)
        if category is CommandCategory.SINGLE:
            n_variants = 1
        elif category is CommandCategory.TIME_SENSITIVE:
            n_variants = TIME_EPOCH_VARIANTS
        else:
            n_variants = int(rng.integers(2, 6))
        variants = tuple(_draw_shape(rng, cfg.noise_level, incoming=True) for _ in range(n_variants))
        profiles.append(CommandProfile(cid, category, variants, query))
    return profiles


def voice_size_factor(voice_id: int) -> float:
    """Deterministic per-voice multiplier on outgoing packet sizes, in [0.9, 1.1]."""
    return float(_rng(_TAG_VOICE, voice_id).uniform(0.9, 1.1))


def voice_count_factor(voice_id: int) -> float:
    """Deterministic per-voice multiplier on outgoing packet count, in [0.9, 1.1]."""
    return float(_rng(_TAG_VOICE, voice_id + 100).uniform(0.9, 1.1))


def _lead_in_ms(command_id: int, variant_index: int) -> float:
    """Server response delay, fixed per (command, variant) so it is voice-free."""
    lo, hi = _LEAD_IN_RANGE_MS
    return float(_rng(_TAG_LEAD_IN, command_id, variant_index).uniform(lo, hi))


def _burst(
    shape: ResponseShape,
    direction: int,
    start_ms: float,
    count: int,
    size_scale: float,
    gap_clip: tuple[float, float],
    rng: np.random.Generator,
) -> list[Packet]:
    pkts = []
    t = start_ms
    for i in range(count):
        if i > 0:
            gap = shape.interarrival_mean + shape.interarrival_std * shape.jitter * rng.standard_normal()
            t += float(np.clip(gap, *gap_clip))
        size = shape.packet_size_mean * size_scale + shape.packet_size_std * shape.jitter * rng.standard_normal()
        size = int(np.clip(round(size), MIN_PACKET_BYTES, MAX_PACKET_BYTES))
        pkts.append(Packet(direction, size, int(round(t * 10.0))))
    return pkts


def generate_trace(
    profile: CommandProfile,
    voice_id: int,
    epoch: int,
    rng: np.random.Generator,
) -> LabeledTrace:
    """Generate one labelled trace.

    The outgoing burst carries a per-voice size/count offset; the incoming
    burst is voice-independent and selected per category: single commands use
    their only variant, time-sensitive commands the variant for ``epoch``,
    multiple-response commands a uniformly random variant.
    """
    q = profile.query_shape
    base_count = max(1, round(q.total_bytes / q.packet_size_mean))
    count = base_count * voice_count_factor(voice_id)
    count = max(1, round(count * (1.0 + 0.1 * q.jitter * rng.standard_normal())))
    outgoing = _burst(q, OUTGOING, 0.0, count, voice_size_factor(voice_id), _OUT_GAP_CLIP_MS, rng)

    if profile.category is CommandCategory.SINGLE:
        variant_idx = 0
    elif profile.category is CommandCategory.TIME_SENSITIVE:
        if epoch >= len(profile.response_variants):
            raise ValidationError(
                f"epoch {epoch} out of range for {len(profile.response_variants)} epoch variants"
            )
        variant_idx = epoch
    else:
        variant_idx = int(rng.integers(len(profile.response_variants)))
    shape = profile.response_variants[variant_idx]

    # response timing is anchored to the trace start, not the query end, so
    # incoming packets are bit-identical across voices at zero jitter
    in_start = _lead_in_ms(profile.command_id, variant_idx)
    in_count = max(1, round(shape.total_bytes / shape.packet_size_mean))
    incoming = _burst(shape, INCOMING, in_start, in_count, 1.0, _IN_GAP_CLIP_MS, rng)

    # ack every few response packets; timing/size derive from the incoming
    # burst only, so these too are identical across voices at zero jitter
    acks = []
    for k in range(_ACK_EVERY - 1, len(incoming), _ACK_EVERY):
        size = _ACK_BYTES + 8.0 * shape.jitter * rng.standard_normal()
        size = int(np.clip(round(size), MIN_PACKET_BYTES, MAX_PACKET_BYTES))
        acks.append(Packet(OUTGOING, size, incoming[k].time_tenths + int(_ACK_DELAY_MS * 10)))

    merged = sorted(outgoing + incoming + acks, key=lambda p: p.time_tenths)
    return LabeledTrace(
        trace=Trace(merged),
        command_id=profile.command_id,
        category=profile.category,
        voice_id=voice_id,
    )


def generate_dataset(cfg: GenConfig, epochs: int = 4, monitored: bool = True) -> Dataset:
    """Generate traces_per_class traces per class, cycling voices and epochs."""
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if epochs > TIME_EPOCH_VARIANTS:
        raise ValidationError(f"epochs must be <= {TIME_EPOCH_VARIANTS}")
    profiles = make_command_profiles(cfg)
    traces = []
    for profile in profiles:
        for i in range(cfg.traces_per_class):
            rng = _rng(cfg.seed, _TAG_TRACE, profile.command_id, i)
            lt = generate_trace(profile, i % cfg.num_voices, i % epochs, rng)
            if not monitored:
                lt = replace(lt, monitored=False)
            traces.append(lt)
    manifest = {
        "generator": {
            "num_classes": cfg.num_classes,
            "traces_per_class": cfg.traces_per_class,
            "category_ratios": list(cfg.category_ratios),
            "num_voices": cfg.num_voices,
            "noise_level": cfg.noise_level,
            "seed": cfg.seed,
            "epochs": epochs,
            "monitored": monitored,
        }
    }
    return Dataset(traces, cfg.num_classes, manifest)
