"""Persistence formats shared across components.

* TraceFile: JSON-Lines, one trace per line, with a sibling ``*.manifest.json``
  recording class count, per-class counts, generator config, format version.
* TensorFile: little-endian binary; 16-byte header (magic ``VCFP``, u16
  version, u16 reserved, u32 rows, u32 cols) then rows*cols float32 values.
  Labels travel in a sibling file of little-endian u32.
* ProbFile: CSV with header ``row,class_0..class_{C-1}``; probabilities are
  written with enough digits to round-trip (>= 9 significant digits).

Readers reject invariant violations instead of repairing them; the only
repair allowed is renormalizing probability rows already within 1e-6 of 1.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .defense import DefenseMetrics, ObfuscatedTrace
from .errors import DataFormatError, ValidationError
from .preprocess import DirectionFilter, Scaler, VectorFormat, encode_trace, fit_minmax, to_numeric, direction_filter
from .traces import CommandCategory, Dataset, LabeledTrace, Packet, Trace, validate_trace

TRACE_FORMAT_VERSION = 1
TENSOR_MAGIC = b"VCFP"
TENSOR_VERSION = 1
_HEADER = struct.Struct("<4sHHII")


def manifest_path(path) -> Path:
    path = Path(path)
    stem = path.name[: -len(".jsonl")] if path.name.endswith(".jsonl") else path.name
    return path.with_name(stem + ".manifest.json")


def _trace_record(lt: LabeledTrace) -> dict:
    return {
        "command_id": lt.command_id,
        "category": lt.category.value,
        "voice_id": lt.voice_id,
        "monitored": lt.monitored,
        "packets": [[p.direction, p.size, p.time_tenths] for p in lt.trace.packets],
    }


def write_dataset(d: Dataset, path, extras: list[list[dict]] | None = None) -> None:
    """Write a dataset as JSON-Lines plus its manifest.

    ``extras`` optionally attaches one mapping per packet per trace (used for
    obfuscated traces); readers that do not know the key ignore it.
    """
    path = Path(path)
    counts: dict[int, int] = {}
    with open(path, "w", encoding="utf-8") as fh:
        for i, lt in enumerate(d.traces):
            record = _trace_record(lt)
            if extras is not None:
                record["wire_extras"] = extras[i]
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            counts[lt.command_id] = counts.get(lt.command_id, 0) + 1
    manifest = {
        "format_version": TRACE_FORMAT_VERSION,
        "num_classes": d.num_classes,
        "num_traces": len(d),
        "class_counts": {str(k): v for k, v in sorted(counts.items())},
        "generator": d.manifest,
    }
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _parse_trace_line(line: str, line_no: int) -> LabeledTrace:
    try:
        obj = json.loads(line)
        category = CommandCategory(obj["category"])
        pkts = [Packet(int(d), int(s), int(t)) for d, s, t in obj["packets"]]
        trace = Trace(pkts)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"line {line_no}: malformed trace record ({exc})") from exc
    result = validate_trace(trace)
    if not result.ok:
        v = result.violations[0]
        raise DataFormatError(f"line {line_no}: packet {v.index}: {v.message}")
    try:
        return LabeledTrace(
            trace=trace,
            command_id=int(obj["command_id"]),
            category=category,
            voice_id=int(obj["voice_id"]),
            monitored=bool(obj["monitored"]),
        )
    except ValidationError as exc:
        raise DataFormatError(f"line {line_no}: {exc}") from exc


def read_dataset(path) -> Dataset:
    """Read a TraceFile, validating every line and the manifest."""
    path = Path(path)
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                traces.append(_parse_trace_line(line, line_no))
    mpath = manifest_path(path)
    if not mpath.exists():
        raise DataFormatError(f"missing manifest {mpath}")
    with open(mpath, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != TRACE_FORMAT_VERSION:
        raise DataFormatError(f"unsupported trace format version {manifest.get('format_version')}")
    if len(traces) != manifest["num_traces"]:
        raise DataFormatError(
            f"manifest says {manifest['num_traces']} traces, file has {len(traces)}"
        )
    counts: dict[str, int] = {}
    for lt in traces:
        counts[str(lt.command_id)] = counts.get(str(lt.command_id), 0) + 1
    if counts != manifest["class_counts"]:
        raise DataFormatError("manifest class counts do not match file contents")
    return Dataset(traces, int(manifest["num_classes"]), dict(manifest.get("generator", {})))


def obfuscation_extras(o: ObfuscatedTrace) -> list[dict]:
    """Per-wire-packet bookkeeping fields, ordered as in ``as_trace()``."""
    merged = sorted(
        list(o.outgoing) + list(o.incoming),
        key=lambda wp: (wp.send_time_ms, wp.direction == -1),
    )
    return [
        {
            "is_dummy": wp.is_dummy,
            "pad_bytes": wp.pad_bytes,
            "payload": [[origin, count] for origin, count in wp.real_payload],
        }
        for wp in merged
    ]


def write_metrics_csv(metrics: list[DefenseMetrics], path) -> None:
    """One cost row per trace."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "trace,latency_per_packet_ms,latency_per_trace_ms,"
            "latency_per_trace_pct,bandwidth_overhead_kb,bandwidth_overhead_pct\n"
        )
        for i, m in enumerate(metrics):
            fh.write(
                f"{i},{m.latency_per_packet_ms:.6g},{m.latency_per_trace_ms:.6g},"
                f"{m.latency_per_trace_pct:.6g},{m.bandwidth_overhead_kb:.6g},"
                f"{m.bandwidth_overhead_pct:.6g}\n"
            )


def write_tensor_file(matrix: np.ndarray, path) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValidationError("tensor payload must be 2-D")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, 0, rows, cols))
        fh.write(matrix.tobytes())


def read_tensor_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DataFormatError("tensor file shorter than its header")
        magic, version, _reserved, rows, cols = _HEADER.unpack(header)
        if magic != TENSOR_MAGIC:
            raise DataFormatError(f"bad tensor magic {magic!r}")
        if version != TENSOR_VERSION:
            raise DataFormatError(f"unsupported tensor version {version}")
        payload = fh.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise DataFormatError(
            f"tensor payload is {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def write_label_file(labels, path) -> None:
    labels = np.ascontiguousarray(labels, dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(labels.tobytes())


def read_label_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) % 4 != 0:
        raise DataFormatError("label file length is not a multiple of 4")
    return np.frombuffer(payload, dtype="<u4").astype(np.int64)


@dataclass(frozen=True)
class ExportConfig:
    """How traces become tensor rows."""

    fmt: VectorFormat = VectorFormat.NUMERIC
    keep: DirectionFilter = DirectionFilter.BOTH
    length: int = 475
    normalize_before_pad: bool = False


def export_tensors(
    d: Dataset,
    cfg: ExportConfig,
    tensor_path,
    label_path,
    scaler: Scaler | None = None,
) -> Scaler | None:
    """Encode every trace (dataset order) into a TensorFile + label file.

    Numeric exports need a scaler; when none is given one is fitted on the
    raw (direction-filtered, unpadded) values of this dataset. The scaler
    used is returned so callers can reuse a training-set fit on test data.
    """
    if cfg.fmt is VectorFormat.NUMERIC and scaler is None:
        scaler = fit_minmax(
            to_numeric(direction_filter(lt.trace, cfg.keep)) for lt in d.traces
        )
    rows = np.stack(
        [
            encode_trace(lt.trace, cfg.fmt, cfg.length, scaler, cfg.keep, cfg.normalize_before_pad)
            for lt in d.traces
        ]
    )
    write_tensor_file(rows.astype("<f4"), tensor_path)
    write_label_file(d.labels(), label_path)
    return scaler


def write_prob_file(probs: np.ndarray, path) -> None:
    """CSV probability rows; rows are renormalized exactly before writing."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValidationError("probability matrix must be 2-D")
    sums = probs.sum(axis=1)
    if (np.abs(sums - 1.0) > 1e-6).any():
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(f"probability row {bad} sums to {sums[bad]}")
    probs = probs / sums[:, None]
    header = "row," + ",".join(f"class_{c}" for c in range(probs.shape[1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(probs):
            fh.write(str(i) + "," + ",".join(f"{p:.12g}" for p in row) + "\n")


def import_probabilities(path, expected_rows: int, expected_classes: int) -> np.ndarray:
    """Read and validate a ProbFile into an (expected_rows x expected_classes) matrix."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataFormatError("probability file is empty")
    header = lines[0].split(",")
    expected_header = ["row"] + [f"class_{c}" for c in range(expected_classes)]
    if header != expected_header:
        raise DataFormatError(
            f"bad header: expected {len(expected_header)} columns for {expected_classes} classes"
        )
    if len(lines) - 1 != expected_rows:
        raise DataFormatError(
            f"expected {expected_rows} probability rows, found {len(lines) - 1}"
        )
    out = np.zeros((expected_rows, expected_classes), dtype=np.float64)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != expected_classes + 1:
            raise DataFormatError(f"row {i}: expected {expected_classes + 1} columns")
        try:
            values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise DataFormatError(f"row {i}: non-numeric probability ({exc})") from exc
        if (values < 0).any():
            raise DataFormatError(f"row {i}: negative probability")
        total = values.sum()
        if abs(total - 1.0) > 1e-6:
            raise DataFormatError(f"row {i}: probabilities sum to {total}")
        out[i] = values / total
    return out


def render_xy_svg(
    series: list[dict], xlabel: str, ylabel: str, width: int = 640, height: int = 420
) -> str:
    """Minimal SVG line chart; each series is {"label", "x": [...], "y": [...]}."""
    margin = 60
    xs = [x for s in series for x in s["x"]]
    ys = [y for s in series for y in s["y"]]
    if not xs:
        raise ValidationError("nothing to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(1.0, max(ys))
    span_x = (x_hi - x_lo) or 1.0
    span_y = (y_hi - y_lo) or 1.0

    def px(x):
        return margin + (x - x_lo) / span_x * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y_lo) / span_y * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 15}" text-anchor="middle" font-size="14">{xlabel}</text>',
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {height / 2:.0f})">{ylabel}</text>',
    ]
    for i, s in enumerate(series):
        color = colors[i % len(colors)]
        points = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(s["x"], s["y"]))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>')
        parts.append(
            f'<text x="{width - margin + 5}" y="{margin + 18 * i}" font-size="12" '
            f'fill="{color}">{s.get("label", f"series {i}")}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
