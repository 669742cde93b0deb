"""Cross-component file formats.

This package exchanges data with the trace workbench only through files:
tensors and labels come in as little-endian binary (16-byte header: magic
``VCFP``, u16 version, u16 reserved, u32 rows, u32 cols, then float32
payload; labels are raw u32), probabilities go out as CSV with header
``row,class_0..class_{C-1}``.
"""

from __future__ import annotations

import struct

import numpy as np

TENSOR_MAGIC = b"VCFP"
TENSOR_VERSION = 1
_HEADER = struct.Struct("<4sHHII")


class FormatError(ValueError):
    """A boundary file violates its format contract."""


def read_tensor_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError("tensor file shorter than its header")
        magic, version, _reserved, rows, cols = _HEADER.unpack(header)
        if magic != TENSOR_MAGIC:
            raise FormatError(f"bad tensor magic {magic!r}")
        if version != TENSOR_VERSION:
            raise FormatError(f"unsupported tensor version {version}")
        payload = fh.read()
    if len(payload) != rows * cols * 4:
        raise FormatError(
            f"tensor payload is {len(payload)} bytes, header implies {rows * cols * 4}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def write_tensor_file(matrix: np.ndarray, path) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise FormatError("tensor payload must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, 0, *matrix.shape))
        fh.write(matrix.tobytes())


def read_label_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) % 4 != 0:
        raise FormatError("label file length is not a multiple of 4")
    return np.frombuffer(payload, dtype="<u4").astype(np.int64)


def write_prob_file(probs: np.ndarray, path) -> None:
    """Probability rows, renormalized exactly, >= 9 significant digits."""
    probs = np.asarray(probs, dtype=np.float64)
    sums = probs.sum(axis=1)
    if (np.abs(sums - 1.0) > 1e-6).any():
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise FormatError(f"probability row {bad} sums to {sums[bad]}")
    probs = probs / sums[:, None]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row," + ",".join(f"class_{c}" for c in range(probs.shape[1])) + "\n")
        for i, row in enumerate(probs):
            fh.write(str(i) + "," + ",".join(f"{p:.12g}" for p in row) + "\n")


def read_prob_file(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("row,class_0"):
        raise FormatError("missing probability header")
    n_classes = len(lines[0].split(",")) - 1
    out = np.zeros((len(lines) - 1, n_classes))
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != n_classes + 1:
            raise FormatError(f"row {i}: expected {n_classes + 1} columns")
        out[i] = [float(p) for p in parts[1:]]
        total = out[i].sum()
        if abs(total - 1.0) > 1e-6:
            raise FormatError(f"row {i}: probabilities sum to {total}")
    return out
