"""Trace encodings and split bookkeeping for the classifiers.

Binary format keeps only packet directions; numeric format keeps signed
direction*size. Numeric vectors are min-max normalized into [-1, 1] and every
vector is padded with zeros / trimmed to a uniform length.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .traces import INCOMING, OUTGOING, Dataset, Trace

#: uniform vector lengths tuned at full scale (bidirectional / incoming-only)
DEFAULT_LENGTH_BIDIRECTIONAL = 475
DEFAULT_LENGTH_INCOMING = 450


class VectorFormat(Enum):
    BINARY = "binary"
    NUMERIC = "numeric"


class DirectionFilter(Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"
    BOTH = "both"


def to_binary(t: Trace) -> np.ndarray:
    """Direction-only encoding: one +1/-1 per packet."""
    return t.directions().astype(np.float64)


def to_numeric(t: Trace) -> np.ndarray:
    """Signed-size encoding: direction * size per packet."""
    return (t.directions() * t.sizes()).astype(np.float64)


@dataclass(frozen=True)
class Scaler:
    """Global min/max bounds for the [-1, 1] rescaling."""

    min: float
    max: float

    def __post_init__(self) -> None:
        if not self.min < self.max:
            raise ValidationError(f"scaler needs min < max, got [{self.min}, {self.max}]")


def fit_minmax(vectors) -> Scaler:
    """Fit global min/max over all values; exact zeros are padding and ignored."""
    lo = np.inf
    hi = -np.inf
    for v in vectors:
        v = np.asarray(v, dtype=np.float64)
        nonpad = v[v != 0.0]
        if nonpad.size:
            lo = min(lo, float(nonpad.min()))
            hi = max(hi, float(nonpad.max()))
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ValidationError("no non-padding values to fit a scaler on")
    if lo == hi:
        raise ValidationError(f"degenerate scaler: all values equal {lo}")
    return Scaler(lo, hi)


def apply_minmax(s: Scaler, v) -> np.ndarray:
    """Map [min, max] onto [-1, 1]; out-of-range values clip."""
    v = np.asarray(v, dtype=np.float64)
    out = 2.0 * (v - s.min) / (s.max - s.min) - 1.0
    return np.clip(out, -1.0, 1.0)


def pad_trim(v, length: int) -> np.ndarray:
    """Zero-pad or truncate a vector to exactly ``length`` entries."""
    if length < 1:
        raise ValidationError("target length must be >= 1")
    v = np.asarray(v, dtype=np.float64)
    if v.size >= length:
        return v[:length].copy()
    out = np.zeros(length, dtype=np.float64)
    out[: v.size] = v
    return out


def direction_filter(t: Trace, keep: DirectionFilter) -> Trace:
    """Keep the packets of one direction (timestamps untouched)."""
    if keep is DirectionFilter.BOTH:
        return t
    wanted = INCOMING if keep is DirectionFilter.INCOMING else OUTGOING
    kept = [p for p in t.packets if p.direction == wanted]
    if not kept:
        raise ValidationError(f"no {keep.value} packets in trace")
    return Trace(kept)


@dataclass(frozen=True)
class FoldSplit:
    """Index triple for one cross-validation fold."""

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]


@dataclass(frozen=True)
class SplitPlan:
    fold_count: int
    folds: tuple[FoldSplit, ...]
    seed: int


def split_folds(d: Dataset, fold_count: int = 5, seed: int = 0) -> SplitPlan:
    """Stratified k-fold plan with an 80/20 train/validation split per fold.

    Per class, each fold tests 1/fold_count of the traces (+-1); the remaining
    traces are split so validation takes ~20% of them, allocated across
    classes by largest remainder so the global 64/16/20 ratio holds up to
    rounding.
    """
    if fold_count < 2:
        raise ValidationError("fold_count must be >= 2")
    labels = d.labels()
    by_class: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        by_class.setdefault(int(label), []).append(idx)
    for cls, indices in sorted(by_class.items()):
        if len(indices) < fold_count:
            raise ValidationError(
                f"class {cls} has {len(indices)} traces, fewer than fold_count {fold_count}"
            )

    rng = np.random.default_rng(np.random.SeedSequence([seed, fold_count]))
    shuffled: dict[int, list[int]] = {
        cls: [indices[j] for j in rng.permutation(len(indices))]
        for cls, indices in sorted(by_class.items())
    }
    test_sets: list[list[list[int]]] = [[] for _ in range(fold_count)]
    for cls, indices in sorted(shuffled.items()):
        for j, idx in enumerate(indices):
            test_sets[j % fold_count].append([cls, idx])

    folds = []
    for f in range(fold_count):
        test_idx = [idx for _cls, idx in test_sets[f]]
        test_set = set(test_idx)
        remaining = {cls: [i for i in idxs if i not in test_set] for cls, idxs in shuffled.items()}
        # largest-remainder allocation of the 20% validation share across classes
        targets = {cls: 0.2 * len(idxs) for cls, idxs in remaining.items()}
        val_counts = {cls: int(t) for cls, t in targets.items()}
        leftover = round(sum(targets.values())) - sum(val_counts.values())
        order = sorted(targets, key=lambda c: (val_counts[c] - targets[c], c))
        for cls in order[:leftover]:
            val_counts[cls] += 1
        train_idx: list[int] = []
        val_idx: list[int] = []
        for cls, idxs in sorted(remaining.items()):
            k = val_counts[cls]
            val_idx.extend(idxs[:k])
            train_idx.extend(idxs[k:])
        folds.append(
            FoldSplit(tuple(sorted(train_idx)), tuple(sorted(val_idx)), tuple(sorted(test_idx)))
        )
    return SplitPlan(fold_count, tuple(folds), seed)


def encode_trace(
    t: Trace,
    fmt: VectorFormat,
    length: int,
    scaler: Scaler | None = None,
    keep: DirectionFilter = DirectionFilter.BOTH,
    normalize_before_pad: bool = False,
) -> np.ndarray:
    """Full encoding pipeline: filter, encode, pad/trim, normalize.

    Numeric vectors require a scaler; by default normalization runs after
    padding, so padding zeros land on the fixed value 2(0-min)/(max-min)-1.
    Set ``normalize_before_pad`` to scale first and keep padding at exact 0.
    """
    t = direction_filter(t, keep)
    v = to_binary(t) if fmt is VectorFormat.BINARY else to_numeric(t)
    if fmt is VectorFormat.BINARY:
        return pad_trim(v, length)
    if scaler is None:
        raise ValidationError("numeric encoding requires a scaler")
    if normalize_before_pad:
        return pad_trim(apply_minmax(scaler, v), length)
    return apply_minmax(scaler, pad_trim(v, length))
