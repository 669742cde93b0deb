"""Closed/open-world evaluation and the softmax ensemble combiner.

Predictions are always the argmax of a probability row, with ties broken
toward the lowest class index so results are reproducible everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .traces import CommandCategory

PROB_ROW_TOLERANCE = 1e-6


def check_prob_matrix(probs: np.ndarray, num_classes: int | None = None) -> np.ndarray:
    """Validate an n x C probability matrix (rows sum to 1 within tolerance)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValidationError("probability matrix must be 2-D")
    if num_classes is not None and probs.shape[1] != num_classes:
        raise ValidationError(
            f"expected {num_classes} classes, got {probs.shape[1]}"
        )
    if (probs < 0).any():
        raise ValidationError("probabilities must be non-negative")
    sums = probs.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > PROB_ROW_TOLERANCE)[0]
    if bad.size:
        raise ValidationError(f"probability row {bad[0]} sums to {sums[bad[0]]}")
    return probs


def argmax_predictions(probs: np.ndarray) -> np.ndarray:
    """Row argmax; np.argmax already resolves ties to the lowest index."""
    return np.argmax(np.asarray(probs, dtype=np.float64), axis=1)


@dataclass(frozen=True)
class EvalReport:
    """Closed-world scores plus optional fold spread and open-world triple."""

    accuracy: float
    confusion: np.ndarray
    per_category_accuracy: dict[CommandCategory, float] = field(default_factory=dict)
    per_category_counts: dict[CommandCategory, int] = field(default_factory=dict)
    per_fold_accuracies: tuple[float, ...] = ()
    variance: float = 0.0
    openworld: tuple[float, float, float] | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_category_accuracy": {
                cat.value: acc for cat, acc in self.per_category_accuracy.items()
            },
            "per_category_counts": {
                cat.value: n for cat, n in self.per_category_counts.items()
            },
            "per_fold_accuracies": list(self.per_fold_accuracies),
            "variance": self.variance,
        }
        if self.openworld is not None:
            doc["openworld"] = {
                "accuracy": self.openworld[0],
                "tpr": self.openworld[1],
                "fpr": self.openworld[2],
            }
        return doc


def closed_world_report(
    probs: np.ndarray,
    labels,
    categories: list[CommandCategory] | None = None,
) -> EvalReport:
    """Accuracy, confusion matrix, and per-category accuracy for one test set."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.shape[0] != labels.shape[0]:
        raise ValidationError("probability rows and labels differ in length")
    if categories is not None and len(categories) != labels.shape[0]:
        raise ValidationError("categories and labels differ in length")
    num_classes = probs.shape[1]
    if labels.size and labels.max() >= num_classes:
        raise ValidationError("label outside the probability matrix width")
    preds = argmax_predictions(probs)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    accuracy = float(np.trace(confusion)) / labels.shape[0]
    per_cat_acc: dict[CommandCategory, float] = {}
    per_cat_n: dict[CommandCategory, int] = {}
    if categories is not None:
        for cat in CommandCategory:
            mask = np.array([c is cat for c in categories])
            if mask.any():
                per_cat_acc[cat] = float(np.mean(preds[mask] == labels[mask]))
                per_cat_n[cat] = int(mask.sum())
    return EvalReport(
        accuracy=accuracy,
        confusion=confusion,
        per_category_accuracy=per_cat_acc,
        per_category_counts=per_cat_n,
        per_fold_accuracies=(accuracy,),
        variance=0.0,
    )


def merge_fold_reports(reports: list[EvalReport]) -> EvalReport:
    """Combine per-fold reports: pooled confusion, fold accuracies, variance."""
    if not reports:
        raise ValidationError("no fold reports to merge")
    confusion = sum(r.confusion for r in reports)
    accs = tuple(r.accuracy for r in reports)
    total = int(confusion.sum())
    per_cat_acc: dict[CommandCategory, float] = {}
    per_cat_n: dict[CommandCategory, int] = {}
    for cat in CommandCategory:
        counts = [(r.per_category_counts.get(cat, 0), r.per_category_accuracy.get(cat, 0.0)) for r in reports]
        n = sum(c for c, _ in counts)
        if n:
            per_cat_n[cat] = n
            per_cat_acc[cat] = sum(c * a for c, a in counts) / n
    return EvalReport(
        accuracy=float(np.trace(confusion)) / total,
        confusion=confusion,
        per_category_accuracy=per_cat_acc,
        per_category_counts=per_cat_n,
        per_fold_accuracies=accs,
        variance=float(np.var(accs)),
    )


def monitored_score(probs: np.ndarray, monitored_classes) -> np.ndarray:
    """Reuse a multiclass model for the open world: max probability over the
    monitored classes is the per-row monitored score."""
    probs = np.asarray(probs, dtype=np.float64)
    monitored_classes = np.asarray(monitored_classes, dtype=np.int64)
    if monitored_classes.size == 0:
        raise ValidationError("need at least one monitored class")
    return probs[:, monitored_classes].max(axis=1)


def open_world_report(
    scores, monitored_flags, threshold: float = 0.5
) -> tuple[float, float, float]:
    """(accuracy, TPR, FPR) of the monitored-vs-unmonitored decision."""
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(monitored_flags, dtype=bool)
    if scores.shape != flags.shape:
        raise ValidationError("scores and flags differ in shape")
    if (scores < 0).any() or (scores > 1).any():
        raise ValidationError("scores must lie in [0, 1]")
    if not flags.any():
        raise ValidationError("no monitored rows")
    if flags.all():
        raise ValidationError("no unmonitored rows")
    preds = scores >= threshold
    tp = int((preds & flags).sum())
    fn = int((~preds & flags).sum())
    fp = int((preds & ~flags).sum())
    tn = int((~preds & ~flags).sum())
    acc = (tp + tn) / flags.size
    tpr = tp / (tp + fn)
    fpr = fp / (fp + tn)
    return (float(acc), float(tpr), float(fpr))


def open_world_roc(
    scores, monitored_flags, thresholds=None
) -> list[tuple[float, float, float, float]]:
    """Sweep thresholds; rows of (threshold, accuracy, tpr, fpr)."""
    if thresholds is None:
        thresholds = np.linspace(0.0, 1.0, 101)
    rows = []
    for thr in thresholds:
        acc, tpr, fpr = open_world_report(scores, monitored_flags, float(thr))
        rows.append((float(thr), acc, tpr, fpr))
    return rows


@dataclass(frozen=True)
class EnsembleWeights:
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights):
            raise ValidationError("ensemble weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValidationError(f"ensemble weights must sum to 1, got {sum(self.weights)}")


def normalize_weights(validation_accuracies) -> EnsembleWeights:
    """Per-model weights proportional to validation accuracy."""
    accs = [float(a) for a in validation_accuracies]
    if any(a < 0 for a in accs):
        raise ValidationError("accuracies must be non-negative")
    total = sum(accs)
    if total == 0:
        raise ValidationError("cannot normalize all-zero accuracies")
    return EnsembleWeights(tuple(a / total for a in accs))


def ensemble_combine(
    prob_matrices: list[np.ndarray], w: EnsembleWeights
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sum of per-model probability rows, then argmax.

    Equal weights give the average ensemble; unequal weights the weighted
    ensemble. Returns (predictions, combined matrix).
    """
    if len(prob_matrices) != len(w.weights):
        raise ValidationError("one weight per probability matrix required")
    if not prob_matrices:
        raise ValidationError("need at least one probability matrix")
    shape = np.asarray(prob_matrices[0]).shape
    combined = np.zeros(shape, dtype=np.float64)
    for weight, probs in zip(w.weights, prob_matrices):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != shape:
            raise ValidationError("probability matrices differ in shape")
        combined += weight * probs
    return argmax_predictions(combined), combined


def render_results_table(rows: list[tuple], headers: list[str]) -> str:
    """Fixed-width text table for result summaries."""
    cells = [[str(h) for h in headers]] + [
        [f"{v:.4f}" if isinstance(v, float) else str(v) for v in row] for row in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for r_idx, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if r_idx == 0:
            lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    return "\n".join(lines)
