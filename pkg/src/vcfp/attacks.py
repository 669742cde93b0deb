"""Non-deep-learning baseline attacks behind one classifier contract.

Feature extractors: CUMUL-style interpolated cumulative sums and the CNS19
burst/size feature set. Classifiers: multiclass (SAMME) boosting over depth-1
decision stumps, one-vs-rest linear hinge classifiers trained by
deterministic full-batch subgradient descent, and a nearest-neighbor sanity
baseline. Every model predicts class-probability rows that sum to one, so
classical models can join the softmax ensemble.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DataFormatError, ValidationError
from .preprocess import to_numeric
from .traces import INCOMING, Trace

MODEL_FORMAT_VERSION = 1

DEFAULT_ADABOOST_ROUNDS = 400
DEFAULT_ADABOOST_SHRINKAGE = 0.5
DEFAULT_MAX_BURSTS = 60
DEFAULT_SIZE_BINS = 32
DEFAULT_CUMUL_POINTS = 100


def cumul_features(t: Trace, n_points: int = DEFAULT_CUMUL_POINTS) -> np.ndarray:
    """Volume prefix plus n_points equidistant samples of the signed cumsum."""
    if n_points < 2:
        raise ValidationError("n_points must be >= 2")
    if len(t) == 0:
        raise ValidationError("empty trace")
    signed = to_numeric(t)
    sizes = t.sizes()
    incoming = t.directions() == INCOMING
    cum = np.cumsum(signed)
    positions = np.linspace(0.0, len(cum) - 1, n_points)
    samples = np.interp(positions, np.arange(len(cum)), cum)
    prefix = np.array(
        [
            float(sizes[incoming].sum()),
            float(sizes[~incoming].sum()),
            float(incoming.sum()),
            float((~incoming).sum()),
        ]
    )
    return np.concatenate([prefix, samples])


def trace_bursts(t: Trace) -> list[int]:
    """Signed burst sizes: summed bytes of maximal same-direction runs."""
    bursts: list[int] = []
    run_dir = 0
    for p in t.packets:
        if p.direction == run_dir:
            bursts[-1] += p.direction * p.size
        else:
            bursts.append(p.direction * p.size)
            run_dir = p.direction
    return bursts


def cns19_features(
    t: Trace, max_bursts: int = DEFAULT_MAX_BURSTS, size_bins: int = DEFAULT_SIZE_BINS
) -> np.ndarray:
    """Burst sizes, volume summary, and an occurring-packet-size histogram."""
    if max_bursts < 1 or size_bins < 1:
        raise ValidationError("max_bursts and size_bins must be >= 1")
    if len(t) == 0:
        raise ValidationError("empty trace")
    bursts = trace_bursts(t)
    burst_slots = np.zeros(max_bursts, dtype=np.float64)
    head = bursts[:max_bursts]
    burst_slots[: len(head)] = head
    sizes = t.sizes()
    n = len(t)
    summary = np.array(
        [
            float(sizes.sum()),
            float(len(bursts)),
            float((t.directions() == INCOMING).sum()) / n,
            float(n),
        ]
    )
    edges = np.geomspace(1.0, 2048.0, size_bins + 1)
    clipped = np.clip(sizes, edges[0], edges[-1])
    hist, _ = np.histogram(clipped, bins=edges)
    return np.concatenate([burst_slots, summary, hist.astype(np.float64)])


@dataclass(frozen=True)
class FeatureMatrix:
    """Rectangular feature rows with integer labels and a provenance tag."""

    rows: np.ndarray
    labels: np.ndarray
    feature_spec: str = ""

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if rows.ndim != 2:
            raise ValidationError("feature rows must be a 2-D matrix")
        if rows.shape[0] != labels.shape[0]:
            raise ValidationError("row/label count mismatch")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)


class ModelKind(Enum):
    ADABOOST = "adaboost"
    LINEAR_OVR = "linear_ovr"
    ONENN = "onenn"


@dataclass(frozen=True)
class Stump:
    """Depth-1 split: x[feature] <= threshold predicts left_class, else right_class."""

    feature: int
    threshold: float
    left_class: int
    right_class: int

    def predict(self, rows: np.ndarray) -> np.ndarray:
        out = np.full(rows.shape[0], self.right_class, dtype=np.int64)
        out[rows[:, self.feature] <= self.threshold] = self.left_class
        return out


@dataclass
class ClassifierModel:
    kind: ModelKind
    num_classes: int
    num_features: int
    hyper: dict = field(default_factory=dict)
    # adaboost; the real variant keeps per-leaf log class distributions,
    # the discrete variant keeps single-class votes weighted by alphas
    stumps: list[Stump] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    stump_log_probs: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    train_error_history: list[float] = field(default_factory=list)
    # linear one-vs-rest
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    # nearest neighbor
    stored_rows: np.ndarray | None = None
    stored_labels: np.ndarray | None = None


def _best_stump(X, y, w, orders, num_classes):
    """Exhaustive weighted stump search over all features and midpoint thresholds."""
    n, d = X.shape
    best = None  # (correct_weight, feature, split_pos) with deterministic tie-break
    best_leaves = None
    class_total = np.zeros(num_classes)
    np.add.at(class_total, y, w)
    for j in range(d):
        order = orders[j]
        xs = X[order, j]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cum = np.zeros((n, num_classes))
        cum[np.arange(n), y[order]] = w[order]
        np.cumsum(cum, axis=0, out=cum)
        left_best = cum.max(axis=1)
        right_best = (class_total - cum).max(axis=1)
        correct = np.where(valid, left_best[:-1] + right_best[:-1], -np.inf)
        k = int(np.argmax(correct))
        if best is None or correct[k] > best[0] + 1e-15:
            best = (float(correct[k]), j, k)
            best_leaves = (
                float((xs[k] + xs[k + 1]) / 2.0),
                int(np.argmax(cum[k])),
                int(np.argmax(class_total - cum[k])),
            )
    if best is None:
        return None
    threshold, left_class, right_class = best_leaves
    return Stump(best[1], threshold, left_class, right_class), best[0]


def _leaf_log_probs(y, w, mask, num_classes) -> np.ndarray:
    eps = np.finfo(np.float64).eps
    p = np.zeros(num_classes)
    np.add.at(p, y[mask], w[mask])
    p = np.clip(p / max(p.sum(), eps), eps, None)
    return np.log(p / p.sum())


def _train_adaboost(fm: FeatureMatrix, num_classes: int, hyper: dict) -> ClassifierModel:
    """Multiclass boosting over depth-1 stumps.

    The default "real" variant votes with each leaf's log class distribution
    (needed to make stump boosting effective past a handful of classes); the
    "discrete" variant casts classic single-class votes weighted by alpha.
    Boosting halts when the best stump stops being a valid weak learner
    (weighted error >= 1 - 1/C, the 0.5 cutoff in the two-class case).
    """
    rounds = int(hyper.get("rounds", DEFAULT_ADABOOST_ROUNDS))
    variant = str(hyper.get("variant", "real"))
    shrinkage = float(hyper.get("shrinkage", DEFAULT_ADABOOST_SHRINKAGE))
    if variant not in ("real", "discrete"):
        raise ValidationError(f"unknown adaboost variant {variant!r}")
    X, y = fm.rows, fm.labels
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    orders = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    model = ClassifierModel(
        ModelKind.ADABOOST,
        num_classes,
        X.shape[1],
        {"rounds": rounds, "variant": variant, "shrinkage": shrinkage},
    )
    scores = np.zeros((n, num_classes))
    y_coding = np.full((n, num_classes), -1.0 / (num_classes - 1))
    y_coding[np.arange(n), y] = 1.0
    eps = 1e-12
    for _ in range(rounds):
        found = _best_stump(X, y, w, orders, num_classes)
        if found is None:
            break
        stump, correct = found
        err = max(0.0, 1.0 - correct / w.sum())
        if err >= 1.0 - 1.0 / num_classes:
            break
        left_mask = X[:, stump.feature] <= stump.threshold
        if variant == "real":
            log_left = _leaf_log_probs(y, w, left_mask, num_classes)
            log_right = _leaf_log_probs(y, w, ~left_mask, num_classes)
            logp = np.where(left_mask[:, None], log_left[None, :], log_right[None, :])
            scores += shrinkage * (num_classes - 1) * (logp - logp.mean(axis=1, keepdims=True))
            w = w * np.exp(
                -shrinkage * (num_classes - 1.0) / num_classes * (y_coding * logp).sum(axis=1)
            )
            model.stumps.append(stump)
            model.stump_log_probs.append((log_left, log_right))
        else:
            alpha = math.log((1.0 - err + eps) / (err + eps)) + math.log(num_classes - 1.0)
            pred = stump.predict(X)
            model.stumps.append(stump)
            model.alphas.append(alpha)
            scores[np.arange(n), pred] += alpha
            if err <= 0.0:
                model.train_error_history.append(float(np.mean(np.argmax(scores, axis=1) != y)))
                break
            w = w * np.exp(alpha * (pred != y))
        w /= w.sum()
        model.train_error_history.append(float(np.mean(np.argmax(scores, axis=1) != y)))
    return model


def adaboost_scores(model: ClassifierModel, rows: np.ndarray) -> np.ndarray:
    """Accumulated boosting scores (pre-softmax) for each class."""
    n = rows.shape[0]
    scores = np.zeros((n, model.num_classes))
    variant = model.hyper.get("variant", "real")
    if variant == "real":
        shrinkage = float(model.hyper.get("shrinkage", DEFAULT_ADABOOST_SHRINKAGE))
        for stump, (log_left, log_right) in zip(model.stumps, model.stump_log_probs):
            left_mask = rows[:, stump.feature] <= stump.threshold
            logp = np.where(left_mask[:, None], log_left[None, :], log_right[None, :])
            scores += shrinkage * (model.num_classes - 1) * (
                logp - logp.mean(axis=1, keepdims=True)
            )
    else:
        for stump, alpha in zip(model.stumps, model.alphas):
            scores[np.arange(n), stump.predict(rows)] += alpha
    return scores


def _train_linear_ovr(fm: FeatureMatrix, num_classes: int, hyper: dict) -> ClassifierModel:
    epochs = int(hyper.get("epochs", 200))
    lr = float(hyper.get("lr", 0.5))
    reg = float(hyper.get("reg", 1e-4))
    X, y = fm.rows, fm.labels
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    Xs = (X - mean) / std
    n, d = Xs.shape
    W = np.zeros((num_classes, d))
    b = np.zeros(num_classes)
    for c in range(num_classes):
        target = np.where(y == c, 1.0, -1.0)
        w_c = np.zeros(d)
        b_c = 0.0
        for epoch in range(epochs):
            step = lr / (1.0 + epoch)
            margins = target * (Xs @ w_c + b_c)
            viol = margins < 1.0
            grad_w = reg * w_c - (target[viol, None] * Xs[viol]).sum(axis=0) / n
            grad_b = -target[viol].sum() / n
            w_c -= step * grad_w
            b_c -= step * grad_b
        W[c] = w_c
        b[c] = b_c
    return ClassifierModel(
        ModelKind.LINEAR_OVR,
        num_classes,
        d,
        {"epochs": epochs, "lr": lr, "reg": reg},
        feature_mean=mean,
        feature_std=std,
        weights=W,
        bias=b,
    )


def train(
    kind: ModelKind, fm: FeatureMatrix, hyper: dict | None = None, num_classes: int | None = None
) -> ClassifierModel:
    """Fit a classifier; training is deterministic for fixed inputs."""
    hyper = dict(hyper or {})
    X, y = fm.rows, fm.labels
    if not np.isfinite(X).all():
        raise ValidationError("features must be finite")
    if num_classes is None:
        num_classes = int(y.max()) + 1
    if np.unique(y).size < 2:
        raise ValidationError("training set must contain at least two classes")
    if X.shape[0] < num_classes:
        raise ValidationError("need at least one row per class")
    if kind is ModelKind.ADABOOST:
        return _train_adaboost(fm, num_classes, hyper)
    if kind is ModelKind.LINEAR_OVR:
        return _train_linear_ovr(fm, num_classes, hyper)
    return ClassifierModel(
        ModelKind.ONENN,
        num_classes,
        X.shape[1],
        {},
        stored_rows=X.copy(),
        stored_labels=y.copy(),
    )


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: ClassifierModel, rows: np.ndarray) -> np.ndarray:
    """Class-probability rows (each summing to 1) for a batch of feature rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.num_features:
        raise ValidationError(
            f"expected rows with {model.num_features} features, got shape {rows.shape}"
        )
    if model.kind is ModelKind.ADABOOST:
        return _softmax(adaboost_scores(model, rows))
    if model.kind is ModelKind.LINEAR_OVR:
        Xs = (rows - model.feature_mean) / model.feature_std
        margins = Xs @ model.weights.T + model.bias
        return _softmax(margins)
    # nearest neighbor: squared distances via the expansion trick
    d2 = (
        (rows**2).sum(axis=1, keepdims=True)
        - 2.0 * rows @ model.stored_rows.T
        + (model.stored_rows**2).sum(axis=1)
    )
    nearest = np.argmin(d2, axis=1)
    probs = np.zeros((rows.shape[0], model.num_classes))
    probs[np.arange(rows.shape[0]), model.stored_labels[nearest]] = 1.0
    return probs


def _floats_to_strings(a: np.ndarray) -> list[str]:
    return [repr(float(x)) for x in np.asarray(a, dtype=np.float64).ravel()]


def _strings_to_array(strings, shape) -> np.ndarray:
    return np.array([float(s) for s in strings], dtype=np.float64).reshape(shape)


def model_to_json(model: ClassifierModel) -> dict:
    """Versioned JSON document; float parameters stored as decimal strings."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "num_classes": model.num_classes,
        "num_features": model.num_features,
        "hyper": model.hyper,
    }
    if model.kind is ModelKind.ADABOOST:
        doc["stumps"] = [
            {
                "feature": s.feature,
                "threshold": repr(s.threshold),
                "left_class": s.left_class,
                "right_class": s.right_class,
            }
            for s in model.stumps
        ]
        doc["alphas"] = [repr(a) for a in model.alphas]
        doc["stump_log_probs"] = [
            [_floats_to_strings(left), _floats_to_strings(right)]
            for left, right in model.stump_log_probs
        ]
    elif model.kind is ModelKind.LINEAR_OVR:
        doc["feature_mean"] = _floats_to_strings(model.feature_mean)
        doc["feature_std"] = _floats_to_strings(model.feature_std)
        doc["weights"] = _floats_to_strings(model.weights)
        doc["bias"] = _floats_to_strings(model.bias)
    else:
        doc["rows_shape"] = list(model.stored_rows.shape)
        doc["stored_rows"] = _floats_to_strings(model.stored_rows)
        doc["stored_labels"] = [int(v) for v in model.stored_labels]
    return doc


def model_from_json(doc: dict) -> ClassifierModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataFormatError(f"unsupported model format version {doc.get('format_version')}")
    kind = ModelKind(doc["kind"])
    num_classes = int(doc["num_classes"])
    num_features = int(doc["num_features"])
    hyper = dict(doc.get("hyper", {}))
    if kind is ModelKind.ADABOOST:
        stumps = [
            Stump(int(s["feature"]), float(s["threshold"]), int(s["left_class"]), int(s["right_class"]))
            for s in doc["stumps"]
        ]
        alphas = [float(a) for a in doc["alphas"]]
        log_probs = [
            (_strings_to_array(left, (num_classes,)), _strings_to_array(right, (num_classes,)))
            for left, right in doc.get("stump_log_probs", [])
        ]
        return ClassifierModel(
            kind, num_classes, num_features, hyper,
            stumps=stumps, alphas=alphas, stump_log_probs=log_probs,
        )
    if kind is ModelKind.LINEAR_OVR:
        d = num_features
        return ClassifierModel(
            kind,
            num_classes,
            d,
            hyper,
            feature_mean=_strings_to_array(doc["feature_mean"], (d,)),
            feature_std=_strings_to_array(doc["feature_std"], (d,)),
            weights=_strings_to_array(doc["weights"], (num_classes, d)),
            bias=_strings_to_array(doc["bias"], (num_classes,)),
        )
    shape = tuple(doc["rows_shape"])
    return ClassifierModel(
        kind,
        num_classes,
        num_features,
        hyper,
        stored_rows=_strings_to_array(doc["stored_rows"], shape),
        stored_labels=np.array(doc["stored_labels"], dtype=np.int64),
    )


def save_model(model: ClassifierModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)


def load_model(path) -> ClassifierModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
