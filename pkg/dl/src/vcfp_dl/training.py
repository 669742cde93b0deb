"""Seeded training loop with validation-accuracy early stopping.

Training runs up to ``max_epochs`` and stops once validation accuracy has
not improved for ``patience`` consecutive epochs; the best-scoring weights
are restored. The stacked autoencoder first fits its reconstruction path,
then the classification head is trained like the other models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .archs import ArchError, ArchSpec, SaeModel, TrainSettings


@dataclass(frozen=True)
class TrainSchedule:
    max_epochs: int = 500
    patience: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.patience < 1:
            raise ArchError("patience must be >= 1")


def _make_optimizer(params, settings: TrainSettings):
    name = settings.optimizer.lower()
    lr = settings.learning_rate
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    if name == "adamax":
        return torch.optim.Adamax(params, lr=lr)
    if name == "adadelta":
        return torch.optim.Adadelta(params, lr=lr)
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    raise ArchError(f"unknown optimizer {settings.optimizer!r}")


def _epoch_lr(settings: TrainSettings, epoch: int) -> float:
    # time-based learning-rate decay applies to plain SGD only; the adaptive
    # optimizers run at their configured rate
    if settings.optimizer.lower() == "sgd" and settings.decay > 0:
        return settings.learning_rate / (1.0 + settings.decay * epoch)
    return settings.learning_rate


def _accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor, batch: int) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(x), batch):
            logits = model(x[start : start + batch])
            hits += int((logits.argmax(dim=1) == y[start : start + batch]).sum())
    return hits / len(x)


def pretrain_autoencoder(model: SaeModel, x: torch.Tensor, settings: TrainSettings, epochs: int):
    opt = _make_optimizer(model.autoencoder.parameters(), settings)
    loss_fn = nn.MSELoss()
    model.autoencoder.train()
    for _ in range(epochs):
        for start in range(0, len(x), settings.batch_size):
            batch = x[start : start + settings.batch_size]
            opt.zero_grad()
            loss = loss_fn(model.autoencoder(batch), batch)
            loss.backward()
            opt.step()


def train_dl(
    model: nn.Module,
    spec: ArchSpec,
    tensors: np.ndarray,
    labels: np.ndarray,
    sched: TrainSchedule,
    val_fraction: float = 0.2,
) -> dict:
    """Fit the model; returns a history dict with per-epoch accuracies.

    The validation split is stratified per class from the tail of a seeded
    shuffle, so two runs with one seed see identical batches.
    """
    tensors = np.asarray(tensors, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if tensors.ndim != 2 or tensors.shape[1] != spec.input_dim:
        raise ArchError(
            f"tensor columns {tensors.shape} do not match spec input dimension {spec.input_dim}"
        )
    if len(tensors) != len(labels):
        raise ArchError("tensor/label row counts differ")
    rng = np.random.default_rng(sched.seed)
    val_idx: list[int] = []
    train_idx: list[int] = []
    for cls in np.unique(labels):
        members = rng.permutation(np.where(labels == cls)[0])
        k = max(1, int(round(val_fraction * len(members))))
        val_idx.extend(members[:k])
        train_idx.extend(members[k:])
    if not val_idx or not train_idx:
        raise ArchError("empty train or validation split")
    train_idx = np.array(sorted(train_idx))
    val_idx = np.array(sorted(val_idx))

    torch.manual_seed(sched.seed)
    x_train = torch.from_numpy(tensors[train_idx])
    y_train = torch.from_numpy(labels[train_idx])
    x_val = torch.from_numpy(tensors[val_idx])
    y_val = torch.from_numpy(labels[val_idx])

    settings = spec.train
    if isinstance(model, SaeModel):
        pretrain_autoencoder(model, x_train, settings, getattr(spec, "pretrain_epochs", 10))

    opt = _make_optimizer(model.parameters(), settings)
    loss_fn = nn.CrossEntropyLoss()
    history: dict = {"train_accuracy": [], "val_accuracy": [], "stopped_epoch": None, "best_epoch": None}
    best_val = -1.0
    best_epoch = -1
    best_state = None
    for epoch in range(sched.max_epochs):
        for group in opt.param_groups:
            group["lr"] = _epoch_lr(settings, epoch)
        model.train()
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), settings.batch_size):
            idx = order[start : start + settings.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(x_train[idx]), y_train[idx])
            loss.backward()
            opt.step()
        train_acc = _accuracy(model, x_train, y_train, settings.batch_size)
        val_acc = _accuracy(model, x_val, y_val, settings.batch_size)
        history["train_accuracy"].append(train_acc)
        history["val_accuracy"].append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if epoch - best_epoch >= sched.patience:
            break
    history["stopped_epoch"] = len(history["val_accuracy"]) - 1
    history["best_epoch"] = best_epoch
    if best_state is not None:
        model.load_state_dict(best_state)
    return history


def predict_softmax(model: nn.Module, tensors: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Softmax probability rows for a tensor batch (rows sum to 1)."""
    tensors = np.asarray(tensors, dtype=np.float32)
    model.eval()
    rows = []
    with torch.no_grad():
        for start in range(0, len(tensors), batch_size):
            logits = model(torch.from_numpy(tensors[start : start + batch_size]))
            rows.append(torch.softmax(logits.double(), dim=1).numpy())
    out = np.vstack(rows)
    return out / out.sum(axis=1, keepdims=True)
