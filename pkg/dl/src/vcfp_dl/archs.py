"""Network architecture specs and builders.

Three families over fixed-length trace vectors: a 1-D CNN with four
convolutional blocks and five pooling layers, a five-layer stacked LSTM, and
a stacked autoencoder (four encoder layers, one code layer, four mirrored
decoder layers) whose trained encoder gets a classification head attached.

Negative values encode incoming packet sizes, so the activation whitelist
deliberately excludes the rectifier that zeroes negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

ALLOWED_ACTIVATIONS = ("softsign", "tanh", "elu", "selu")

_ACTIVATIONS = {
    "softsign": nn.Softsign,
    "tanh": nn.Tanh,
    "elu": nn.ELU,
    "selu": nn.SELU,
}


class ArchError(ValueError):
    """Spec violates an architecture invariant."""


def _check_activations(names) -> None:
    for name in names:
        if name not in ALLOWED_ACTIVATIONS:
            raise ArchError(
                f"activation {name!r} not allowed; choose from {ALLOWED_ACTIVATIONS}"
            )


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer knobs shared by all architectures."""

    optimizer: str = "adamax"
    learning_rate: float = 0.002
    decay: float = 0.0
    batch_size: int = 32


@dataclass(frozen=True)
class CnnSpec:
    input_dim: int
    channels: tuple[int, int, int, int]
    filters: tuple[int, int, int, int]
    pools: tuple[int, int, int, int]
    activations: tuple[str, str, str, str]
    dropouts: tuple[float, float, float, float]
    dense_size: int
    dense_activation: str = "selu"
    final_pool: int = 2
    train: TrainSettings = field(default_factory=TrainSettings)

    def __post_init__(self) -> None:
        for name, seq in (
            ("channels", self.channels),
            ("filters", self.filters),
            ("pools", self.pools),
            ("activations", self.activations),
            ("dropouts", self.dropouts),
        ):
            if len(seq) != 4:
                raise ArchError(f"CNN needs exactly 4 conv blocks; {name} has {len(seq)}")
        _check_activations(list(self.activations) + [self.dense_activation])


@dataclass(frozen=True)
class LstmSpec:
    input_dim: int
    layer_sizes: tuple[int, int, int, int, int]
    dropouts: tuple[float, float, float, float, float]
    dense_size: int
    dense_activation: str = "selu"
    dense_dropout: float = 0.0
    train: TrainSettings = field(default_factory=TrainSettings)

    def __post_init__(self) -> None:
        if len(self.layer_sizes) != 5:
            raise ArchError(f"LSTM needs exactly 5 recurrent layers, got {len(self.layer_sizes)}")
        if len(self.dropouts) != 5:
            raise ArchError("LSTM needs one dropout per recurrent layer")
        _check_activations([self.dense_activation])


@dataclass(frozen=True)
class SaeSpec:
    input_dim: int
    encoder_sizes: tuple[int, int, int, int, int]  # 4 encoder layers + 1 code
    activations: tuple[str, str, str, str, str]
    dropouts: tuple[float, float, float, float]
    dense_size: int
    dense_activation: str = "tanh"
    pretrain_epochs: int = 20
    train: TrainSettings = field(default_factory=TrainSettings)

    def __post_init__(self) -> None:
        if len(self.encoder_sizes) != 5:
            raise ArchError("SAE needs 4 encoder sizes plus 1 code size")
        if len(self.activations) != 5:
            raise ArchError("SAE needs one activation per encoder-path layer")
        _check_activations(list(self.activations) + [self.dense_activation])


ArchSpec = CnnSpec | LstmSpec | SaeSpec


class CnnModel(nn.Module):
    def __init__(self, spec: CnnSpec, num_classes: int) -> None:
        super().__init__()
        blocks = []
        prev = 1
        length = spec.input_dim
        for ch, flt, pool, act, drop in zip(
            spec.channels, spec.filters, spec.pools, spec.activations, spec.dropouts
        ):
            blocks += [
                nn.Conv1d(prev, ch, kernel_size=flt, padding=flt // 2),
                _ACTIVATIONS[act](),
                nn.Dropout(drop),
                nn.MaxPool1d(pool, ceil_mode=True),
            ]
            length = -(-length // pool)
            prev = ch
        # fifth pooling layer, fixed stride
        blocks.append(nn.MaxPool1d(spec.final_pool, ceil_mode=True))
        length = -(-length // spec.final_pool)
        self.features = nn.Sequential(*blocks)
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(prev * length, spec.dense_size),
            _ACTIVATIONS[spec.dense_activation](),
            nn.Linear(spec.dense_size, num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x.unsqueeze(1)))


class LstmModel(nn.Module):
    def __init__(self, spec: LstmSpec, num_classes: int) -> None:
        super().__init__()
        self.layers = nn.ModuleList()
        self.dropouts = nn.ModuleList()
        prev = 1
        for size, drop in zip(spec.layer_sizes, spec.dropouts):
            self.layers.append(nn.LSTM(prev, size, batch_first=True))
            self.dropouts.append(nn.Dropout(drop))
            prev = size
        self.head = nn.Sequential(
            nn.Linear(prev, spec.dense_size),
            _ACTIVATIONS[spec.dense_activation](),
            nn.Dropout(spec.dense_dropout),
            nn.Linear(spec.dense_size, num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = x.unsqueeze(-1)
        for lstm, drop in zip(self.layers, self.dropouts):
            out, _ = lstm(out)
            out = drop(out)
        # classify from the final timestep of the last recurrent layer
        return self.head(out[:, -1, :])


class SaeAutoencoder(nn.Module):
    """Reconstruction phase: 4 encoder layers, 1 code layer, 4 mirrored decoder layers."""

    def __init__(self, spec: SaeSpec) -> None:
        super().__init__()
        e = spec.encoder_sizes
        acts = spec.activations
        widths = [spec.input_dim, e[0], e[1], e[2], e[3]]
        enc = []
        for i in range(4):
            enc += [nn.Linear(widths[i], widths[i + 1]), _ACTIVATIONS[acts[i]]()]
        self.encoder = nn.Sequential(*enc)
        self.code = nn.Sequential(nn.Linear(e[3], e[4]), _ACTIVATIONS[acts[4]]())
        dec_widths = [e[4], e[3], e[2], e[1], spec.input_dim]
        dec = []
        for i in range(4):
            dec.append(nn.Linear(dec_widths[i], dec_widths[i + 1]))
            if i < 3:
                dec.append(_ACTIVATIONS[acts[3 - i]]())
        self.decoder = nn.Sequential(*dec)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.code(self.encoder(x)))


class SaeModel(nn.Module):
    """Classification phase: the trained encoder+code with a dense head."""

    def __init__(self, spec: SaeSpec, num_classes: int) -> None:
        super().__init__()
        ae = SaeAutoencoder(spec)
        self.autoencoder = ae
        self.encoder = ae.encoder
        self.code = ae.code
        self.head = nn.Sequential(
            nn.Linear(spec.encoder_sizes[4], spec.dense_size),
            _ACTIVATIONS[spec.dense_activation](),
            nn.Linear(spec.dense_size, num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.code(self.encoder(x)))


def build_model(spec: ArchSpec, num_classes: int, seed: int = 0) -> tuple[nn.Module, int]:
    """Instantiate a model with seeded initial weights; returns (model, #params)."""
    if num_classes < 2:
        raise ArchError("need at least two classes")
    torch.manual_seed(seed)
    if isinstance(spec, CnnSpec):
        model: nn.Module = CnnModel(spec, num_classes)
    elif isinstance(spec, LstmSpec):
        model = LstmModel(spec, num_classes)
    elif isinstance(spec, SaeSpec):
        model = SaeModel(spec, num_classes)
    else:
        raise ArchError(f"unknown architecture spec {type(spec).__name__}")
    return model, parameter_count(model)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
