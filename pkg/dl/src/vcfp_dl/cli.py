"""Command-line surface: ``dl train`` and ``dl predict``.

Train reads a TensorFile + label file, fits the chosen architecture, and
saves the model plus a JSON training history. Predict loads a saved model
and writes softmax probabilities in the shared ProbFile format.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import torch

from . import __version__
from .archs import ArchError, CnnSpec, LstmSpec, SaeSpec, build_model
from .io import FormatError, read_label_file, read_tensor_file, write_prob_file
from .presets import PRESET_NOTES, PRESETS, get_preset
from .training import TrainSchedule, predict_softmax, train_dl

_SPEC_TYPES = {"cnn": CnnSpec, "lstm": LstmSpec, "sae": SaeSpec}


def _spec_to_dict(spec) -> dict:
    doc = dataclasses.asdict(spec)
    doc["arch"] = {CnnSpec: "cnn", LstmSpec: "lstm", SaeSpec: "sae"}[type(spec)]
    return doc


def _spec_from_dict(doc: dict):
    doc = dict(doc)
    arch = doc.pop("arch")
    cls = _SPEC_TYPES[arch]
    train = doc.pop("train")
    from .archs import TrainSettings

    kwargs = {
        k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()
    }
    return cls(train=TrainSettings(**train), **kwargs)


def cmd_train(args) -> int:
    tensors = read_tensor_file(args.tensors)
    labels = read_label_file(args.labels)
    spec = get_preset(args.preset)
    if args.arch and not isinstance(spec, _SPEC_TYPES[args.arch]):
        raise ArchError(f"preset {args.preset!r} is not a {args.arch} architecture")
    num_classes = int(labels.max()) + 1
    model, n_params = build_model(spec, num_classes, seed=args.seed)
    sched = TrainSchedule(max_epochs=args.epochs, patience=args.patience, seed=args.seed)
    history = train_dl(model, spec, tensors, labels, sched, val_fraction=args.val_fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state_dict": model.state_dict(),
            "spec": _spec_to_dict(spec),
            "num_classes": num_classes,
            "seed": args.seed,
            "version": __version__,
        },
        out / "model.pt",
    )
    doc = {
        "preset": args.preset,
        "preset_note": PRESET_NOTES.get(args.preset),
        "parameters": n_params,
        "num_classes": num_classes,
        "seed": args.seed,
        **history,
    }
    with open(out / "history.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    best = history["val_accuracy"][history["best_epoch"]]
    print(
        f"trained {args.preset} ({n_params} params) for "
        f"{history['stopped_epoch'] + 1} epochs; best val accuracy {best:.4f}"
    )
    return 0


def cmd_predict(args) -> int:
    payload = torch.load(args.model, weights_only=False)
    spec = _spec_from_dict(payload["spec"])
    model, _ = build_model(spec, payload["num_classes"], seed=payload.get("seed", 0))
    model.load_state_dict(payload["state_dict"])
    tensors = read_tensor_file(args.tensors)
    if tensors.shape[1] != spec.input_dim:
        raise ArchError(
            f"tensor columns {tensors.shape[1]} do not match model input {spec.input_dim}"
        )
    probs = predict_softmax(model, tensors)
    write_prob_file(probs, args.out)
    print(f"wrote {probs.shape[0]} probability rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a network on an exported tensor file")
    p.add_argument("--tensors", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--arch", choices=("cnn", "lstm", "sae"), default=None)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")

    p = sub.add_parser("predict", help="write softmax probabilities for a tensor file")
    p.add_argument("--model", required=True)
    p.add_argument("--tensors", required=True)
    p.add_argument("--out", default="probs.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        handler = cmd_train if args.command == "train" else cmd_predict
        return handler(args)
    except (ArchError, FormatError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
