"""Command-line surface tying the pipeline together.

Every run writes ``run_manifest.json`` into the output directory with the
effective configuration, seed, and package version, so any artifact can be
regenerated. Exit codes: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import (
    FeatureMatrix,
    ModelKind,
    cns19_features,
    cumul_features,
    load_model,
    predict_proba,
    save_model,
    train,
)
from .defense import (
    NoiseMechanism,
    ObfuscationParams,
    aggregate_metrics,
    format_tradeoff_row,
    obfuscate_dataset,
    wire_dataset,
)
from .errors import ValidationError
from .evaluate import (
    EnsembleWeights,
    closed_world_report,
    ensemble_combine,
    monitored_score,
    normalize_weights,
    open_world_report,
)
from .fileio import (
    ExportConfig,
    export_tensors,
    import_probabilities,
    obfuscation_extras,
    read_dataset,
    render_xy_svg,
    write_dataset,
    write_metrics_csv,
    write_prob_file,
)
from .preprocess import (
    DirectionFilter,
    Scaler,
    VectorFormat,
    encode_trace,
    fit_minmax,
    split_folds,
    to_numeric,
    direction_filter,
)
from .synthgen import GenConfig, generate_dataset
from .traces import dataset_stats


def _write_run_manifest(out_dir: Path, command: str, config: dict, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "argv": sys.argv[1:],
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _histogram_dict(h) -> dict:
    return {"bin_edges": list(h.bin_edges), "bin_mass": list(h.bin_mass)}


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return (parts[0], parts[1], parts[2])


def cmd_generate(args, cfg: dict) -> int:
    gen = GenConfig(
        num_classes=cfg["classes"],
        traces_per_class=cfg["traces_per_class"],
        category_ratios=cfg["ratios"],
        num_voices=cfg["num_voices"],
        noise_level=cfg["noise_level"],
        seed=args.seed,
    )
    dataset = generate_dataset(gen, epochs=cfg["epochs"], monitored=not cfg["unmonitored"])
    out = Path(args.out) / f"{cfg['name']}.jsonl"
    write_dataset(dataset, out)
    print(f"wrote {len(dataset)} traces to {out}")
    return 0


def cmd_stats(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"])
    stats = dataset_stats(dataset, cfg["threshold_ms"])
    doc = {
        "packet_size_hist_in": _histogram_dict(stats.packet_size_hist_in),
        "packet_size_hist_out": _histogram_dict(stats.packet_size_hist_out),
        "interarrival_hist_burst": _histogram_dict(stats.interarrival_hist_burst),
        "interarrival_hist_gap": _histogram_dict(stats.interarrival_hist_gap),
        "max_abs_size": stats.max_abs_size,
        "burst_gap_threshold_ms": stats.burst_gap_threshold_ms,
    }
    out = Path(args.out) / "stats.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote {out}")
    return 0


def cmd_preprocess(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"])
    plan = split_folds(dataset, cfg["folds"], args.seed)
    doc = {
        "fold_count": plan.fold_count,
        "seed": plan.seed,
        "folds": [
            {"train": list(f.train), "validation": list(f.validation), "test": list(f.test)}
            for f in plan.folds
        ],
    }
    out = Path(args.out) / "splits.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(f"wrote {out}")
    return 0


def cmd_export_tensors(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"])
    scaler = None
    if cfg["scaler"] is not None:
        lo, hi = (float(v) for v in cfg["scaler"].split(","))
        scaler = Scaler(lo, hi)
    export_cfg = ExportConfig(
        fmt=VectorFormat(cfg["format"]),
        keep=DirectionFilter(cfg["direction"]),
        length=cfg["length"],
        normalize_before_pad=cfg["normalize_before_pad"],
    )
    out_dir = Path(args.out)
    tensor_path = out_dir / "tensors.bin"
    label_path = out_dir / "labels.bin"
    used = export_tensors(dataset, export_cfg, tensor_path, label_path, scaler)
    if used is not None:
        with open(out_dir / "scaler.json", "w", encoding="utf-8") as fh:
            json.dump({"min": used.min, "max": used.max}, fh)
    print(f"wrote {tensor_path} and {label_path}")
    return 0


_FEATURE_CHOICES = ("cumul", "cns19", "numeric", "binary")


def _feature_rows(dataset, indices, feature: str, cfg: dict, scaler: Scaler | None):
    rows = []
    keep = DirectionFilter(cfg["direction"])
    for i in indices:
        t = dataset.traces[i].trace
        if feature == "cumul":
            rows.append(cumul_features(direction_filter(t, keep), cfg["n_points"]))
        elif feature == "cns19":
            rows.append(cns19_features(direction_filter(t, keep), cfg["max_bursts"], cfg["size_bins"]))
        else:
            fmt = VectorFormat(feature)
            rows.append(encode_trace(t, fmt, cfg["length"], scaler, keep))
    return np.stack(rows)


def _load_splits(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)["folds"]


def cmd_attack_train(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"])
    folds = _load_splits(cfg["splits"])
    fold = folds[cfg["fold"]]
    train_idx = fold["train"] + fold["validation"]
    scaler = None
    if cfg["features"] == "numeric":
        scaler = fit_minmax(
            to_numeric(direction_filter(dataset.traces[i].trace, DirectionFilter(cfg["direction"])))
            for i in train_idx
        )
    X = _feature_rows(dataset, train_idx, cfg["features"], cfg, scaler)
    y = dataset.labels()[train_idx]
    fm = FeatureMatrix(X, y, feature_spec=cfg["features"])
    hyper = {"rounds": cfg["rounds"], "epochs": cfg["sgd_epochs"]}
    model = train(ModelKind(cfg["model"]), fm, hyper, num_classes=dataset.num_classes)
    out_dir = Path(args.out)
    model_path = out_dir / "model.json"
    save_model(model, model_path)
    feature_cfg = {
        "features": cfg["features"],
        "direction": cfg["direction"],
        "n_points": cfg["n_points"],
        "max_bursts": cfg["max_bursts"],
        "size_bins": cfg["size_bins"],
        "length": cfg["length"],
        "scaler": None if scaler is None else {"min": scaler.min, "max": scaler.max},
    }
    with open(out_dir / "features.json", "w", encoding="utf-8") as fh:
        json.dump(feature_cfg, fh)
    print(f"wrote {model_path}")
    return 0


def cmd_attack_predict(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"])
    model = load_model(cfg["model"])
    with open(Path(cfg["model"]).parent / "features.json", "r", encoding="utf-8") as fh:
        feature_cfg = json.load(fh)
    if cfg["splits"] is not None:
        fold = _load_splits(cfg["splits"])[cfg["fold"]]
        indices = fold["test"]
    else:
        indices = list(range(len(dataset)))
    scaler = None
    if feature_cfg["scaler"] is not None:
        scaler = Scaler(feature_cfg["scaler"]["min"], feature_cfg["scaler"]["max"])
    X = _feature_rows(dataset, indices, feature_cfg["features"], feature_cfg, scaler)
    probs = predict_proba(model, X)
    out_dir = Path(args.out)
    write_prob_file(probs, out_dir / "probs.csv")
    with open(out_dir / "indices.json", "w", encoding="utf-8") as fh:
        json.dump({"indices": list(indices)}, fh)
    labels = dataset.labels()[indices]
    report = closed_world_report(probs, labels, [dataset.traces[i].category for i in indices])
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    print(f"accuracy {report.accuracy:.4f} over {len(indices)} traces")
    return 0


def cmd_defend(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"])
    stats_source = read_dataset(cfg["stats_data"]) if cfg["stats_data"] else dataset
    stats = dataset_stats(stats_source, cfg["threshold_ms"])
    params = ObfuscationParams(
        epsilon=cfg["epsilon"],
        stats=stats,
        noise_mechanism=NoiseMechanism(cfg["mechanism"]),
        sensitivity=cfg["sensitivity"],
        min_wire_size=cfg["min_wire"],
        max_wire_size=cfg["max_wire"],
        seed=args.seed,
        adaptive_padding=not cfg["no_adaptive_padding"],
    )
    obfs, metrics = obfuscate_dataset(dataset, params)
    wire = wire_dataset(dataset, obfs, {"obfuscation": {"epsilon": cfg["epsilon"], "seed": args.seed}})
    out_dir = Path(args.out)
    write_dataset(wire, out_dir / "obfuscated.jsonl", extras=[obfuscation_extras(o) for o in obfs])
    write_metrics_csv(metrics, out_dir / "metrics.csv")
    agg = aggregate_metrics(metrics)
    agg_doc = {"epsilon": cfg["epsilon"], **agg, "row": format_tradeoff_row(agg)}
    with open(out_dir / "defense_report.json", "w", encoding="utf-8") as fh:
        json.dump(agg_doc, fh, indent=2)
    print(f"epsilon={cfg['epsilon']}: {agg_doc['row']}")
    return 0


def cmd_evaluate(args, cfg: dict) -> int:
    out_dir = Path(args.out)
    if cfg["plot_series"]:
        with open(cfg["plot_series"], "r", encoding="utf-8") as fh:
            series = json.load(fh)
        svg = render_xy_svg(series, "traces per class", "accuracy")
        plot_path = out_dir / cfg["plot_out"]
        plot_path.write_text(svg, encoding="utf-8")
        print(f"wrote {plot_path}")
        if not cfg["probs"]:
            return 0
    dataset = read_dataset(cfg["data"])
    if cfg["indices"]:
        with open(cfg["indices"], "r", encoding="utf-8") as fh:
            indices = json.load(fh)["indices"]
    else:
        indices = list(range(len(dataset)))
    probs = import_probabilities(cfg["probs"], len(indices), dataset.num_classes)
    labels = dataset.labels()[indices]
    report = closed_world_report(probs, labels, [dataset.traces[i].category for i in indices])
    if cfg["openworld"]:
        monitored_classes = sorted(
            {dataset.traces[i].command_id for i in indices if dataset.traces[i].monitored}
        )
        scores = monitored_score(probs, monitored_classes)
        flags = [dataset.traces[i].monitored for i in indices]
        ow = open_world_report(scores, flags, cfg["threshold"])
        report_doc = report.to_json_dict()
        report_doc["openworld"] = {"accuracy": ow[0], "tpr": ow[1], "fpr": ow[2]}
    else:
        report_doc = report.to_json_dict()
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report_doc, fh, indent=2)
    print(f"accuracy {report.accuracy:.4f}")
    return 0


def cmd_ensemble(args, cfg: dict) -> int:
    dataset = read_dataset(cfg["data"]) if cfg["data"] else None
    first = None
    matrices = []
    for path in cfg["probs"]:
        if first is None:
            # infer shape from the first file
            with open(path, "r", encoding="utf-8") as fh:
                header = fh.readline().rstrip("\n").split(",")
                rows = sum(1 for ln in fh if ln.strip())
            first = (rows, len(header) - 1)
        matrices.append(import_probabilities(path, first[0], first[1]))
    if cfg["weights"]:
        weights = normalize_weights([float(w) for w in cfg["weights"].split(",")])
    else:
        weights = EnsembleWeights(tuple(1.0 / len(matrices) for _ in matrices))
    preds, combined = ensemble_combine(matrices, weights)
    out_dir = Path(args.out)
    write_prob_file(combined, out_dir / "combined.csv")
    doc = {"weights": list(weights.weights)}
    if dataset is not None and cfg["indices"]:
        with open(cfg["indices"], "r", encoding="utf-8") as fh:
            indices = json.load(fh)["indices"]
        labels = dataset.labels()[indices]
        doc["accuracy"] = float(np.mean(preds == labels))
    with open(out_dir / "ensemble.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote {out_dir / 'combined.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcfp", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="global rng seed")
    parser.add_argument("--config", type=str, default=None, help="JSON file with option defaults")
    parser.add_argument("--out", type=str, default=".", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--traces-per-class", type=int, default=50)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--noise-level", type=float, default=1.0)
    p.add_argument("--num-voices", type=int, default=5)
    p.add_argument("--ratios", type=_ratios, default=(0.45, 0.21, 0.34))
    p.add_argument("--unmonitored", action="store_true")
    p.add_argument("--name", type=str, default="traces")

    p = sub.add_parser("stats", help="summary statistics of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold-ms", type=float, default=50.0)

    p = sub.add_parser("preprocess", help="build a cross-validation split plan")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("export-tensors", help="encode traces into a TensorFile")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=("numeric", "binary"), default="numeric")
    p.add_argument("--direction", choices=("both", "incoming", "outgoing"), default="both")
    p.add_argument("--length", type=int, default=475)
    p.add_argument("--scaler", type=str, default=None, help="min,max override")
    p.add_argument("--normalize-before-pad", action="store_true")

    p = sub.add_parser("attack", help="train or run the classical attacks")
    attack_sub = p.add_subparsers(dest="action", required=True)
    pt = attack_sub.add_parser("train")
    pt.add_argument("--data", required=True)
    pt.add_argument("--splits", required=True)
    pt.add_argument("--fold", type=int, default=0)
    pt.add_argument("--features", choices=_FEATURE_CHOICES, default="cumul")
    pt.add_argument("--model", choices=[k.value for k in ModelKind], default="linear_ovr")
    pt.add_argument("--direction", choices=("both", "incoming", "outgoing"), default="both")
    pt.add_argument("--rounds", type=int, default=200)
    pt.add_argument("--sgd-epochs", type=int, default=200)
    pt.add_argument("--n-points", type=int, default=100)
    pt.add_argument("--max-bursts", type=int, default=60)
    pt.add_argument("--size-bins", type=int, default=32)
    pt.add_argument("--length", type=int, default=475)
    pp = attack_sub.add_parser("predict")
    pp.add_argument("--data", required=True)
    pp.add_argument("--model", required=True)
    pp.add_argument("--splits", default=None)
    pp.add_argument("--fold", type=int, default=0)

    p = sub.add_parser("defend", help="obfuscate a dataset and account its costs")
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float, default=0.005)
    p.add_argument("--sensitivity", type=float, default=500.0)
    p.add_argument("--mechanism", choices=[m.value for m in NoiseMechanism], default="laplace_per_packet")
    p.add_argument("--min-wire", type=int, default=60)
    p.add_argument("--max-wire", type=int, default=1514)
    p.add_argument("--threshold-ms", type=float, default=50.0)
    p.add_argument("--stats-data", default=None, help="dataset to take distributions from")
    p.add_argument("--no-adaptive-padding", action="store_true")

    p = sub.add_parser("evaluate", help="score predictions against labels")
    p.add_argument("--data", default=None)
    p.add_argument("--probs", default=None)
    p.add_argument("--indices", default=None)
    p.add_argument("--openworld", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--plot-series", default=None, help="JSON series to plot")
    p.add_argument("--plot-out", default="accuracy_vs_size.svg")

    p = sub.add_parser("ensemble", help="combine probability files")
    p.add_argument("--probs", nargs="+", required=True)
    p.add_argument("--weights", type=str, default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--indices", default=None)
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "stats": cmd_stats,
    "preprocess": cmd_preprocess,
    "export-tensors": cmd_export_tensors,
    "defend": cmd_defend,
    "evaluate": cmd_evaluate,
    "ensemble": cmd_ensemble,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = {k.replace("-", "_"): v for k, v in vars(args).items()
           if k not in ("seed", "config", "out", "command", "action")}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        for key, value in overrides.items():
            cfg[key.replace("-", "_")] = value
    try:
        if args.command == "attack":
            handler = cmd_attack_train if args.action == "train" else cmd_attack_predict
        else:
            handler = _COMMANDS[args.command]
        _write_run_manifest(Path(args.out), args.command, cfg, args.seed)
        return handler(args, cfg)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
