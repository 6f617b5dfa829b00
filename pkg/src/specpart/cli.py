"""Command-line workflow: synth, split, train, eval, predict-map, gradcheck, inspect.

Every command is deterministic given its flags; all randomness flows from
explicit seeds, never the clock. Exit codes: 0 success, 1 failed check
(gradient check over tolerance, numerical blow-up), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import data, engine, synth, training
from .errors import NumericError, SpecPartError
from .model import (
    ModelConfig,
    build_model,
    load_checkpoint,
    parameters,
    save_checkpoint,
)
from .presets import Preset, get_preset
from .training import TrainConfig, evaluate, grad_check, summarize_runs, train

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

GRADCHECK_TOLERANCE = 1e-4


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise SpecPartError(f"{what} not found: {p}")
    return p


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise SpecPartError(f"--fractions needs three comma-separated values, got {text!r}")
    return parts[0], parts[1], parts[2]


def _parse_seeds(args) -> list[int]:
    if getattr(args, "seeds", None):
        return [int(s) for s in args.seeds.split(",")]
    return [int(args.seed)]


def _load_scene(args, preset: Preset):
    """Cube (normalized) and labels (preset keep-list applied)."""
    cube_path = _require_file(args.dataset_cube, "dataset cube")
    labels_path = _require_file(args.labels, "label map")
    cube = data.load_cube(cube_path, name=cube_path.stem)
    labels = data.load_labels(labels_path)
    if preset.expected_bands is not None and cube.bands != preset.expected_bands:
        raise SpecPartError(
            f"preset {preset.name} expects {preset.expected_bands} bands, "
            f"cube has {cube.bands}"
        )
    if preset.keep_classes is not None:
        labels = data.filter_classes(labels, preset.keep_classes)
    if args.normalize == "global":
        cube = data.normalize_minmax(cube)
    elif args.normalize == "per-band":
        cube = data.normalize_minmax(cube, per_band=True)
    return cube, labels


def _parse_conv_stack(text: str) -> tuple:
    """Layers as out:H:W:R:stride:pad entries, comma separated."""
    stack = []
    for layer in text.split(","):
        fields = layer.split(":")
        if len(fields) != 6:
            raise SpecPartError(
                f"--conv-stack layer {layer!r} needs out:H:W:R:stride:pad"
            )
        stack.append(tuple(int(f) for f in fields))
    return tuple(stack)


def _model_config(args, preset: Preset) -> ModelConfig:
    config = ModelConfig(
        patch_size=args.patch_size or preset.patch_size,
        num_segments=args.segments or preset.num_segments,
        pointwise_mode="per-band" if args.pointwise == "per-band" else "shared",
    )
    if args.conv_stack:
        config.conv_stack = _parse_conv_stack(args.conv_stack)
    return config


def _train_config(args, preset: Preset, seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size or preset.batch_size,
        epochs=args.epochs or preset.epochs,
        lr=args.lr or preset.lr,
        shuffle_seed=seed,
        dropout_seed=seed,
        eval_every=args.eval_every,
        workers=args.workers,
        keep_best_val=args.keep_best_val,
    )


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cube, labels = synth.toy_scene(
        height=args.height, width=args.width, bands=args.bands,
        n_classes=args.classes, seed=args.seed,
    )
    data.save_cube(cube, out / "toy.hsic")
    data.save_labels(labels, out / "toy.hsil")
    print(f"wrote {out / 'toy.hsic'} ({cube.height}x{cube.width}x{cube.bands})")
    print(f"wrote {out / 'toy.hsil'} ({len(labels.class_names)} classes)")
    return EXIT_OK


def cmd_split(args) -> int:
    preset = get_preset(args.preset)
    labels = data.load_labels(_require_file(args.labels, "label map"))
    if preset.keep_classes is not None:
        labels = data.filter_classes(labels, preset.keep_classes)
    fractions = _parse_fractions(args.fractions) if args.fractions else preset.fractions
    split = data.stratified_split(labels, fractions, int(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "split.csv"
    data.write_split_csv(split, labels, path)
    print(f"wrote {path}")
    for cid, name in enumerate(labels.class_names, start=1):
        counts = [
            int(np.sum((split.roles == r) & (labels.labels == cid))) for r in (1, 2, 3)
        ]
        print(f"  class {cid:2d} {name:30s} train/val/test = {counts[0]}/{counts[1]}/{counts[2]}")
    return EXIT_OK


def cmd_train(args) -> int:
    preset = get_preset(args.preset)
    cube, labels = _load_scene(args, preset)
    split = data.read_split_csv(_require_file(args.split, "split file"), labels)
    seed = int(args.seed)
    config = _model_config(args, preset)
    net = build_model(config, cube.bands, len(labels.class_names), seed=seed)
    train_set = data.build_samples(cube, labels, split, data.ROLE_TRAIN, config.patch_size)
    val_set = data.build_samples(cube, labels, split, data.ROLE_VAL, config.patch_size)
    test_set = data.build_samples(cube, labels, split, data.ROLE_TEST, config.patch_size)

    cfg = _train_config(args, preset, seed)
    net, history = train(net, train_set, val_set, cfg, test_set=test_set or None)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.spc3"
    save_checkpoint(net, ckpt)
    training.write_history_csv(history, out / "history.csv")
    last = history[-1]
    print(f"wrote {ckpt} and {out / 'history.csv'}")
    print(
        f"epoch {last['epoch']}: train_loss={last['train_loss']:.4f} "
        f"train_acc={last['train_acc']:.4f} val_acc={last['val_acc']}"
    )
    return EXIT_OK


def _print_metrics_table(class_names: list[str], runs: list[training.Metrics]) -> None:
    per_class = np.array([m.per_class_acc for m in runs])
    print(f"{'class':32s}  accuracy")
    for cid, name in enumerate(class_names):
        accs = per_class[:, cid]
        print(f"{name:32s}  {np.nanmean(accs) * 100:6.2f}")
    agg = summarize_runs(runs)
    print(f"{'OA':32s}  {agg['oa_mean'] * 100:6.2f} +/- {agg['oa_spread'] * 100:.2f}")
    print(f"{'AA':32s}  {agg['aa_mean'] * 100:6.2f} +/- {agg['aa_spread'] * 100:.2f}")


def _write_metrics_csv(path, class_names: list[str], runs: list[training.Metrics]) -> None:
    per_class = np.array([m.per_class_acc for m in runs])
    agg = summarize_runs(runs)
    with open(path, "w") as fh:
        fh.write("row,accuracy\n")
        for cid, name in enumerate(class_names):
            fh.write(f"{name},{repr(float(np.nanmean(per_class[:, cid])))}\n")
        fh.write(f"OA,{repr(agg['oa_mean'])}\n")
        fh.write(f"AA,{repr(agg['aa_mean'])}\n")


def cmd_eval(args) -> int:
    preset = get_preset(args.preset)
    cube, labels = _load_scene(args, preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs: list[training.Metrics] = []

    if args.seeds:
        # Full protocol: per seed, re-split, re-train, evaluate on that test set.
        seeds = _parse_seeds(args)
        fractions = _parse_fractions(args.fractions) if args.fractions else preset.fractions
        for seed in seeds:
            split = data.stratified_split(labels, fractions, seed)
            config = _model_config(args, preset)
            net = build_model(config, cube.bands, len(labels.class_names), seed=seed)
            train_set = data.build_samples(cube, labels, split, data.ROLE_TRAIN, config.patch_size)
            val_set = data.build_samples(cube, labels, split, data.ROLE_VAL, config.patch_size)
            test_set = data.build_samples(cube, labels, split, data.ROLE_TEST, config.patch_size)
            net, _ = train(net, train_set, val_set, _train_config(args, preset, seed))
            metrics = evaluate(net, test_set)
            save_checkpoint(net, out / f"checkpoint_seed{seed}.spc3")
            runs.append(metrics)
            print(f"seed {seed}: OA={metrics.oa:.4f} AA={metrics.aa:.4f}")
    else:
        if not args.checkpoint:
            raise SpecPartError("eval needs --checkpoint (or --seeds for full runs)")
        split = data.read_split_csv(_require_file(args.split, "split file"), labels)
        for ckpt in args.checkpoint.split(","):
            net = load_checkpoint(_require_file(ckpt, "checkpoint"))
            test_set = data.build_samples(
                cube, labels, split, data.ROLE_TEST, net.config.patch_size
            )
            runs.append(evaluate(net, test_set))

    _print_metrics_table(labels.class_names, runs)
    _write_metrics_csv(out / "metrics.csv", labels.class_names, runs)
    print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_predict_map(args) -> int:
    net = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    cube = data.load_cube(_require_file(args.dataset_cube, "dataset cube"))
    if args.normalize == "global":
        cube = data.normalize_minmax(cube)
    elif args.normalize == "per-band":
        cube = data.normalize_minmax(cube, per_band=True)
    schedule = engine.ScheduleMode(mode=args.schedule, workers=args.workers)

    if args.palette:
        raw = json.loads(Path(args.palette).read_text())
        palette = {int(k): tuple(v) for k, v in raw.items()}
    else:
        palette = engine.default_palette(net.n_classes)

    started = time.perf_counter()
    label_map, max_probs = engine.predict_map(net, cube, schedule, return_probs=True)
    elapsed = time.perf_counter() - started

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    map_path = out / "map.ppm"
    engine.render_map(label_map, palette, map_path)
    print(f"wrote {map_path} ({cube.width}x{cube.height}, {args.schedule}, "
          f"{args.workers} workers, {elapsed:.2f}s)")
    if args.probs_csv:
        engine.write_prediction_csv(label_map, max_probs, args.probs_csv)
        print(f"wrote {args.probs_csv}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = synth.toy_model_config(patch_size=3)
    net = build_model(config, n_bands=args.bands, n_classes=3, seed=int(args.seed))
    rng = np.random.default_rng(int(args.seed))
    patch = rng.random((config.patch_size, config.patch_size, args.bands))
    corrupt = "fc2.biases" if args.inject_fault else None
    err, worst = grad_check(
        net,
        (patch, 1),
        epsilon=args.epsilon,
        max_coords=args.max_coords,
        seed=int(args.seed),
        corrupt_param=corrupt,
    )
    status = "OK" if err <= GRADCHECK_TOLERANCE else "FAIL"
    print(f"gradcheck {status}: max relative error {err:.3e} at {worst} "
          f"(tolerance {GRADCHECK_TOLERANCE:.0e})")
    return EXIT_OK if err <= GRADCHECK_TOLERANCE else EXIT_CHECK_FAILED


def cmd_inspect(args) -> int:
    for path in args.paths:
        p = _require_file(path, "file")
        with open(p, "rb") as fh:
            magic = fh.read(4)
        if magic == data.HSIC_MAGIC:
            cube = data.load_cube(p)
            print(f"{p}: HSIC cube {cube.height}x{cube.width}, {cube.bands} bands")
        elif magic == data.HSIL_MAGIC:
            labels = data.load_labels(p)
            hist = {
                cid: int(np.sum(labels.labels == cid))
                for cid in range(1, len(labels.class_names) + 1)
            }
            print(f"{p}: HSIL labels {labels.height}x{labels.width}, "
                  f"{len(labels.class_names)} classes, counts {hist}")
        elif magic == b"SPC3":
            net = load_checkpoint(p)
            n_params = sum(arr.size for _, arr in parameters(net))
            print(f"{p}: checkpoint, {net.n_bands} bands, {net.n_classes} classes, "
                  f"{n_params} parameters")
        else:
            raise SpecPartError(f"unrecognized file magic {magic!r} in {p}")
    return EXIT_OK


def _add_common_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--preset", default="custom", help="indian_pines | salinas | custom")
    p.add_argument("--pointwise", choices=["shared", "per-band"], default="shared")
    p.add_argument("--patch-size", type=int, default=None)
    p.add_argument("--segments", type=int, default=None)
    p.add_argument("--conv-stack", default=None,
                   help="override layers as out:H:W:R:stride:pad, comma separated")
    p.add_argument("--normalize", choices=["global", "per-band", "none"], default="global")


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--keep-best-val", action="store_true",
                   help="restore the best-validation-accuracy parameters at the end")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specpart",
        description="Spectral-partitioning 3D CNN for hyperspectral pixel classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic toy scene (HSIC + HSIL)")
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--bands", type=int, default=12)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="stratified train/val/test split to CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--preset", default="custom")
    p.add_argument("--fractions", default=None, help="e.g. 0.2,0.05,0.75")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model from a split")
    p.add_argument("--dataset-cube", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_common_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints or run the full seeded protocol")
    p.add_argument("--dataset-cube", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--checkpoint", default=None, help="one or more paths, comma separated")
    p.add_argument("--split", default=None)
    p.add_argument("--seeds", default=None, help="e.g. 1,2,3,4,5 to train+eval per seed")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--runs", type=int, default=None, help="informational; seeds drive runs")
    p.add_argument("--fractions", default=None)
    p.add_argument("--out", required=True)
    _add_common_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict-map", help="classify a whole scene and render a PPM map")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset-cube", required=True)
    p.add_argument("--schedule", choices=list(engine.MODES), default="sequential")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--palette", default=None, help="JSON file {class_id: [r, g, b]}")
    p.add_argument("--probs-csv", default=None)
    p.add_argument("--normalize", choices=["global", "per-band", "none"], default="global")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_map)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--bands", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--max-coords", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt one gradient tensor; the check must then fail")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="print header info for HSIC/HSIL/checkpoint files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (SpecPartError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
