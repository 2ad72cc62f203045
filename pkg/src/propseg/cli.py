"""Command line front end.

Subcommands: gendata, train, eval, predict, sweep. Exit codes: 0 on
success, 2 for configuration problems, 3 for data problems (missing or
malformed files, unwritable output paths).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .data import (MANIFEST_NAME, SCENE_CLASSES, SHAPE_CLASSES, Manifest,
                   SceneSpec, generate_scene, generate_shape, load_split,
                   read_manifest, read_ptsseg, write_manifest,
                   write_predictions, write_ptsseg)
from .errors import ConfigError, DataError
from .inference import predict_scene
from .metrics import evaluate_scene, format_report, mean_reports
from .nets import load_checkpoint, save_checkpoint
from .training import train, write_train_log

SWEEPABLE = ("beta", "alpha", "groups")


def _scene_name(index: int) -> str:
    return f"scene_{index:03d}.ptsseg"


def cmd_gendata(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenes == 0:
        print("warning: generating an empty dataset (0 scenes)",
              file=sys.stderr)

    names = []
    for i in range(args.scenes):
        rng = np.random.default_rng([args.seed, i])
        if args.mode == "shape":
            scene = generate_shape(rng)
        else:
            scene = generate_scene(SceneSpec(), rng)
        name = _scene_name(i)
        write_ptsseg(out / name, scene)
        names.append(name)

    # every fifth scene validates; small datasets still get one val scene
    val = [n for i, n in enumerate(names) if i % 5 == 4]
    if not val and len(names) >= 2:
        val = [names[-1]]
    train_names = [n for n in names if n not in val]
    classes = SHAPE_CLASSES if args.mode == "shape" else SCENE_CLASSES
    write_manifest(out / MANIFEST_NAME,
                   Manifest(classes, args.mode, train_names, val))
    print(f"wrote {len(names)} scenes and {MANIFEST_NAME} to {out}")
    return 0


def _load_dataset(data_dir, config: RunConfig):
    manifest_path = Path(data_dir) / MANIFEST_NAME
    manifest = read_manifest(manifest_path)
    config = config.with_overrides(mode=manifest.mode)
    train_scenes = load_split(manifest_path, manifest, "train")
    val_scenes = load_split(manifest_path, manifest, "val")
    return manifest, config, train_scenes, val_scenes


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.no_selfpred:
        config = config.with_overrides(beta=0.0)
    _, config, train_scenes, val_scenes = _load_dataset(args.data, config)
    if not train_scenes:
        raise DataError(f"{args.data}: manifest lists no training scenes")

    result = train(train_scenes, config, val_scenes=val_scenes)
    save_checkpoint(result.params, args.out)
    log_path = str(args.out) + ".log"
    write_train_log(log_path, result.log)
    last = result.log[-1]
    print(f"trained {config.epochs} epochs, final total loss "
          f"{last['total']:.6f}; checkpoint {args.out}, log {log_path}")
    return 0


def _evaluate(params, scenes, config: RunConfig, num_classes: int,
              oracle: bool) -> dict:
    if not scenes:
        raise DataError("no scenes to evaluate")
    reports = []
    for scene in scenes:
        if oracle:
            sem, ins = scene.sem_ids, scene.ins_ids
        else:
            pred = predict_scene(params, scene, config)
            sem, ins = pred.sem_ids, pred.ins_ids
        reports.append(evaluate_scene(sem, ins, scene.sem_ids, scene.ins_ids,
                                      num_classes))
    return mean_reports(reports)


def cmd_eval(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    if args.ckpt is None and not args.oracle:
        raise ConfigError("eval needs --ckpt (or --oracle)")
    _, config, train_scenes, val_scenes = _load_dataset(args.data, config)
    scenes = val_scenes if args.split == "val" else train_scenes
    if not scenes:
        raise DataError(f"{args.data}: no scenes in the {args.split} split")

    if args.oracle:
        params = None
        num_classes = len(scenes[0].class_names)
    else:
        params = load_checkpoint(args.ckpt)
        num_classes = params.arch.num_classes

    report = _evaluate(params, scenes, config, num_classes, args.oracle)
    text = format_report(report)
    report_path = args.report
    if report_path is None:
        base = args.ckpt if args.ckpt else Path(args.data) / "oracle"
        report_path = str(base) + ".report.tsv"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    print(f"report written to {report_path}")
    return 0


def cmd_predict(args) -> int:
    params = load_checkpoint(args.ckpt)
    config = load_config(args.config) if args.config else RunConfig()
    # the checkpoint knows whether it consumes scene or shape features
    mode = "shape" if params.arch.input_dim == 3 else "scene"
    config = config.with_overrides(mode=mode)
    scene = read_ptsseg(args.input)
    pred = predict_scene(params, scene, config)
    write_predictions(args.output, scene.coords, pred.sem_ids, pred.ins_ids)
    print(f"wrote {scene.num_points} predictions "
          f"({pred.num_instances} instances) to {args.output}")
    return 0


def _parse_sweep_values(param: str, raw: str):
    values = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            values.append(int(token) if param == "groups" else float(token))
        except ValueError:
            raise ConfigError(f"bad value for {param}: {token!r}") from None
    if not values:
        raise ConfigError("sweep needs at least one value")
    return values


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise ConfigError(
            f"cannot sweep {args.param!r}; choose one of {', '.join(SWEEPABLE)}")
    base = load_config(args.config)
    values = _parse_sweep_values(args.param, args.values)
    _, base, train_scenes, val_scenes = _load_dataset(args.data, base)
    if not train_scenes or not val_scenes:
        raise DataError(f"{args.data}: sweep needs train and val scenes")

    rows = []
    for value in values:
        config = base.with_overrides(**{args.param: value})
        result = train(train_scenes, config, val_scenes=())
        report = _evaluate(result.params, val_scenes, config,
                           result.params.arch.num_classes, False)
        rows.append((value, report["mPrec"], report["mIoU"]))

    lines = [f"{args.param}\tmPrec\tmIoU"]
    lines += [f"{value:g}\t{prec:.6f}\t{iou:.6f}" for value, prec, iou in rows]
    table = "\n".join(lines) + "\n"
    out_path = args.out if args.out else f"sweep_{args.param}.tsv"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    sys.stdout.write(table)
    print(f"series written to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propseg",
        description="Joint instance and semantic point cloud segmentation "
                    "trained with a label-propagation consistency task.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gendata", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scenes", type=int, required=True,
                   help="number of scenes to generate")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=("scene", "shape"), default="scene")
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("train", help="train a model from scratch")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--no-selfpred", action="store_true",
                   help="drop the propagation term (beta = 0)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", help="checkpoint to evaluate")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", help="config file (defaults apply if absent)")
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--oracle", action="store_true",
                   help="score ground truth against itself")
    p.add_argument("--report", help="report file path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="segment one scene file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="ptsseg scene file")
    p.add_argument("--output", required=True, help="predictions file to write")
    p.add_argument("--config", help="config file (defaults apply if absent)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="train/evaluate across parameter values")
    p.add_argument("--param", required=True, help="beta, alpha, or groups")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="series file (default sweep_<param>.tsv)")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
