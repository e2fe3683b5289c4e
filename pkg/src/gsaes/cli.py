"""Command-line entry points wiring the modules into reproducible workflows.

Subcommands: ingest, annotate, split, train, eval, score, stats, ablate.
Runs are driven by a JSON config file; flags override file values, and the
effective config (with its hash) is written next to every output so any
command can be reproduced byte-for-byte.  Exit codes: 0 success, 1
validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .ablations import PRESETS, apply_preset
from .annotation import build_labels, dataset_statistics, read_annotation_csv
from .ingest import load_camera_manifest, parse_gaussian_ply
from .metrics import (
    aggregate_seed_runs,
    compute_metrics,
    format_mean_std,
    mae,
    rmse,
    trivial_predictor,
)
from .training import (
    TrainConfig,
    config_hash,
    load_checkpoint,
    make_split,
    model_from_checkpoint,
    predict,
    prepare_scene,
    sample_from_prepared,
    save_checkpoint,
    stable_seed,
    train,
)

OUTPUT_ROOT_ENV = "GSAES_OUTPUT_ROOT"
DEFAULT_SEEDS = (7, 13, 42)


class ValidationFailure(ValueError):
    """User-facing validation problem; maps to exit code 1."""


@dataclass
class RunConfig:
    """Everything one end-to-end run needs, serializable to a single file."""

    output_dir: str = "runs"
    scene_dir: str | None = None
    camera_manifest: str | None = None
    annotation_csv: str | None = None
    index: str | None = None
    labels: str | None = None
    label_variant: str = "attr8"
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    test_fraction: float = 0.2
    ablation: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.label_variant not in ("total", "attr8"):
            raise ValidationFailure(f"unknown label variant {self.label_variant!r}")
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)


def run_config_hash(config: RunConfig):
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _resolve(path):
    """Resolve a path against the output-root environment variable."""
    if path is None:
        return None
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _write_json(payload, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_run_config(args):
    if getattr(args, "config", None):
        payload = _read_json(_resolve(args.config))
        config = RunConfig(**payload)
    else:
        config = RunConfig()
    for name in (
        "output_dir",
        "scene_dir",
        "camera_manifest",
        "annotation_csv",
        "index",
        "labels",
        "label_variant",
        "test_fraction",
        "ablation",
    ):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "seeds", None):
        config.seeds = [int(s) for s in args.seeds]
    if getattr(args, "epochs", None) is not None:
        config.train = replace(config.train, epochs=args.epochs)
    return config


def _load_index(path):
    payload = _read_json(path)
    if "scenes" not in payload:
        raise ValidationFailure(f"{path} is not a scene index file")
    return payload


def _load_scenes(index, wanted=None):
    cameras = load_camera_manifest(index["camera_manifest"])
    scenes = {}
    for scene_id, entry in index["scenes"].items():
        if wanted is not None and scene_id not in wanted:
            continue
        with open(entry["ply"], "rb") as fh:
            scene = parse_gaussian_ply(fh, scene_id=scene_id)
        scene.cameras = cameras.get(scene_id, [])
        scenes[scene_id] = scene
    return scenes


def _label_values(labels_payload, variant):
    return {
        scene_id: float(entry[variant]) for scene_id, entry in labels_payload.items()
    }


# ----------------------------------------------------------------------
# subcommands


def cmd_ingest(args):
    scene_dir = _resolve(args.scene_dir)
    manifest_path = _resolve(args.camera_manifest)
    if not os.path.isdir(scene_dir):
        raise ValidationFailure(f"scene directory {scene_dir!r} does not exist")
    if not os.path.isfile(manifest_path):
        raise ValidationFailure(f"camera manifest {manifest_path!r} does not exist")
    cameras = load_camera_manifest(manifest_path)

    scenes = {}
    errors = {}
    for ply_path in sorted(glob.glob(os.path.join(scene_dir, "*.ply"))):
        scene_id = os.path.splitext(os.path.basename(ply_path))[0]
        try:
            with open(ply_path, "rb") as fh:
                scene = parse_gaussian_ply(fh, scene_id=scene_id)
            cam_count = len(cameras.get(scene_id, []))
            if cam_count == 0:
                raise ValidationFailure("no cameras in manifest for this scene")
            scenes[scene_id] = {
                "ply": os.path.abspath(ply_path),
                "primitive_count": len(scene),
                "camera_count": cam_count,
            }
        except (ValueError, OSError) as exc:
            errors[scene_id] = str(exc)
            print(f"ingest: scene {scene_id!r} rejected: {exc}", file=sys.stderr)

    if not scenes:
        raise ValidationFailure("no valid scenes found")
    payload = {
        "scenes": scenes,
        "errors": errors,
        "camera_manifest": os.path.abspath(manifest_path),
        "config_hash": hashlib.sha256(
            json.dumps(
                {"scene_dir": scene_dir, "camera_manifest": manifest_path},
                sort_keys=True,
            ).encode()
        ).hexdigest()[:16],
    }
    out = _write_json(payload, _resolve(args.output))
    print(f"ingest: {len(scenes)} scenes indexed, {len(errors)} rejected -> {out}")
    return 0


def _annotation_outputs(csv_path):
    views, row_errors = read_annotation_csv(csv_path)
    for err in row_errors:
        print(f"annotate: line {err.line}: {err.message}", file=sys.stderr)
    if not views:
        raise ValidationFailure("no valid annotation rows")
    labels = build_labels(views)
    stats = {
        "attr8": dataset_statistics(views, "attr8"),
        "total": dataset_statistics(views, "total"),
        "rejected_rows": [
            {"line": err.line, "message": err.message} for err in row_errors
        ],
        "config_hash": hashlib.sha256(
            json.dumps({"csv": os.path.abspath(csv_path)}).encode()
        ).hexdigest()[:16],
    }
    return labels, stats


def cmd_annotate(args):
    csv_path = _resolve(args.csv)
    labels, stats = _annotation_outputs(csv_path)
    out = _write_json(labels, _resolve(args.output))
    print(f"annotate: {len(labels)} scene labels -> {out}")
    if args.stats_output:
        stats_out = _write_json(stats, _resolve(args.stats_output))
        print(f"annotate: statistics -> {stats_out}")
    return 0


def cmd_stats(args):
    csv_path = _resolve(args.csv)
    _, stats = _annotation_outputs(csv_path)
    if args.output:
        out = _write_json(stats, _resolve(args.output))
        print(f"stats -> {out}")
    else:
        json.dump(stats, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def cmd_split(args):
    labels_payload = _read_json(_resolve(args.labels))
    variant = args.label_variant or "attr8"
    values = _label_values(labels_payload, variant)
    ids = sorted(values)
    groups = None
    if args.group_file:
        groups = _read_json(_resolve(args.group_file))
    train_ids, test_ids = make_split(
        ids, values, test_fraction=args.test_fraction, seed=args.seed, groups=groups
    )
    payload = {
        "seed": args.seed,
        "test_fraction": args.test_fraction,
        "label_variant": variant,
        "train": train_ids,
        "test": test_ids,
    }
    out = _write_json(payload, _resolve(args.output))
    print(f"split: {len(train_ids)} train / {len(test_ids)} test -> {out}")
    return 0


def _resolve_run_inputs(config: RunConfig):
    if config.index is None or config.labels is None:
        raise ValidationFailure("train/eval need --index and --labels (or a config)")
    index = _load_index(_resolve(config.index))
    labels_payload = _read_json(_resolve(config.labels))
    values = _label_values(labels_payload, config.label_variant)
    ids = sorted(set(index["scenes"]) & set(values))
    if len(ids) < 5:
        raise ValidationFailure(
            f"need at least 5 labelled scenes, found {len(ids)}"
        )
    return index, values, ids


def _effective_config(args):
    config = load_run_config(args)
    if config.ablation:
        config.train = apply_preset(config.train, config.ablation)
    return config


def _split_hash(train_ids, test_ids):
    payload = json.dumps({"train": train_ids, "test": test_ids}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _train_one_seed(config: RunConfig, seed: int, out_dir: str):
    """Train one seed and write its artifacts; isolated per-seed state.

    Loads its own copy of the scenes so seeds can run in separate processes
    with no shared mutable state.
    """
    index, values, ids = _resolve_run_inputs(config)
    scenes = _load_scenes(index, wanted=set(ids))
    train_config = replace(config.train, seed=int(seed))
    split = make_split(ids, values, config.test_fraction, seed=int(seed))
    result = train(scenes, values, train_config, split=split)
    save_checkpoint(result.checkpoint, os.path.join(out_dir, f"ckpt_final_seed{seed}.pt"))
    save_checkpoint(result.best_checkpoint, os.path.join(out_dir, f"ckpt_best_seed{seed}.pt"))
    log_path = os.path.join(out_dir, f"log_seed{seed}.ndjson")
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    _write_json(
        {
            "seed": int(seed),
            "config_hash": run_config_hash(config),
            "train_config_hash": config_hash(train_config),
            "split_hash": _split_hash(*split),
            "train": split[0],
            "test": split[1],
        },
        os.path.join(out_dir, f"split_seed{seed}.json"),
    )
    return result.log[-1] if result.log else {}


def cmd_train(args):
    config = _effective_config(args)
    _resolve_run_inputs(config)  # validate inputs before writing anything
    out_dir = _resolve(config.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    effective = asdict(config)
    effective["config_hash"] = run_config_hash(config)
    _write_json(effective, os.path.join(out_dir, "effective_config.json"))

    if getattr(args, "parallel_seeds", False) and len(config.seeds) > 1:
        import multiprocessing

        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(processes=min(len(config.seeds), os.cpu_count() or 1)) as pool:
            lasts = pool.starmap(
                _train_one_seed,
                [(config, int(seed), out_dir) for seed in config.seeds],
            )
    else:
        lasts = [_train_one_seed(config, int(seed), out_dir) for seed in config.seeds]

    for seed, last in zip(config.seeds, lasts):
        print(
            f"train: seed {seed} done; "
            f"holdout srcc {last.get('holdout_srcc', float('nan')):.4f}"
        )
    print(f"train: outputs in {out_dir}")
    return 0


def _eval_samples(scenes, values, ids, train_config, seed):
    samples = []
    for scene_id in ids:
        prepared = prepare_scene(scenes[scene_id], train_config.model)
        samples.append(
            sample_from_prepared(
                prepared,
                values[scene_id],
                train_config.model,
                view_seed=stable_seed("eval-views", scene_id, seed),
                view_sampling=train_config.view_sampling,
            )
        )
    return samples


def cmd_eval(args):
    config = _effective_config(args)
    index, values, ids = _resolve_run_inputs(config)
    out_dir = _resolve(config.output_dir)
    ckpt_dir = _resolve(args.checkpoint_dir) if args.checkpoint_dir else out_dir
    scenes = _load_scenes(index, wanted=set(ids))

    reports = []
    for seed in config.seeds:
        train_config = replace(config.train, seed=int(seed))
        expected_hash = config_hash(train_config)
        ckpt_path = os.path.join(ckpt_dir, f"ckpt_{args.which}_seed{seed}.pt")
        if not os.path.isfile(ckpt_path):
            raise ValidationFailure(f"checkpoint {ckpt_path!r} not found")
        checkpoint = load_checkpoint(ckpt_path)
        if checkpoint["config_hash"] != expected_hash:
            print(
                "eval: refusing checkpoint with mismatched config hash:\n"
                f"  checkpoint: {checkpoint['config_hash']}\n"
                f"  expected:   {expected_hash}",
                file=sys.stderr,
            )
            raise ValidationFailure("checkpoint/config hash mismatch")
        model = model_from_checkpoint(checkpoint)

        split = make_split(ids, values, config.test_fraction, seed=int(seed))
        train_ids, test_ids = split
        samples = _eval_samples(scenes, values, test_ids, train_config, int(seed))
        predictions = predict(model, samples)
        targets = np.array([values[sid] for sid in test_ids])
        report = compute_metrics(predictions, targets)

        train_targets = [values[sid] for sid in train_ids]
        trivial = {}
        for kind in ("mean", "median"):
            constant = trivial_predictor(train_targets, kind)
            constant_vec = np.full_like(targets, constant)
            trivial[kind] = {
                "constant": constant,
                "mae": mae(constant_vec, targets),
                "rmse": rmse(constant_vec, targets),
            }

        payload = report.as_dict()
        payload.update(
            seed=int(seed),
            split_hash=_split_hash(*split),
            config_hash=run_config_hash(config),
            train_config_hash=expected_hash,
            trivial=trivial,
        )
        _write_json(payload, os.path.join(out_dir, f"report_seed{seed}.json"))
        reports.append(report)
        print(
            f"eval: seed {seed}: plcc {report.plcc:.4f} srcc {report.srcc:.4f} "
            f"krcc {report.krcc:.4f} mae {report.mae:.4f} rmse {report.rmse:.4f}"
        )

    aggregate = aggregate_seed_runs(reports)
    summary = {
        name: {
            "mean": pair[0],
            "std": pair[1],
            "formatted": format_mean_std(pair),
        }
        for name, pair in aggregate.items()
    }
    _write_json(
        {
            "seeds": [int(s) for s in config.seeds],
            "config_hash": run_config_hash(config),
            "metrics": summary,
        },
        os.path.join(out_dir, "aggregate.json"),
    )
    for name, entry in summary.items():
        print(f"eval: {name} = {entry['formatted']}")
    return 0


def cmd_score(args):
    checkpoint = load_checkpoint(_resolve(args.checkpoint))
    model = model_from_checkpoint(checkpoint)
    train_config = TrainConfig(**checkpoint["train_config"])
    index = _load_index(_resolve(args.index))
    wanted = set(args.scenes) if args.scenes else None
    scenes = _load_scenes(index, wanted=wanted)
    if wanted:
        missing = wanted - set(scenes)
        if missing:
            raise ValidationFailure(f"scenes not in index: {sorted(missing)}")

    scores = {}
    for scene_id in sorted(scenes):
        prepared = prepare_scene(scenes[scene_id], train_config.model)
        sample = sample_from_prepared(
            prepared,
            None,
            train_config.model,
            view_seed=stable_seed("eval-views", scene_id, checkpoint["seed"]),
            view_sampling=train_config.view_sampling,
        )
        prediction = predict(model, [sample], clamp=True)
        scores[scene_id] = float(prediction[0])
    payload = {
        "config_hash": checkpoint["config_hash"],
        "seed": checkpoint["seed"],
        "scores": scores,
    }
    out = _write_json(payload, _resolve(args.output))
    print(f"score: {len(scores)} scenes -> {out}")
    return 0


def cmd_ablate(args):
    if args.list:
        for name in sorted(PRESETS):
            print(name)
        return 0
    if not args.preset:
        raise ValidationFailure("ablate: --preset is required (or --list)")
    if args.preset not in PRESETS:
        raise ValidationFailure(
            f"unknown preset {args.preset!r}; see `gsaes ablate --list`"
        )
    args.ablation = args.preset
    base_out = _resolve(args.output_dir) if args.output_dir else None
    config = load_run_config(args)
    args.output_dir = os.path.join(
        base_out or _resolve(config.output_dir), "ablations", args.preset
    )
    return cmd_train(args)


# ----------------------------------------------------------------------
# parser


def _add_run_arguments(parser):
    parser.add_argument("--config", help="run config JSON file")
    parser.add_argument("--index", help="scene index from `gsaes ingest`")
    parser.add_argument("--labels", help="label file from `gsaes annotate`")
    parser.add_argument("--output-dir", dest="output_dir", help="run output directory")
    parser.add_argument("--label-variant", dest="label_variant",
                        choices=("total", "attr8"))
    parser.add_argument("--seeds", nargs="+", type=int)
    parser.add_argument("--test-fraction", dest="test_fraction", type=float)
    parser.add_argument("--epochs", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gsaes",
        description="Scene-level aesthetic scoring of 3D Gaussian Splatting scenes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="index and validate a directory of PLY scenes")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--camera-manifest", required=True)
    p.add_argument("--output", default="index.json")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("annotate", help="aggregate view annotations into labels")
    p.add_argument("--csv", required=True)
    p.add_argument("--output", default="labels.json")
    p.add_argument("--stats-output", dest="stats_output", default="annotation_stats.json")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("stats", help="annotation statistics only")
    p.add_argument("--csv", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="stratified train/test split")
    p.add_argument("--labels", required=True)
    p.add_argument("--label-variant", dest="label_variant", default="attr8",
                   choices=("total", "attr8"))
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    p.add_argument("--group-file", dest="group_file",
                   help="optional JSON map scene_id -> source tag for per-source splits")
    p.add_argument("--output", default="split.json")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model per seed")
    _add_run_arguments(p)
    p.add_argument("--ablation", help="ablation preset name")
    p.add_argument("--parallel-seeds", dest="parallel_seeds", action="store_true",
                   help="run seeds in isolated worker processes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints with the full protocol")
    _add_run_arguments(p)
    p.add_argument("--ablation", help="ablation preset name")
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--which", choices=("final", "best"), default="best")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score scenes with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--scenes", nargs="*")
    p.add_argument("--output", default="scores.json")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="train a named ablation preset")
    _add_run_arguments(p)
    p.add_argument("--preset")
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (ValidationFailure, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
