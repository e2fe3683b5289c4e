import json
import os

import numpy as np
import pytest

from gsaes.ablations import PRESETS
from gsaes.annotation import ATTRIBUTES
from gsaes.cli import main
from gsaes.synthetic import (
    make_annotation_table,
    make_dataset,
    write_annotation_csv,
    write_scene_dir,
)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Scene directory, camera manifest, annotation CSV, and a run config."""
    root = tmp_path_factory.mktemp("cli")
    scenes, scores = make_dataset(8, seed=2, n_points=120)
    scene_dir, manifest = write_scene_dir(scenes, str(root / "scenes"))

    ids = sorted(scenes)
    rows = []
    for row in make_annotation_table(8, seed=3):
        index = int(row[0].split("_")[1])
        rows.append([ids[index % len(ids)]] + row[1:])
    csv_path = write_annotation_csv(rows, str(root / "annotations.csv"))

    run_config = {
        "output_dir": str(root / "run"),
        "index": str(root / "index.json"),
        "labels": str(root / "labels.json"),
        "label_variant": "attr8",
        "seeds": [7],
        "test_fraction": 0.25,
        "train": {
            "epochs": 1,
            "batch_size": 4,
            "model": {
                "n_points": 96, "hidden_dim": 16, "heads": 4, "encoder_blocks": 1,
                "view_transformer_blocks": 1, "selector_blocks": 1, "grid_side": 4,
                "candidate_views": 6, "top_k": 3,
            },
        },
    }
    config_path = root / "run.json"
    config_path.write_text(json.dumps(run_config))
    return {
        "root": root,
        "scene_dir": scene_dir,
        "manifest": manifest,
        "csv": csv_path,
        "config": str(config_path),
        "run_dir": str(root / "run"),
        "index": str(root / "index.json"),
        "labels": str(root / "labels.json"),
    }


def test_ingest_indexes_scenes(workspace):
    rc = main([
        "ingest",
        "--scene-dir", workspace["scene_dir"],
        "--camera-manifest", workspace["manifest"],
        "--output", workspace["index"],
    ])
    assert rc == 0
    index = json.loads(open(workspace["index"]).read())
    assert len(index["scenes"]) == 8
    assert index["errors"] == {}
    entry = next(iter(index["scenes"].values()))
    assert {"ply", "primitive_count", "camera_count"} <= set(entry)


def test_ingest_isolates_corrupt_scene(workspace, tmp_path):
    import shutil

    broken_dir = tmp_path / "scenes"
    shutil.copytree(workspace["scene_dir"], broken_dir)
    bad = sorted(broken_dir.glob("*.ply"))[0]
    bad.write_bytes(b"not a ply at all")
    out = tmp_path / "index.json"
    rc = main([
        "ingest",
        "--scene-dir", str(broken_dir),
        "--camera-manifest", workspace["manifest"],
        "--output", str(out),
    ])
    assert rc == 0
    index = json.loads(out.read_text())
    assert len(index["scenes"]) == 7
    assert len(index["errors"]) == 1


def test_ingest_empty_directory_fails(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    manifest = tmp_path / "cams.jsonl"
    manifest.write_text("")
    rc = main([
        "ingest", "--scene-dir", str(empty),
        "--camera-manifest", str(manifest),
        "--output", str(tmp_path / "index.json"),
    ])
    assert rc == 1


def test_annotate_writes_labels_and_stats(workspace):
    stats_path = str(workspace["root"] / "stats.json")
    rc = main([
        "annotate", "--csv", workspace["csv"],
        "--output", workspace["labels"],
        "--stats-output", stats_path,
    ])
    assert rc == 0
    labels = json.loads(open(workspace["labels"]).read())
    assert len(labels) == 8
    for entry in labels.values():
        assert set(entry) == {"total", "attr8", "view_count"}
    stats = json.loads(open(stats_path).read())
    assert stats["attr8"]["scene_count"] == 8
    assert "gaps" in stats["attr8"] and "gaps" in stats["total"]


def test_annotate_rejects_malformed_rows(workspace, tmp_path, capsys):
    content = open(workspace["csv"]).read().splitlines()
    content.insert(2, content[1] + ",99")  # 9-attribute row
    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("\n".join(content))
    out = tmp_path / "labels.json"
    rc = main(["annotate", "--csv", str(bad_csv), "--output", str(out),
               "--stats-output", str(tmp_path / "s.json")])
    assert rc == 0
    captured = capsys.readouterr()
    assert "line 3" in captured.err


def test_split_command(workspace):
    out = str(workspace["root"] / "split.json")
    rc = main(["split", "--labels", workspace["labels"], "--seed", "7",
               "--output", out])
    assert rc == 0
    split = json.loads(open(out).read())
    assert not (set(split["train"]) & set(split["test"]))
    assert len(split["train"]) + len(split["test"]) == 8


def test_train_eval_score_round_trip(workspace):
    rc = main(["train", "--config", workspace["config"]])
    assert rc == 0
    run_dir = workspace["run_dir"]
    assert os.path.isfile(os.path.join(run_dir, "ckpt_best_seed7.pt"))
    assert os.path.isfile(os.path.join(run_dir, "effective_config.json"))
    log_lines = open(os.path.join(run_dir, "log_seed7.ndjson")).read().splitlines()
    assert len(log_lines) == 1
    entry = json.loads(log_lines[0])
    assert {"epoch", "train_loss", "lr", "holdout_srcc"} <= set(entry)

    rc = main(["eval", "--config", workspace["config"]])
    assert rc == 0
    report = json.loads(open(os.path.join(run_dir, "report_seed7.json")).read())
    assert {"plcc", "srcc", "krcc", "mae", "rmse", "seed", "split_hash",
            "config_hash", "trivial"} <= set(report)
    assert report["trivial"]["mean"]["rmse"] > 0
    aggregate = json.loads(open(os.path.join(run_dir, "aggregate.json")).read())
    assert set(aggregate["metrics"]) == {"plcc", "srcc", "krcc", "mae", "rmse"}

    scores_path = os.path.join(run_dir, "scores.json")
    rc = main(["score", "--checkpoint", os.path.join(run_dir, "ckpt_best_seed7.pt"),
               "--index", workspace["index"], "--output", scores_path])
    assert rc == 0
    scores = json.loads(open(scores_path).read())
    assert len(scores["scores"]) == 8
    assert all(0.0 <= v <= 1.0 for v in scores["scores"].values())


def test_score_matches_eval_predictions(workspace):
    """Scoring a held-out scene reproduces the eval-time forward path."""
    import torch

    from gsaes.cli import RunConfig, _load_index, _load_scenes
    from gsaes.training import (
        load_checkpoint, make_split, model_from_checkpoint, predict,
        prepare_scene, sample_from_prepared, stable_seed, TrainConfig,
    )

    run_dir = workspace["run_dir"]
    ckpt = load_checkpoint(os.path.join(run_dir, "ckpt_best_seed7.pt"))
    model = model_from_checkpoint(ckpt)
    train_config = TrainConfig(**ckpt["train_config"])
    index = _load_index(workspace["index"])
    scenes = _load_scenes(index)
    labels = json.loads(open(workspace["labels"]).read())

    scores = json.loads(open(os.path.join(run_dir, "scores.json")).read())["scores"]
    for sid in sorted(scenes):
        prepared = prepare_scene(scenes[sid], train_config.model)
        sample = sample_from_prepared(
            prepared, None, train_config.model,
            view_seed=stable_seed("eval-views", sid, ckpt["seed"]),
        )
        direct = float(np.clip(predict(model, [sample])[0], 0.0, 1.0))
        assert scores[sid] == pytest.approx(direct, abs=1e-7)


def test_eval_refuses_mismatched_checkpoint(workspace, tmp_path, capsys):
    altered = json.loads(open(workspace["config"]).read())
    altered["train"]["learning_rate"] = 1e-3  # different train config, same ckpts
    altered_path = tmp_path / "run2.json"
    altered_path.write_text(json.dumps(altered))
    rc = main(["eval", "--config", str(altered_path),
               "--checkpoint-dir", workspace["run_dir"]])
    assert rc == 1
    err = capsys.readouterr().err
    assert "hash" in err


def test_ablate_preset_runs(workspace):
    rc = main(["ablate", "--config", workspace["config"],
               "--preset", "E1_no_projection"])
    assert rc == 0
    out_dir = os.path.join(workspace["run_dir"], "ablations", "E1_no_projection")
    effective = json.loads(open(os.path.join(out_dir, "effective_config.json")).read())
    assert effective["train"]["model"]["selection_mode"] == "none_projection"
    assert effective["ablation"] == "E1_no_projection"


def test_ablate_list(capsys):
    rc = main(["ablate", "--list"])
    assert rc == 0
    listed = capsys.readouterr().out.split()
    assert set(listed) == set(PRESETS)


def test_ablate_unknown_preset():
    assert main(["ablate", "--preset", "Z9_nonsense"]) == 1


def test_stats_command(workspace, tmp_path):
    out = tmp_path / "stats.json"
    rc = main(["stats", "--csv", workspace["csv"], "--output", str(out)])
    assert rc == 0
    stats = json.loads(out.read_text())
    assert stats["attr8"]["view_count"] > 0


def test_output_root_env(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("GSAES_OUTPUT_ROOT", str(tmp_path))
    rc = main(["stats", "--csv", workspace["csv"], "--output", "nested/st.json"])
    assert rc == 0
    assert (tmp_path / "nested" / "st.json").is_file()


def test_train_rerun_reproduces_outputs(workspace, tmp_path):
    """Identical inputs produce identical artifacts (single-threaded mode)."""
    payload = json.loads(open(workspace["config"]).read())
    for name, out_dir in (("a", tmp_path / "run_a"), ("b", tmp_path / "run_b")):
        payload["output_dir"] = str(out_dir)
        config_path = tmp_path / f"run_{name}.json"
        config_path.write_text(json.dumps(payload))
        assert main(["train", "--config", str(config_path)]) == 0
    log_a = open(tmp_path / "run_a" / "log_seed7.ndjson").read()
    log_b = open(tmp_path / "run_b" / "log_seed7.ndjson").read()
    assert log_a == log_b
