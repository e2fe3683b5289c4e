import logging
import math

import numpy as np
import pytest
import torch

from gsaes.losses import LossConfig
from gsaes.model import ModelConfig, SceneAestheticRegressor, SceneBatch
from gsaes.synthetic import make_dataset
from gsaes.training import (
    AssemblyError,
    CheckpointError,
    DecoupledAdamW,
    NonFiniteLossError,
    TrainConfig,
    assemble_sample,
    cosine_lr,
    cosine_schedule,
    grad_check,
    load_checkpoint,
    make_checkpoint,
    make_split,
    model_from_checkpoint,
    predict,
    save_checkpoint,
    stable_seed,
    train,
)


def small_model_config(**overrides):
    base = dict(
        n_points=96,
        hidden_dim=16,
        heads=4,
        encoder_blocks=1,
        view_transformer_blocks=1,
        selector_blocks=1,
        grid_side=4,
        candidate_views=6,
        top_k=3,
        dropout=0.1,
    )
    base.update(overrides)
    return ModelConfig(**base)


def small_train_config(**overrides):
    base = dict(epochs=2, batch_size=4, seed=7, model=small_model_config())
    base.update(overrides)
    return TrainConfig(**base)


class TestMakeSplit:
    def test_ten_scenes_even_quintiles(self):
        ids = [f"s{i}" for i in range(10)]
        labels = {f"s{i}": i / 10 for i in range(10)}
        train_ids, test_ids = make_split(ids, labels, test_fraction=0.2, seed=3)
        assert len(train_ids) == 8 and len(test_ids) == 2
        # the two test scenes come from distinct quintile pairs
        quintile = {f"s{i}": i // 2 for i in range(10)}
        assert quintile[test_ids[0]] != quintile[test_ids[1]]

    def test_deterministic_per_seed(self):
        ids = [f"s{i}" for i in range(23)]
        labels = {s: hash(s) % 100 / 100 for s in ids}
        assert make_split(ids, labels, seed=11) == make_split(ids, labels, seed=11)
        assert make_split(ids, labels, seed=11) != make_split(ids, labels, seed=12)

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            n = int(rng.integers(5, 60))
            ids = [f"s{i}" for i in range(n)]
            labels = {s: float(rng.uniform()) for s in ids}
            train_ids, test_ids = make_split(ids, labels, seed=trial)
            assert set(train_ids) | set(test_ids) == set(ids)
            assert not (set(train_ids) & set(test_ids))

    def test_fallback_below_bin_count(self, caplog):
        ids = ["a", "b", "c"]
        labels = {"a": 0.1, "b": 0.5, "c": 0.9}
        with caplog.at_level(logging.WARNING):
            train_ids, test_ids = make_split(ids, labels, seed=0)
        assert "unstratified" in caplog.text
        assert len(train_ids) + len(test_ids) == 3

    def test_grouped_split(self):
        ids = [f"a{i}" for i in range(10)] + [f"b{i}" for i in range(10)]
        labels = {s: (i % 10) / 10 for i, s in enumerate(ids)}
        groups = {s: s[0] for s in ids}
        train_ids, test_ids = make_split(ids, labels, seed=1, groups=groups)
        assert sum(s.startswith("a") for s in test_ids) == 2
        assert sum(s.startswith("b") for s in test_ids) == 2

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            make_split(["a", "b"], [0.1, 0.2], test_fraction=1.5)


class TestAssembleSample:
    def test_subsampling_to_budget(self):
        cfg = small_model_config(n_points=64)
        scenes, scores = make_dataset(1, seed=0, n_points=300)
        (sid, scene), = scenes.items()
        sample = assemble_sample(scene, scores[sid], cfg, epoch_seed=0)
        assert sample.features.shape == (64, cfg.feature_dim)
        assert sample.point_mask.all()

    def test_padding_when_scene_small(self):
        cfg = small_model_config(n_points=128)
        scenes, scores = make_dataset(1, seed=1, n_points=50)
        (sid, scene), = scenes.items()
        sample = assemble_sample(scene, scores[sid], cfg, epoch_seed=0)
        assert int(sample.point_mask.sum()) == 50
        assert not sample.point_mask[50:].any()
        assert np.all(sample.features[50:] == 0)

    def test_epoch_reseeds_views_not_points(self):
        cfg = small_model_config(candidate_views=6)
        scenes, scores = make_dataset(1, seed=2, n_points=400)
        (sid, scene), = scenes.items()
        a = assemble_sample(scene, scores[sid], cfg, epoch_seed=0)
        b = assemble_sample(scene, scores[sid], cfg, epoch_seed=1)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.features, b.features)
        assert a.view_ids != b.view_ids  # different epoch seed, different draw

    def test_missing_label_names_scene(self):
        cfg = small_model_config()
        scenes, _ = make_dataset(1, seed=3, n_points=50)
        (sid, scene), = scenes.items()
        with pytest.raises(AssemblyError, match=sid):
            assemble_sample(scene, None, cfg, epoch_seed=0)

    def test_target_range_enforced(self):
        cfg = small_model_config()
        scenes, _ = make_dataset(1, seed=4, n_points=50)
        (sid, scene), = scenes.items()
        with pytest.raises(AssemblyError):
            assemble_sample(scene, 1.7, cfg, epoch_seed=0)


class TestSchedule:
    def test_starts_at_base_lr(self):
        assert cosine_lr(0, 100, 5e-5) == pytest.approx(5e-5)

    def test_final_step_below_millirate(self):
        assert cosine_lr(99, 100, 5e-5) <= 1e-3 * 5e-5

    def test_midpoint(self):
        assert cosine_schedule(50, 101) == pytest.approx(0.5)

    def test_single_step_schedule(self):
        assert cosine_schedule(0, 1) == 1.0

    def test_constant_schedule_option(self):
        scenes, scores = small_dataset(n=6)
        result = train(scenes, scores, small_train_config(epochs=2, schedule="constant"))
        lrs = {entry["lr"] for entry in result.log}
        assert lrs == {small_train_config().learning_rate}


class TestDecoupledAdamW:
    def test_zero_lr_still_decays_geometrically(self):
        p = torch.nn.Parameter(torch.tensor([2.0, -4.0]))
        opt = DecoupledAdamW([p], lr=0.0, weight_decay=0.01)
        previous = p.detach().clone()
        for _ in range(5):
            p.grad = torch.tensor([100.0, -100.0])  # must be ignored at lr 0
            opt.step(schedule=1.0)
            assert torch.allclose(p.detach(), previous * 0.99, atol=1e-9)
            previous = p.detach().clone()

    def test_gradient_applied_with_positive_lr(self):
        p = torch.nn.Parameter(torch.tensor([1.0]))
        opt = DecoupledAdamW([p], lr=0.1, weight_decay=0.0)
        p.grad = torch.tensor([1.0])
        opt.step()
        assert p.item() < 1.0

    def test_schedule_scales_decay(self):
        p = torch.nn.Parameter(torch.tensor([1.0]))
        opt = DecoupledAdamW([p], lr=0.0, weight_decay=0.5)
        p.grad = torch.zeros(1)
        opt.step(schedule=0.5)
        assert p.item() == pytest.approx(0.75)

    def test_state_round_trip(self):
        p = torch.nn.Parameter(torch.tensor([1.0]))
        opt = DecoupledAdamW([p], lr=0.1, weight_decay=0.0)
        p.grad = torch.tensor([0.3])
        opt.step()
        state = opt.state_dict()
        other = DecoupledAdamW([p], lr=0.1, weight_decay=0.0)
        other.load_state_dict(state)
        assert other.step_count == 1
        assert torch.equal(other.exp_avg[0], opt.exp_avg[0])


class TestGradClipping:
    def test_post_clip_norm_is_bounded(self):
        torch.manual_seed(0)
        model = torch.nn.Linear(4, 1)
        x = torch.randn(8, 4) * 100  # engineered to blow up the gradient norm
        loss = (model(x) ** 2).sum()
        loss.backward()
        before = math.sqrt(sum(float((p.grad ** 2).sum()) for p in model.parameters()))
        assert before > 1.0
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        after = math.sqrt(sum(float((p.grad ** 2).sum()) for p in model.parameters()))
        assert after == pytest.approx(1.0, abs=1e-5)


def small_dataset(n=12, seed=0):
    scenes, scores = make_dataset(n, seed=seed, n_points=120)
    return scenes, scores


class TestTrainLoop:
    def test_zero_epochs_returns_initialization(self):
        scenes, scores = small_dataset()
        config = small_train_config(epochs=0)
        result = train(scenes, scores, config)
        assert result.log == []
        torch.manual_seed(config.seed)
        reference = SceneAestheticRegressor(config.model)
        for name, tensor in reference.state_dict().items():
            assert torch.equal(result.checkpoint["state_dict"][name], tensor)

    def test_two_runs_identical(self):
        scenes, scores = small_dataset()
        config = small_train_config(epochs=2)
        first = train(scenes, scores, config)
        second = train(scenes, scores, config)
        for name, tensor in first.checkpoint["state_dict"].items():
            other = second.checkpoint["state_dict"][name]
            assert torch.allclose(tensor, other, atol=1e-6), name
        assert first.log == second.log

    def test_log_schema(self):
        scenes, scores = small_dataset()
        result = train(scenes, scores, small_train_config(epochs=1))
        entry = result.log[0]
        for key in ("epoch", "train_loss", "lr", "holdout_plcc", "holdout_srcc",
                    "holdout_krcc", "holdout_mae", "holdout_rmse"):
            assert key in entry

    def test_loss_decreases_over_training(self):
        scenes, scores = small_dataset(n=16, seed=5)
        result = train(scenes, scores, small_train_config(epochs=6))
        losses = [e["train_loss"] for e in result.log]
        assert losses[-1] < losses[0]

    def test_non_finite_loss_lists_scenes(self):
        scenes, scores = small_dataset(n=8)
        config = small_train_config(epochs=1, learning_rate=float("nan"))
        # a NaN learning rate poisons parameters after the first step; the
        # second batch must then abort with its scene ids
        with pytest.raises(NonFiniteLossError) as err:
            train(scenes, scores, config)
        assert err.value.scene_ids

    def test_mixed_precision_opt_in(self):
        scenes, scores = small_dataset(n=8, seed=9)
        config = small_train_config(epochs=1, mixed_precision=True)
        result = train(scenes, scores, config)
        assert np.isfinite(result.log[0]["train_loss"])


class TestCheckpoints:
    def test_round_trip_bit_identical_predictions(self, tmp_path):
        scenes, scores = small_dataset()
        config = small_train_config(epochs=1)
        result = train(scenes, scores, config)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(result.checkpoint, path)
        restored = model_from_checkpoint(load_checkpoint(path))

        samples = [
            assemble_sample(scene, scores[sid], config.model, epoch_seed=0)
            for sid, scene in sorted(scenes.items())
        ]
        direct = model_from_checkpoint(result.checkpoint)
        a = predict(direct, samples)
        b = predict(restored, samples)
        assert np.array_equal(a, b)

    def test_seed_recorded(self):
        scenes, scores = small_dataset()
        config = small_train_config(epochs=0, seed=13)
        result = train(scenes, scores, config)
        assert result.checkpoint["seed"] == 13

    def test_config_mismatch_rejected(self):
        torch.manual_seed(0)
        config = small_train_config()
        model = SceneAestheticRegressor(config.model)
        ckpt = make_checkpoint(model, None, config, epoch=0)
        ckpt["model_config"]["hidden_dim"] = 24  # stale shape
        with pytest.raises(CheckpointError):
            model_from_checkpoint(ckpt)

    def test_unknown_format_version(self, tmp_path):
        torch.manual_seed(0)
        config = small_train_config()
        model = SceneAestheticRegressor(config.model)
        ckpt = make_checkpoint(model, None, config, epoch=0)
        ckpt["format_version"] = 99
        path = tmp_path / "bad.pt"
        save_checkpoint(ckpt, path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestGradCheck:
    def test_uniform_selection_tight_tolerance(self):
        # trimmed smooth path: selector bypassed, uniform weights, mean-only
        # scatter (no argmax kinks), no dropout
        torch.manual_seed(21)
        cfg = small_model_config(
            n_points=24, hidden_dim=8, encoder_blocks=1, view_transformer_blocks=0,
            selector_blocks=1, candidate_views=4, top_k=2,
            selection_mode="uniform", scatter_mode="mean", dropout=0.0,
        )
        scenes, scores = make_dataset(2, seed=6, n_points=40)
        samples = [assemble_sample(s, scores[sid], cfg, 0) for sid, s in scenes.items()]
        batch = SceneBatch.from_samples(samples)
        model = SceneAestheticRegressor(cfg)
        report = grad_check(model, batch, step=3e-5, tolerance=1e-5)
        assert report.passed, report.failures[:3]
        assert report.max_rel_error < 1e-5

    def test_null_perturbation_is_identical(self):
        torch.manual_seed(22)
        cfg = small_model_config(n_points=24, candidate_views=4, top_k=2)
        scenes, scores = make_dataset(2, seed=7, n_points=40)
        samples = [assemble_sample(s, scores[sid], cfg, 0) for sid, s in scenes.items()]
        batch = SceneBatch.from_samples(samples).to(dtype=torch.float64)
        model = SceneAestheticRegressor(cfg).double().eval()
        with torch.no_grad():
            first = model(batch)
            second = model(batch)
        assert torch.equal(first, second)


class TestStableSeed:
    def test_deterministic(self):
        assert stable_seed("a", 1) == stable_seed("a", 1)
        assert stable_seed("a", 1) != stable_seed("a", 2)
        assert 0 <= stable_seed("anything") < 2**32
