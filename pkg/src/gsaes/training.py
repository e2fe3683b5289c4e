"""Dataset assembly, split construction, the optimization loop, and checkpointing.

Scene preprocessing is deterministic per scene (the subsampling seed derives
from the scene id), while candidate-view selection re-randomizes every epoch
during training and uses one fixed seed for evaluation.  The optimizer is
adaptive-moment with decoupled weight decay in the original formulation: the
cosine schedule multiplies both the gradient step and the decay term, so
decay survives a zero learning rate.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .geometry import fps_subsample, normalize_scene, select_candidate_views
from .losses import LossConfig, total_loss
from .metrics import compute_metrics
from .model import (
    ContractError,
    ModelConfig,
    SceneAestheticRegressor,
    SceneBatch,
    featurize_primitives,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
SPLIT_BINS = 5
VIEW_SAMPLING_MODES = ("binned", "random")


class AssemblyError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    def __init__(self, scene_ids):
        super().__init__(f"non-finite loss on batch of scenes {scene_ids}")
        self.scene_ids = list(scene_ids)


class CheckpointError(ValueError):
    pass


def stable_seed(*parts):
    """Platform-stable 32-bit seed from arbitrary hashable parts."""
    digest = hashlib.blake2s("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class TrainConfig:
    epochs: int = 16
    learning_rate: float = 5e-5
    weight_decay: float = 1e-4
    batch_size: int = 4
    schedule: str = "cosine"
    grad_clip_norm: float = 1.0
    seed: int = 7
    view_sampling: str = "binned"
    mixed_precision: bool = False
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.grad_clip_norm <= 0:
            raise ValueError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.view_sampling not in VIEW_SAMPLING_MODES:
            raise ValueError(f"unknown view_sampling {self.view_sampling!r}")
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)


@dataclass
class SceneSample:
    """One model-ready scene: padded primitive features, normalized positions,
    padded candidate cameras, and the scene-level target in [0, 1]."""

    scene_id: str
    features: np.ndarray       # (N, F)
    positions: np.ndarray      # (N, 3)
    point_mask: np.ndarray     # (N,) bool
    cam_rotations: np.ndarray  # (V, 3, 3)
    cam_translations: np.ndarray  # (V, 3)
    cam_intrinsics: np.ndarray    # (V, 4) normalized fx, fy, cx, cy
    view_mask: np.ndarray         # (V,) bool
    view_ids: list[str]
    target: float | None = None
    label_variant: str = "attr8"

    def __post_init__(self):
        if self.target is not None and not (0.0 <= self.target <= 1.0):
            raise AssemblyError(
                f"scene {self.scene_id!r}: target {self.target} outside [0, 1]"
            )


@dataclass
class PreparedScene:
    """Epoch-invariant preprocessing of one scene: normalization, subsampling,
    and featurization.  Only candidate-view selection varies per epoch."""

    scene_id: str
    features: np.ndarray
    positions: np.ndarray
    cameras: list  # normalized CameraView list


def prepare_scene(scene, model_config: ModelConfig):
    """Normalize, subsample, and featurize one scene (deterministic)."""
    centers, cameras, _ = normalize_scene(scene)
    n_take = min(model_config.n_points, len(centers))
    idx = fps_subsample(centers, n_take, seed=stable_seed("fps", scene.scene_id))
    colors = np.asarray(scene.colors)[idx]
    kwargs = {}
    if model_config.input_variant == "xyz_full_attrs":
        kwargs = {
            "opacity": None if scene.opacity is None else np.asarray(scene.opacity)[idx],
            "scales": None if scene.scales is None else np.asarray(scene.scales)[idx],
            "rotations": None
            if scene.rotations is None
            else np.asarray(scene.rotations)[idx],
        }
    features = featurize_primitives(
        centers[idx], colors, model_config.input_variant, **kwargs
    )
    return PreparedScene(
        scene_id=scene.scene_id,
        features=features,
        positions=centers[idx],
        cameras=cameras,
    )


def _select_views(cameras, v_max, seed, mode):
    if mode == "binned":
        return select_candidate_views(cameras, v_max=v_max, seed=seed)
    if len(cameras) <= v_max:
        return sorted(cameras, key=lambda c: c.view_id)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(cameras), size=v_max, replace=False)
    return sorted((cameras[i] for i in picks), key=lambda c: c.view_id)


def sample_from_prepared(
    prepared: PreparedScene,
    target,
    model_config: ModelConfig,
    view_seed=0,
    view_sampling="binned",
    label_variant="attr8",
):
    """Pad a prepared scene to model shape and attach this epoch's views."""
    n = model_config.n_points
    v = model_config.candidate_views
    valid = len(prepared.positions)

    features = np.zeros((n, model_config.feature_dim))
    positions = np.zeros((n, 3))
    point_mask = np.zeros(n, dtype=bool)
    features[:valid] = prepared.features
    positions[:valid] = prepared.positions
    point_mask[:valid] = True

    views = _select_views(prepared.cameras, v, view_seed, view_sampling)
    rotations = np.zeros((v, 3, 3))
    rotations[:, 0, 0] = rotations[:, 1, 1] = rotations[:, 2, 2] = 1.0
    translations = np.zeros((v, 3))
    intrinsics = np.zeros((v, 4))
    view_mask = np.zeros(v, dtype=bool)
    for i, cam in enumerate(views):
        rotations[i] = cam.rotation
        translations[i] = cam.translation
        intrinsics[i] = cam.normalized_intrinsics
        view_mask[i] = True

    return SceneSample(
        scene_id=prepared.scene_id,
        features=features,
        positions=positions,
        point_mask=point_mask,
        cam_rotations=rotations,
        cam_translations=translations,
        cam_intrinsics=intrinsics,
        view_mask=view_mask,
        view_ids=[cam.view_id for cam in views],
        target=target,
        label_variant=label_variant,
    )


def _label_value(label):
    if label is None:
        return None, "attr8"
    if hasattr(label, "value"):
        return float(label.value), getattr(label, "variant", "attr8")
    return float(label), "attr8"


def assemble_sample(scene, label, model_config: ModelConfig, epoch_seed=0,
                    view_sampling="binned"):
    """Full assembly path for one scene: normalize, FPS-subsample, featurize,
    pad, and select candidate views under ``epoch_seed``.

    The primitive subsampling seed derives from the scene id and is stable
    across epochs; only view selection re-randomizes.
    """
    target, variant = _label_value(label)
    if target is None:
        raise AssemblyError(f"scene {scene.scene_id!r}: missing label")
    prepared = prepare_scene(scene, model_config)
    view_seed = stable_seed("views", scene.scene_id, epoch_seed)
    return sample_from_prepared(
        prepared, target, model_config, view_seed, view_sampling, variant
    )


def make_split(scene_ids, labels, test_fraction=0.2, seed=0, groups=None):
    """Label-stratified deterministic train/test split.

    Scenes are ranked into quintile bins of the label and each bin is split
    80/20 (or per ``test_fraction``) under the seed, with the leftover test
    quota assigned by largest fractional remainder.  ``groups`` optionally
    maps scene ids to a source tag; when given, the split is performed
    independently within each group.  Fewer scenes than bins falls back to an
    unstratified shuffle with a logged warning.
    """
    scene_ids = list(scene_ids)
    if isinstance(labels, dict):
        values = np.array([float(labels[s]) for s in scene_ids])
    else:
        values = np.asarray(labels, dtype=np.float64)
        if len(values) != len(scene_ids):
            raise ValueError("labels must align with scene_ids")
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")

    if groups is not None:
        tags = (
            [groups[s] for s in scene_ids]
            if isinstance(groups, dict)
            else list(groups)
        )
        train_ids, test_ids = [], []
        for tag in sorted(set(tags)):
            member_idx = [i for i, t in enumerate(tags) if t == tag]
            sub_train, sub_test = make_split(
                [scene_ids[i] for i in member_idx],
                values[member_idx],
                test_fraction,
                stable_seed("group", tag, seed),
            )
            train_ids += sub_train
            test_ids += sub_test
        order = {s: i for i, s in enumerate(scene_ids)}
        return sorted(train_ids, key=order.get), sorted(test_ids, key=order.get)

    rng = np.random.default_rng(seed)
    n = len(scene_ids)
    n_test = int(round(test_fraction * n))
    n_test = min(max(n_test, 1), n - 1) if n >= 2 else 0

    if n < SPLIT_BINS:
        logger.warning(
            "make_split: %d scenes is fewer than %d bins; "
            "falling back to an unstratified shuffle",
            n,
            SPLIT_BINS,
        )
        perm = rng.permutation(n)
        test_set = set(perm[:n_test].tolist())
    else:
        order = np.argsort(values, kind="stable")
        bins = np.array_split(order, SPLIT_BINS)
        quotas = np.array([test_fraction * len(b) for b in bins])
        base = np.floor(quotas).astype(int)
        leftover = n_test - int(base.sum())
        remainders = quotas - base
        tie_break = rng.permutation(len(bins))
        by_remainder = sorted(
            range(len(bins)), key=lambda i: (-remainders[i], tie_break[i])
        )
        counts = base.copy()
        for i in by_remainder:
            if leftover <= 0:
                break
            if counts[i] < len(bins[i]):
                counts[i] += 1
                leftover -= 1
        test_set = set()
        for b, count in zip(bins, counts):
            if count > 0:
                picks = rng.choice(len(b), size=min(count, len(b)), replace=False)
                test_set.update(int(b[p]) for p in picks)

    train_ids = [s for i, s in enumerate(scene_ids) if i not in test_set]
    test_ids = [s for i, s in enumerate(scene_ids) if i in test_set]
    return train_ids, test_ids


def cosine_schedule(step, total_steps):
    """Multiplier decaying from 1 at the first step to 0 at the last."""
    if total_steps <= 1:
        return 1.0 if step == 0 else 0.0
    t = min(max(step / (total_steps - 1), 0.0), 1.0)
    return 0.5 * (1.0 + math.cos(math.pi * t))


def cosine_lr(step, total_steps, base_lr):
    return base_lr * cosine_schedule(step, total_steps)


class DecoupledAdamW:
    """Adaptive-moment optimizer with truly decoupled weight decay.

    Implements the original decoupled formulation: the schedule multiplier
    eta scales both the gradient step and the decay term, i.e.
    ``p <- p - eta * (lr * m_hat / (sqrt(v_hat) + eps) + wd * p)``.
    With ``lr = 0`` and ``wd > 0`` parameters still shrink geometrically and
    the loss gradient is never applied.
    """

    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.exp_avg = [torch.zeros_like(p) for p in self.params]
        self.exp_avg_sq = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self, schedule=1.0):
        self.step_count += 1
        beta1, beta2 = self.betas
        bias1 = 1.0 - beta1 ** self.step_count
        bias2 = 1.0 - beta2 ** self.step_count
        for p, m, v in zip(self.params, self.exp_avg, self.exp_avg_sq):
            if p.grad is None:
                continue
            grad = p.grad
            m.mul_(beta1).add_(grad, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
            m_hat = m / bias1
            v_hat = v / bias2
            decay = schedule * self.weight_decay * p
            p.add_(-(schedule * self.lr) * m_hat / (v_hat.sqrt() + self.eps))
            p.add_(-decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self):
        return {
            "step_count": self.step_count,
            "exp_avg": [t.clone() for t in self.exp_avg],
            "exp_avg_sq": [t.clone() for t in self.exp_avg_sq],
        }

    def load_state_dict(self, state):
        self.step_count = state["step_count"]
        self.exp_avg = [t.clone() for t in state["exp_avg"]]
        self.exp_avg_sq = [t.clone() for t in state["exp_avg_sq"]]


def config_hash(train_config: TrainConfig):
    """Stable short hash of the full training configuration."""
    payload = json.dumps(asdict(train_config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def make_checkpoint(model, optimizer, train_config, epoch):
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(train_config.model),
        "train_config": asdict(train_config),
        "config_hash": config_hash(train_config),
        "seed": train_config.seed,
        "epoch": epoch,
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng_state": torch.get_rng_state(),
    }


def save_checkpoint(checkpoint, path):
    torch.save(checkpoint, path)


def load_checkpoint(path):
    checkpoint = torch.load(path, map_location="cpu", weights_only=False)
    version = checkpoint.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version!r}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    return checkpoint


def model_from_checkpoint(checkpoint):
    """Rebuild the model; rejects config or tensor-shape mismatches."""
    try:
        config = ModelConfig(**checkpoint["model_config"])
    except TypeError as exc:
        raise CheckpointError(f"invalid model config in checkpoint: {exc}") from None
    model = SceneAestheticRegressor(config)
    try:
        model.load_state_dict(checkpoint["state_dict"], strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint/parameter mismatch: {exc}") from None
    model.eval()
    return model


def predict(model, samples, batch_size=8, clamp=False):
    """Deterministic forward over samples; returns an aligned float array."""
    model.eval()
    dtype = next(model.parameters()).dtype
    outputs = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            batch = SceneBatch.from_samples(samples[start : start + batch_size], dtype=dtype)
            outputs.append(model(batch).detach().cpu().numpy())
    predictions = np.concatenate(outputs) if outputs else np.zeros(0)
    if clamp:
        predictions = np.clip(predictions, 0.0, 1.0)
    return predictions


@dataclass
class TrainResult:
    checkpoint: dict
    best_checkpoint: dict
    log: list
    train_ids: list
    test_ids: list


def train(scenes, labels, config: TrainConfig, split=None):
    """Run the full optimization loop at the configured scale.

    ``scenes`` maps scene ids to GaussianScene instances and ``labels`` maps
    scene ids to SceneLabel (or float) targets.  ``split`` is an optional
    ``(train_ids, test_ids)`` pair; by default a stratified split is built
    from the config seed.  Returns the final checkpoint, the best-holdout-SRCC
    checkpoint, and the per-epoch log.
    """
    if split is None:
        ids = sorted(scenes)
        split = make_split(
            ids, {s: _label_value(labels[s])[0] for s in ids}, seed=config.seed
        )
    train_ids, test_ids = split
    if len(train_ids) < 1:
        raise ValueError("train: need at least one training scene")
    for sid in list(train_ids) + list(test_ids):
        if sid not in labels or labels[sid] is None:
            raise AssemblyError(f"scene {sid!r}: missing label")

    torch.manual_seed(config.seed)
    model = SceneAestheticRegressor(config.model)
    optimizer = DecoupledAdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )

    prepared = {
        sid: prepare_scene(scenes[sid], config.model)
        for sid in list(train_ids) + list(test_ids)
    }

    def build(sid, view_seed):
        target, variant = _label_value(labels[sid])
        return sample_from_prepared(
            prepared[sid], target, config.model, view_seed,
            config.view_sampling, variant,
        )

    eval_samples = [
        build(sid, stable_seed("eval-views", sid, config.seed)) for sid in test_ids
    ]
    eval_targets = np.array([s.target for s in eval_samples])

    steps_per_epoch = math.ceil(len(train_ids) / config.batch_size)
    total_steps = max(config.epochs * steps_per_epoch, 1)

    log = []
    best_srcc = -np.inf
    best_checkpoint = None
    step = 0
    last_lr = config.learning_rate
    for epoch in range(config.epochs):
        epoch_seed = stable_seed("epoch-views", config.seed, epoch)
        samples = {
            sid: build(sid, stable_seed("views", sid, epoch_seed))
            for sid in train_ids
        }
        order_rng = np.random.default_rng(stable_seed("order", config.seed, epoch))
        order = order_rng.permutation(len(train_ids))

        model.train()
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [train_ids[i] for i in order[start : start + config.batch_size]]
            batch = SceneBatch.from_samples([samples[sid] for sid in chunk])
            schedule = (
                cosine_schedule(step, total_steps)
                if config.schedule == "cosine"
                else 1.0
            )
            last_lr = config.learning_rate * schedule
            optimizer.zero_grad()
            try:
                if config.mixed_precision:
                    with torch.autocast("cpu", dtype=torch.bfloat16):
                        predictions = model(batch)
                        loss = total_loss(predictions.float(), batch.targets, config.loss)
                else:
                    predictions = model(batch)
                    loss = total_loss(predictions, batch.targets, config.loss)
            except ContractError as exc:
                # selection weights always form a simplex in finite arithmetic,
                # so a contract violation mid-training means NaN/Inf parameters
                raise NonFiniteLossError(chunk) from exc
            if not torch.isfinite(loss):
                raise NonFiniteLossError(chunk)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
            optimizer.step(schedule=schedule)
            epoch_losses.append(float(loss.detach()))
            step += 1

        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else None,
            "lr": last_lr,
        }
        if eval_samples:
            holdout = predict(model, eval_samples)
            report = compute_metrics(holdout, eval_targets)
            entry.update(
                holdout_plcc=report.plcc,
                holdout_srcc=report.srcc,
                holdout_krcc=report.krcc,
                holdout_mae=report.mae,
                holdout_rmse=report.rmse,
            )
            if report.srcc > best_srcc:
                best_srcc = report.srcc
                best_checkpoint = make_checkpoint(model, optimizer, config, epoch)
        log.append(entry)

    final = make_checkpoint(model, optimizer, config, max(config.epochs - 1, 0))
    if best_checkpoint is None:
        best_checkpoint = final
    return TrainResult(
        checkpoint=final,
        best_checkpoint=best_checkpoint,
        log=log,
        train_ids=list(train_ids),
        test_ids=list(test_ids),
    )


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    tolerance: float
    failures: list

    @property
    def passed(self):
        return not self.failures


def grad_check(model, batch, targets=None, loss_config=None, step=1e-4,
               tolerance=1e-3, param_filter=None):
    """Central finite-difference check of every trainable parameter.

    The model is copied to float64 and evaluated in eval mode (no dropout).
    For each scalar parameter the analytic gradient of the total loss is
    compared against ``(f(x + h) - f(x - h)) / 2h``; entries whose relative
    error exceeds the tolerance are reported as failures.
    """
    if loss_config is None:
        loss_config = LossConfig()
    work = copy.deepcopy(model).double()
    work.eval()
    batch = batch.to(dtype=torch.float64)
    if targets is None:
        targets = batch.targets
    targets = torch.as_tensor(targets, dtype=torch.float64)

    def loss_value():
        return total_loss(work(batch), targets, loss_config)

    loss = loss_value()
    named = [
        (name, p)
        for name, p in work.named_parameters()
        if p.requires_grad and (param_filter is None or param_filter(name))
    ]
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)

    failures = []
    max_rel = 0.0
    checked = 0
    with torch.no_grad():
        for (name, param), grad in zip(named, grads):
            flat = param.view(-1)
            grad_flat = (
                grad.reshape(-1)
                if grad is not None
                else torch.zeros_like(flat)
            )
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + step
                upper = float(loss_value())
                flat[i] = original - step
                lower = float(loss_value())
                flat[i] = original
                fd = (upper - lower) / (2.0 * step)
                analytic = float(grad_flat[i])
                denom = max(abs(fd), abs(analytic), 1e-8)
                rel = abs(fd - analytic) / denom
                if abs(fd) < 1e-10 and abs(analytic) < 1e-10:
                    rel = 0.0
                max_rel = max(max_rel, rel)
                checked += 1
                if rel > tolerance:
                    failures.append((name, i, analytic, fd, rel))
    return GradCheckReport(
        max_rel_error=max_rel, checked=checked, tolerance=tolerance, failures=failures
    )
