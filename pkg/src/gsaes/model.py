"""Scene-level aesthetic regression network over Gaussian primitives.

The model encodes a fixed-size set of Gaussian primitives with a dense
point-token transformer, projects the resulting scene tokens through each
candidate camera into a patch grid to form per-view descriptors (no
rendering involved), scores the views with a listwise selector, keeps a
sparse top-K subset via straight-through selection, and regresses a single
scalar from the fused view evidence.

Ablation switches cover every studied variant: feature composition, grid
size, scatter and pooling modes, selector modes (learned / uniform /
selected-uniform), control tokens, the scene-global token, and a
projection-free path that regresses from the pooled scene token alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .geometry import DEPTH_EPS

INPUT_VARIANTS = ("xyz", "xyz_rgb", "xyz_rgb_dir", "xyz_full_attrs")
SELECTION_MODES = ("learned", "uniform", "selected_uniform", "none_projection")
SCATTER_MODES = ("mean_max", "mean")
PATCH_POOL_MODES = ("attention", "mean")

VIEW_GEOMETRY_DIM = 16  # 9 rotation rows + 3 center + 2 log-focal + 2 principal


class ConfigurationError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    n_points: int = 2048
    hidden_dim: int = 192
    heads: int = 4
    mlp_ratio: float = 2.0
    dropout: float = 0.1
    encoder_blocks: int = 4
    view_transformer_blocks: int = 2
    selector_blocks: int = 2
    control_tokens: int = 2
    grid_side: int = 14
    candidate_views: int = 32
    top_k: int = 8
    temperature: float = 1.0
    regressor_layers: int = 3
    input_variant: str = "xyz_rgb_dir"
    use_scene_global_token: bool = True
    use_control_tokens: bool = True
    selection_mode: str = "learned"
    scatter_mode: str = "mean_max"
    patch_pool: str = "attention"

    def __post_init__(self):
        counts = {
            "n_points": self.n_points,
            "hidden_dim": self.hidden_dim,
            "heads": self.heads,
            "encoder_blocks": self.encoder_blocks,
            "selector_blocks": self.selector_blocks,
            "grid_side": self.grid_side,
            "candidate_views": self.candidate_views,
            "top_k": self.top_k,
            "regressor_layers": self.regressor_layers,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.view_transformer_blocks < 0 or self.control_tokens < 0:
            raise ConfigurationError("block/token counts must be >= 0")
        if not (1 <= self.top_k <= self.candidate_views):
            raise ConfigurationError(
                f"top_k must lie in [1, candidate_views], got {self.top_k}"
            )
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if self.hidden_dim % self.heads != 0:
            raise ConfigurationError("hidden_dim must be divisible by heads")
        if self.input_variant not in INPUT_VARIANTS:
            raise ConfigurationError(f"unknown input_variant {self.input_variant!r}")
        if self.selection_mode not in SELECTION_MODES:
            raise ConfigurationError(f"unknown selection_mode {self.selection_mode!r}")
        if self.scatter_mode not in SCATTER_MODES:
            raise ConfigurationError(f"unknown scatter_mode {self.scatter_mode!r}")
        if self.patch_pool not in PATCH_POOL_MODES:
            raise ConfigurationError(f"unknown patch_pool {self.patch_pool!r}")

    @property
    def feature_dim(self):
        return {"xyz": 3, "xyz_rgb": 6, "xyz_rgb_dir": 9, "xyz_full_attrs": 14}[
            self.input_variant
        ]


def featurize_primitives(
    centers, colors, variant="xyz_rgb_dir", opacity=None, scales=None, rotations=None
):
    """Per-primitive input features for one scene.

    ``centers`` must already be normalized (centroid-centered, percentile
    scaled).  The default variant concatenates position, RGB, and the unit
    direction from the scene center; a primitive sitting exactly at the
    origin gets the zero direction.  ``xyz_full_attrs`` appends opacity,
    scales, and unit quaternions and requires those blocks to be present.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if variant not in INPUT_VARIANTS:
        raise ConfigurationError(f"unknown input_variant {variant!r}")
    if variant == "xyz":
        return centers.copy()
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if len(colors) != len(centers):
        raise ConfigurationError("centers and colors disagree in length")
    if variant == "xyz_rgb":
        return np.concatenate([centers, colors], axis=1)
    if variant == "xyz_rgb_dir":
        norms = np.linalg.norm(centers, axis=1, keepdims=True)
        direction = np.where(norms > 1e-12, centers / np.where(norms > 0, norms, 1.0), 0.0)
        return np.concatenate([centers, colors, direction], axis=1)
    # xyz_full_attrs
    missing = [
        name
        for name, block in (("opacity", opacity), ("scales", scales), ("rotations", rotations))
        if block is None
    ]
    if missing:
        raise ConfigurationError(
            f"input_variant xyz_full_attrs requires attributes {missing}"
        )
    opacity = np.asarray(opacity, dtype=np.float64).reshape(-1, 1)
    scales = np.asarray(scales, dtype=np.float64).reshape(-1, 3)
    rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 4)
    return np.concatenate([centers, colors, opacity, scales, rotations], axis=1)


def view_geometry_features(rotation, translation, normalized_intrinsics):
    """The 16-d geometric input of the view-conditioned context vector.

    Concatenates the three rotation rows (the world axes expressed in the
    camera frame), the camera center ``-R^T t``, ``log(1 + f)`` for both
    normalized focals, and the normalized principal point.
    """
    rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
    translation = np.asarray(translation, dtype=np.float64).reshape(3)
    fx, fy, cx, cy = np.asarray(normalized_intrinsics, dtype=np.float64).reshape(4)
    center = -rotation.T @ translation
    return np.concatenate(
        [
            rotation.reshape(-1),
            center,
            [math.log1p(fx), math.log1p(fy), cx, cy],
        ]
    )


def topk_weights(utilities, valid=None, k=1, tau=1.0):
    """Sparse straight-through top-K selection weights over one view set.

    The member set is the ``min(k, #valid)`` valid indices with the highest
    (detached) utilities, ties broken by the lowest index; weights are a
    softmax of ``u / tau`` restricted to that set, exactly zero elsewhere.
    Gradients flow through the softmax branch only; set membership is a
    constant of the backward pass.
    """
    utilities = torch.as_tensor(utilities, dtype=torch.get_default_dtype()) \
        if not isinstance(utilities, torch.Tensor) else utilities
    if utilities.dim() != 1:
        raise ValueError("topk_weights expects a 1-d utility vector")
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    n = utilities.numel()
    if valid is None:
        valid = torch.ones(n, dtype=torch.bool, device=utilities.device)
    else:
        valid = torch.as_tensor(valid, dtype=torch.bool, device=utilities.device)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("topk_weights: no valid views")
    kk = min(int(k), n_valid)

    ranked = utilities.detach().clone()
    ranked[~valid] = float("-inf")
    order = torch.argsort(ranked, descending=True, stable=True)
    member = torch.zeros(n, dtype=torch.bool, device=utilities.device)
    member[order[:kk]] = True

    logits = (utilities / tau).masked_fill(~member, float("-inf"))
    return torch.softmax(logits, dim=-1)


def selected_uniform_weights(utilities, valid=None, k=1):
    """Uniform 1/K weights over the learned top-K member set."""
    alpha = topk_weights(utilities, valid=valid, k=k)
    member = alpha > 0
    return member.to(alpha.dtype) / member.sum()


class AttentionPool(nn.Module):
    """Single learned-query attention pooling over a masked token set."""

    def __init__(self, dim):
        super().__init__()
        self.query = nn.Parameter(torch.empty(dim))
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        nn.init.normal_(self.query, std=0.02)

    def forward(self, tokens, mask=None):
        keys = self.key(tokens)
        values = self.value(tokens)
        scores = keys @ self.query / math.sqrt(self.query.numel())
        if mask is not None:
            scores = scores.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        return (weights.unsqueeze(-1) * values).sum(dim=-2)


class TransformerBlock(nn.Module):
    """Pre-norm multi-head self-attention block with a GELU MLP."""

    def __init__(self, dim, heads, mlp_ratio, dropout):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(hidden, dim),
            nn.Dropout(dropout),
        )

    def forward(self, x, key_padding_mask=None):
        h = self.norm1(x)
        attn_out, _ = self.attn(
            h, h, h, key_padding_mask=key_padding_mask, need_weights=False
        )
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


class TransformerStack(nn.Module):
    def __init__(self, dim, depth, heads, mlp_ratio, dropout):
        super().__init__()
        self.blocks = nn.ModuleList(
            TransformerBlock(dim, heads, mlp_ratio, dropout) for _ in range(depth)
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, x, mask=None):
        key_padding_mask = None if mask is None else ~mask
        for block in self.blocks:
            x = block(x, key_padding_mask)
        return self.norm(x)


def _mlp(in_dim, out_dim, hidden, dropout):
    return nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.GELU(),
        nn.Dropout(dropout),
        nn.Linear(hidden, out_dim),
    )


@dataclass
class SceneBatch:
    """Collated tensors for a batch of scene samples.

    ``point_mask`` and ``view_mask`` are True for real (non-padding) rows;
    cameras are already expressed in the normalized scene frame.
    """

    features: torch.Tensor       # (B, N, F)
    positions: torch.Tensor      # (B, N, 3)
    point_mask: torch.Tensor     # (B, N) bool
    cam_rotations: torch.Tensor  # (B, V, 3, 3)
    cam_translations: torch.Tensor  # (B, V, 3)
    cam_intrinsics: torch.Tensor    # (B, V, 4): fx, fy, cx, cy (normalized)
    view_mask: torch.Tensor         # (B, V) bool
    targets: torch.Tensor | None = None
    scene_ids: list[str] = field(default_factory=list)

    @classmethod
    def from_samples(cls, samples, dtype=torch.float32, device="cpu"):
        def stack(name):
            return torch.stack(
                [torch.as_tensor(np.asarray(getattr(s, name))) for s in samples]
            )

        batch = cls(
            features=stack("features").to(dtype=dtype, device=device),
            positions=stack("positions").to(dtype=dtype, device=device),
            point_mask=stack("point_mask").to(dtype=torch.bool, device=device),
            cam_rotations=stack("cam_rotations").to(dtype=dtype, device=device),
            cam_translations=stack("cam_translations").to(dtype=dtype, device=device),
            cam_intrinsics=stack("cam_intrinsics").to(dtype=dtype, device=device),
            view_mask=stack("view_mask").to(dtype=torch.bool, device=device),
            scene_ids=[s.scene_id for s in samples],
        )
        targets = [getattr(s, "target", None) for s in samples]
        if all(t is not None for t in targets):
            batch.targets = torch.as_tensor(targets, dtype=dtype, device=device)
        return batch

    def to(self, dtype=None, device=None):
        def cast(t):
            if t is None:
                return None
            if t.dtype == torch.bool:
                return t.to(device=device)
            return t.to(dtype=dtype, device=device)

        return SceneBatch(
            features=cast(self.features),
            positions=cast(self.positions),
            point_mask=self.point_mask.to(device=device),
            cam_rotations=cast(self.cam_rotations),
            cam_translations=cast(self.cam_translations),
            cam_intrinsics=cast(self.cam_intrinsics),
            view_mask=self.view_mask.to(device=device),
            targets=cast(self.targets),
            scene_ids=list(self.scene_ids),
        )

    def __len__(self):
        return self.features.shape[0]


class SceneAestheticRegressor(nn.Module):
    """Selector-fusion-regressor over projected Gaussian scene tokens."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dim = config.hidden_dim
        hidden = int(dim * config.mlp_ratio)

        self.input_proj = _mlp(config.feature_dim, dim, dim, config.dropout)
        self.pos_embed = _mlp(3, dim, dim, config.dropout)
        self.encoder = TransformerStack(
            dim, config.encoder_blocks, config.heads, config.mlp_ratio, config.dropout
        )
        self.scene_pool = AttentionPool(dim)

        projecting = config.selection_mode != "none_projection"
        if projecting:
            self.empty_cell = nn.Parameter(torch.empty(dim))
            nn.init.normal_(self.empty_cell, std=0.02)
            self.cell_proj = nn.Linear(dim, dim)
            self.view_ctx = _mlp(VIEW_GEOMETRY_DIM, dim, dim, config.dropout)
            if config.view_transformer_blocks > 0:
                self.view_transformer = TransformerStack(
                    dim,
                    config.view_transformer_blocks,
                    config.heads,
                    config.mlp_ratio,
                    config.dropout,
                )
            else:
                self.view_transformer = None
            if config.patch_pool == "attention":
                self.patch_pool = AttentionPool(dim)
            else:
                self.patch_pool = None

        if projecting and config.selection_mode in ("learned", "selected_uniform"):
            self.sel_proj = nn.Linear(dim, dim)
            if config.use_scene_global_token:
                self.scene_proj = nn.Linear(dim, dim)
            if config.use_control_tokens and config.control_tokens > 0:
                self.control_tokens = nn.Parameter(
                    torch.empty(config.control_tokens, dim)
                )
                nn.init.normal_(self.control_tokens, std=0.02)
            self.selector = TransformerStack(
                dim, config.selector_blocks, config.heads, config.mlp_ratio, config.dropout
            )
            self.utility_head = nn.Linear(dim, 1)

        self.fuse = _mlp(dim, dim, hidden, config.dropout)
        self.fuse_norm = nn.LayerNorm(dim)

        layers = []
        dims = [dim]
        if config.regressor_layers >= 2:
            dims += [dim] * (config.regressor_layers - 2) + [dim // 2]
        dims.append(1)
        for i in range(len(dims) - 1):
            layers.append(nn.Linear(dims[i], dims[i + 1]))
            if i < len(dims) - 2:
                layers.append(nn.GELU())
                layers.append(nn.Dropout(config.dropout))
        self.regressor = nn.Sequential(*layers)

    # ----- stages -------------------------------------------------------

    def encode_scene(self, features, positions, mask):
        """Point tokens plus the pooled scene-global token.

        Returns ``(tokens (B, N, D), scene_token (B, D))``.  Padded rows are
        masked out of both the attention and the pooling, so mutating them
        cannot change the scene token or any unmasked token row.
        """
        h = self.input_proj(features) + self.pos_embed(positions)
        tokens = self.encoder(h, mask=mask)
        scene_token = self.scene_pool(tokens, mask=mask)
        return tokens, scene_token

    def _project_to_cells(self, positions, point_mask, batch):
        """Camera-frame projection of every point into every view's grid.

        Returns ``(cells (B, V, N) long, kept (B, V, N) bool)``; geometry is
        detached (cell membership is not differentiated through).
        """
        g = self.config.grid_side
        with torch.no_grad():
            q = torch.einsum(
                "bvij,bnj->bvni", batch.cam_rotations, positions
            ) + batch.cam_translations.unsqueeze(2)
            depth = q[..., 2]
            in_front = depth > DEPTH_EPS
            safe = torch.where(in_front, depth, torch.ones_like(depth))
            intr = batch.cam_intrinsics
            u = intr[..., 0:1] * q[..., 0] / safe + intr[..., 2:3]
            v = intr[..., 1:2] * q[..., 1] / safe + intr[..., 3:4]
            inside = (u >= 0) & (u < 1) & (v >= 0) & (v < 1)
            kept = (
                in_front
                & inside
                & point_mask.unsqueeze(1)
                & batch.view_mask.unsqueeze(-1)
            )
            col = (u * g).floor().long().clamp(0, g - 1)
            row = (v * g).floor().long().clamp(0, g - 1)
            cells = col + g * row
        return cells, kept

    def pool_projected_tokens(self, tokens, positions, point_mask, batch):
        """Grid-cell pooling of projected scene tokens for every view.

        Projects each unmasked point into each view, groups by grid cell, and
        pools the corresponding token rows per cell (mean plus elementwise
        max by default, mean only under the scatter ablation).  Cells that
        receive no points get the learned empty-cell token.  Returns
        ``(cell_tokens (B, V, G^2, D), nonempty (B, V, G^2), kept (B, V, N))``.
        """
        cfg = self.config
        B, N, D = tokens.shape
        V = batch.view_mask.shape[1]
        g2 = cfg.grid_side * cfg.grid_side
        cells, kept = self._project_to_cells(positions, point_mask, batch)

        base = (
            torch.arange(B * V, device=tokens.device).view(B, V, 1) * g2
        )
        flat_cells = (base + cells)[kept]
        rows = tokens.unsqueeze(1).expand(B, V, N, D)[kept]

        sums = torch.zeros(B * V * g2, D, dtype=tokens.dtype, device=tokens.device)
        sums = sums.index_add(0, flat_cells, rows)
        counts = torch.zeros(B * V * g2, dtype=tokens.dtype, device=tokens.device)
        counts = counts.index_add(
            0, flat_cells, torch.ones_like(flat_cells, dtype=tokens.dtype)
        )
        nonempty = counts > 0
        mean = sums / counts.clamp(min=1.0).unsqueeze(-1)
        if cfg.scatter_mode == "mean_max":
            maxs = torch.zeros_like(sums)
            maxs = maxs.scatter_reduce(
                0,
                flat_cells.unsqueeze(-1).expand(-1, D),
                rows,
                reduce="amax",
                include_self=False,
            )
            pooled = mean + maxs
        else:
            pooled = mean
        cell_tokens = torch.where(
            nonempty.unsqueeze(-1), pooled, self.empty_cell.expand_as(pooled)
        )
        return (
            cell_tokens.view(B, V, g2, D),
            nonempty.view(B, V, g2),
            kept,
        )

    def tokenize_views(self, tokens, positions, point_mask, batch):
        """Per-view descriptors from grid-pooled projected scene tokens.

        Returns ``(descriptors (B, V, D), view_valid (B, V))``.  Views whose
        every point is discarded are flagged invalid and get a zero
        descriptor.  Empty grid cells are filled with the learned empty-cell
        token and masked out of the patch transformer's attention keys.
        """
        cfg = self.config
        B, N, D = tokens.shape
        V = batch.view_mask.shape[1]
        g2 = cfg.grid_side * cfg.grid_side
        cell_tokens, nonempty, kept = self.pool_projected_tokens(
            tokens, positions, point_mask, batch
        )

        geometry = torch.cat(
            [
                batch.cam_rotations.reshape(B, V, 9),
                -torch.einsum("bvji,bvj->bvi", batch.cam_rotations, batch.cam_translations),
                torch.log1p(batch.cam_intrinsics[..., 0:2]),
                batch.cam_intrinsics[..., 2:4],
            ],
            dim=-1,
        )
        context = self.view_ctx(geometry)  # (B, V, D)
        patches = self.cell_proj(cell_tokens) + context.unsqueeze(2)

        view_valid = batch.view_mask & kept.any(dim=-1)
        flat_patches = patches.reshape(B * V, g2, D)
        flat_nonempty = nonempty.reshape(B * V, g2)
        flat_valid = view_valid.reshape(B * V)

        descriptors = torch.zeros(B * V, D, dtype=tokens.dtype, device=tokens.device)
        if flat_valid.any():
            active = flat_patches[flat_valid]
            active_mask = flat_nonempty[flat_valid]
            if self.view_transformer is not None:
                active = self.view_transformer(active, mask=active_mask)
            if self.patch_pool is not None:
                pooled_desc = self.patch_pool(active)
            else:
                pooled_desc = active.mean(dim=1)
            descriptors = descriptors.index_put(
                (flat_valid.nonzero(as_tuple=True)[0],), pooled_desc
            )
        return descriptors.view(B, V, D), view_valid

    def select_views(self, descriptors, scene_token, view_valid):
        """Per-view utilities and sparse selection weights.

        Returns ``(alpha (B, V), utilities (B, V) or None)``.  In ``uniform``
        mode the selector is bypassed and every valid view gets equal weight;
        ``selected_uniform`` keeps the learned member set but spreads weight
        uniformly over it.
        """
        cfg = self.config
        B, V, D = descriptors.shape
        if cfg.selection_mode == "uniform":
            valid = view_valid.to(descriptors.dtype)
            total = valid.sum(dim=-1, keepdim=True)
            if (total == 0).any():
                raise ValueError("select_views: a sample has no valid view")
            return valid / total, None

        z = self.sel_proj(descriptors)
        parts = [z]
        masks = [view_valid]
        if cfg.use_control_tokens and cfg.control_tokens > 0:
            ctrl = self.control_tokens.unsqueeze(0).expand(B, -1, -1)
            parts.insert(0, ctrl)
            masks.insert(0, torch.ones(B, cfg.control_tokens, dtype=torch.bool,
                                       device=descriptors.device))
        if cfg.use_scene_global_token:
            parts.insert(0, self.scene_proj(scene_token).unsqueeze(1))
            masks.insert(0, torch.ones(B, 1, dtype=torch.bool, device=descriptors.device))
        sequence = torch.cat(parts, dim=1)
        seq_mask = torch.cat(masks, dim=1)
        refined = self.selector(sequence, mask=seq_mask)
        utilities = self.utility_head(refined[:, -V:, :]).squeeze(-1)

        alphas = []
        for b in range(B):
            if cfg.selection_mode == "selected_uniform":
                alphas.append(
                    selected_uniform_weights(utilities[b], view_valid[b], cfg.top_k)
                )
            else:
                alphas.append(
                    topk_weights(utilities[b], view_valid[b], cfg.top_k, cfg.temperature)
                )
        return torch.stack(alphas), utilities

    def fuse_and_regress(self, descriptors, alpha):
        """Weighted-sum fusion followed by the residual MLP and scalar head.

        ``alpha`` must be a convex combination per sample (checked to 1e-6).
        The output scalar is unconstrained; clamping to [0, 1] is a
        reporting-time concern.
        """
        sums = alpha.sum(dim=-1)
        if not torch.all(torch.abs(sums - 1.0) < 1e-6):
            raise ContractError(
                f"selection weights must sum to 1, got {sums.tolist()}"
            )
        if not torch.all(alpha >= 0):
            raise ContractError("selection weights must be non-negative")
        h = (alpha.unsqueeze(-1) * descriptors).sum(dim=1)
        return self._regress(h)

    def _regress(self, h):
        fused = self.fuse_norm(h + self.fuse(h))
        return self.regressor(fused).squeeze(-1)

    def view_context(self, camera, dtype=torch.float32):
        """The per-view context vector for one CameraView (eval helper)."""
        feats = view_geometry_features(
            camera.rotation, camera.translation, camera.normalized_intrinsics
        )
        param = next(self.view_ctx.parameters())
        return self.view_ctx(
            torch.as_tensor(feats, dtype=param.dtype, device=param.device)
        )

    # ----- full forward ---------------------------------------------------

    def forward_details(self, batch: SceneBatch):
        tokens, scene_token = self.encode_scene(
            batch.features, batch.positions, batch.point_mask
        )
        details = {"scene_token": scene_token}
        if self.config.selection_mode == "none_projection":
            details["prediction"] = self._regress(scene_token)
            return details
        descriptors, view_valid = self.tokenize_views(
            tokens, batch.positions, batch.point_mask, batch
        )
        alpha, utilities = self.select_views(descriptors, scene_token, view_valid)
        details.update(
            descriptors=descriptors,
            view_valid=view_valid,
            alpha=alpha,
            utilities=utilities,
        )
        details["prediction"] = self.fuse_and_regress(descriptors, alpha)
        return details

    def forward(self, batch: SceneBatch):
        return self.forward_details(batch)["prediction"]


def count_parameters(config_or_module):
    """Number of trainable scalars in a module or a model built from a config."""
    if isinstance(config_or_module, nn.Module):
        module = config_or_module
    else:
        module = SceneAestheticRegressor(config_or_module)
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
