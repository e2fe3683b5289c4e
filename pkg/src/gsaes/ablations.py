"""Named ablation presets.

Each preset is a set of nested overrides applied on top of a base training
configuration: architecture switches (scene-global token, control tokens,
selector mode, top-K budget, projection), objective weights, tokenization
variants (grid size, scatter mode, patch pooling, input features), and the
probe-sampling strategy.
"""

from __future__ import annotations

import copy
from dataclasses import replace

from .training import TrainConfig

PRESETS: dict[str, dict] = {
    # scene-global token fusion
    "A1_no_scene_global": {"model": {"use_scene_global_token": False}},
    "A2_full": {},
    # view selector
    "B1_no_control_tokens": {"model": {"use_control_tokens": False}},
    "B2_uniform": {"model": {"selection_mode": "uniform"}},
    "B3_full": {},
    # top-K sensitivity
    "C1_k8": {"model": {"top_k": 8}},
    "C2_k16": {"model": {"top_k": 16}},
    "C3_k32": {"model": {"top_k": 32}},
    # ranking-loss weight
    "D1_rank0": {"loss": {"rank_weight": 0.0}},
    "D2_rank01": {"loss": {"rank_weight": 0.1}},
    "D3_rank05": {"loss": {"rank_weight": 0.5}},
    # geometric projection
    "E1_no_projection": {"model": {"selection_mode": "none_projection"}},
    "E2_full": {},
    # projection-based view tokenization variants
    "T3_no_patch_transformer": {"model": {"view_transformer_blocks": 0}},
    "T3_grid7": {"model": {"grid_side": 7}},
    "T3_mean_scatter": {"model": {"scatter_mode": "mean"}},
    "T3_mean_patch_pool": {"model": {"patch_pool": "mean"}},
    # input representation variants
    "T3_xyz": {"model": {"input_variant": "xyz"}},
    "T3_xyz_rgb": {"model": {"input_variant": "xyz_rgb"}},
    "T3_xyz_full_attrs": {"model": {"input_variant": "xyz_full_attrs"}},
    # weighting and probe robustness
    "T3_selected_uniform": {"model": {"selection_mode": "selected_uniform"}},
    "T3_random_probes": {"train": {"view_sampling": "random"}},
}


def apply_preset(config: TrainConfig, name: str) -> TrainConfig:
    """A new TrainConfig with the named preset's overrides applied."""
    if name not in PRESETS:
        raise ValueError(
            f"unknown ablation preset {name!r}; known: {sorted(PRESETS)}"
        )
    overrides = PRESETS[name]
    config = copy.deepcopy(config)
    if "model" in overrides:
        config.model = replace(config.model, **overrides["model"])
    if "loss" in overrides:
        config.loss = replace(config.loss, **overrides["loss"])
    if "train" in overrides:
        config = replace(config, **overrides["train"])
    return config
