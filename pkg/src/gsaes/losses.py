"""Training objective: robust regression plus pairwise ordinal consistency.

The total loss is a mean Huber term on the absolute scene score plus a
weighted pairwise hinge ranking term over batch pairs whose target gap
exceeds a threshold.  All functions are pure and differentiable through
torch autograd.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class LossConfig:
    huber_delta: float = 1.0
    rank_weight: float = 0.1
    margin: float = 0.05
    pair_gap: float = 0.03

    def __post_init__(self):
        if self.huber_delta <= 0:
            raise ValueError(f"huber_delta must be > 0, got {self.huber_delta}")
        if self.rank_weight < 0 or self.margin < 0 or self.pair_gap < 0:
            raise ValueError("rank_weight, margin and pair_gap must be >= 0")


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x, dtype=torch.get_default_dtype())


def huber(prediction, target, delta=1.0):
    """Huber loss: 0.5 r^2 for |r| <= delta, else delta (|r| - 0.5 delta)."""
    prediction = _as_tensor(prediction)
    target = _as_tensor(target)
    r = prediction - target
    abs_r = torch.abs(r)
    quadratic = 0.5 * r * r
    linear = delta * (abs_r - 0.5 * delta)
    return torch.where(abs_r <= delta, quadratic, linear)


def rank_pairs(targets, pair_gap=0.03):
    """Index pairs (i, j) with i < j whose target gap strictly exceeds pair_gap."""
    targets = _as_tensor(targets).detach().reshape(-1)
    n = targets.numel()
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if abs(float(targets[i]) - float(targets[j])) > pair_gap:
                pairs.append((i, j))
    return pairs


def rank_loss(predictions, targets, margin=0.05, pair_gap=0.03):
    """Pairwise hinge ranking loss averaged over valid pairs.

    For each pair the hinge is ``max(0, margin - sign(y_i - y_j) (p_i - p_j))``;
    with no valid pairs the loss is defined as 0.  The hinge uses relu, so the
    subgradient at the kink comes from the zero side.
    """
    predictions = _as_tensor(predictions).reshape(-1)
    targets = _as_tensor(targets).reshape(-1)
    if predictions.numel() != targets.numel():
        raise ValueError("rank_loss: predictions and targets differ in length")
    pairs = rank_pairs(targets, pair_gap)
    if not pairs:
        return torch.zeros((), dtype=predictions.dtype, device=predictions.device)
    idx_i = torch.tensor([i for i, _ in pairs], device=predictions.device)
    idx_j = torch.tensor([j for _, j in pairs], device=predictions.device)
    sign = torch.sign(targets[idx_i] - targets[idx_j]).detach()
    hinge = torch.relu(margin - sign * (predictions[idx_i] - predictions[idx_j]))
    return hinge.mean()


def total_loss(predictions, targets, config: LossConfig | None = None):
    """Mean Huber over the batch plus rank_weight times the ranking loss."""
    if config is None:
        config = LossConfig()
    predictions = _as_tensor(predictions).reshape(-1)
    targets = _as_tensor(targets).reshape(-1)
    if predictions.numel() != targets.numel() or predictions.numel() < 1:
        raise ValueError("total_loss: need equal-length, non-empty inputs")
    regression = huber(predictions, targets, config.huber_delta).mean()
    ranking = rank_loss(predictions, targets, config.margin, config.pair_gap)
    return regression + config.rank_weight * ranking
