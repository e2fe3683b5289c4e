"""A look inside the scoring model.

Shows the parameter budget of the full-size configuration, then runs a
small model end to end and inspects the learned view selection: utilities,
sparse weights, and how the ablation switches change the computation.
"""

import torch

from gsaes.model import ModelConfig, SceneAestheticRegressor, SceneBatch, count_parameters
from gsaes.synthetic import make_dataset
from gsaes.training import assemble_sample

torch.manual_seed(0)

full = ModelConfig()
print(f"full-size model: {count_parameters(full):,} trainable parameters "
      f"(hidden {full.hidden_dim}, {full.encoder_blocks}+"
      f"{full.view_transformer_blocks}+{full.selector_blocks} blocks, "
      f"grid {full.grid_side}x{full.grid_side}, top-{full.top_k} of "
      f"{full.candidate_views} views)")

small = ModelConfig(
    n_points=256, hidden_dim=32, encoder_blocks=2, view_transformer_blocks=1,
    selector_blocks=1, grid_side=7, candidate_views=8, top_k=3,
)
print(f"demo-size model: {count_parameters(small):,} parameters\n")

scenes, scores = make_dataset(3, seed=9, n_points=400)
samples = [assemble_sample(s, scores[sid], small, 0) for sid, s in sorted(scenes.items())]
batch = SceneBatch.from_samples(samples)

model = SceneAestheticRegressor(small).eval()
with torch.no_grad():
    details = model.forward_details(batch)

print("per-scene selection weights (top-3 of 8 candidate views):")
for i, sid in enumerate(batch.scene_ids):
    alpha = details["alpha"][i]
    chosen = torch.nonzero(alpha > 0).flatten().tolist()
    weights = [round(float(alpha[j]), 3) for j in chosen]
    print(f"  {sid}: views {chosen} with weights {weights} "
          f"-> prediction {float(details['prediction'][i]):+.4f}")

print("\nablation switches on the same batch:")
for name, overrides in [
    ("uniform weighting", {"selection_mode": "uniform"}),
    ("no projection (scene token only)", {"selection_mode": "none_projection"}),
    ("mean-only scatter", {"scatter_mode": "mean"}),
    ("7x7 grid is the demo default", {}),
]:
    cfg = ModelConfig(**{**small.__dict__, **overrides})
    torch.manual_seed(0)
    variant = SceneAestheticRegressor(cfg).eval()
    with torch.no_grad():
        out = variant(batch)
    print(f"  {name}: predictions {[round(float(v), 4) for v in out]}")
