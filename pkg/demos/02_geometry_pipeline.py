"""Geometric preprocessing walkthrough.

Normalization to the 95th-percentile radius, farthest-point subsampling,
spherical-bin candidate view selection, and the projection kernel that
drives view tokenization.
"""

import numpy as np

from gsaes.geometry import (
    assign_to_grid,
    fps_subsample,
    normalize_scene,
    project_point,
    project_points,
    select_candidate_views,
)
from gsaes.synthetic import make_scene

scene, _ = make_scene("geo_demo", seed=4, n_points=2000, n_cameras=64)

centers, cameras, info = normalize_scene(scene)
dist = np.linalg.norm(centers - centers.mean(axis=0), axis=1)
print(f"normalized: centroid shift {np.round(info.centroid, 2)}, "
      f"radius scale {info.radius:.3f}")
print(f"  95th-percentile radius after normalization: "
      f"{np.quantile(dist, 0.95):.4f} (should be ~1)")

idx = fps_subsample(centers, 256, seed=7)
kept = centers[idx]
print(f"FPS kept {len(idx)} of {len(centers)} points; "
      f"min pairwise spacing {min(np.linalg.norm(kept[0] - kept[1:], axis=1)):.3f}")

views = select_candidate_views(cameras, v_max=32, seed=7)
print(f"selected {len(views)} of {len(cameras)} cameras by azimuth-elevation binning")

# per-view projection census
for cam in views[:5]:
    uv, depth, mask = project_points(kept, cam)
    cells = assign_to_grid(
        [project_point(p, cam) for p in kept], g=14
    )
    print(f"  view {cam.view_id}: {int(mask.sum())}/{len(kept)} points visible, "
          f"{len(cells)} of 196 grid cells occupied")
