"""Procedural Gaussian scenes with a planted aesthetic score.

The planted score is a fixed smooth function of color statistics and the
spatial concentration of the point cloud, spanning roughly [0.15, 0.85].
Both statistics survive the preprocessing pipeline (color is untouched;
concentration is scale-free), so a trained model can recover the mapping.
The generator also fabricates view-level annotation tables for exercising
the aggregation pipeline end to end.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .annotation import ATTRIBUTES, CSV_COLUMNS
from .ingest import CameraView, GaussianScene, camera_manifest_record, write_gaussian_ply

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


def planted_score(centers, colors):
    """The fixed smooth target: luma plus spatial-concentration response.

    ``luma`` is the mean photometric luminance of the primitive colors;
    ``concentration`` is mean radial distance over the 95th-percentile
    distance about the centroid (a scale-free shape statistic).  The score is
    a tanh blend mapped into [0.15, 0.85].
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    luma = float((colors @ LUMA_WEIGHTS).mean())
    centered = centers - centers.mean(axis=0)
    dist = np.linalg.norm(centered, axis=1)
    p95 = np.quantile(dist, 0.95) if len(dist) > 1 else 0.0
    concentration = float(dist.mean() / p95) if p95 > 1e-12 else 1.0
    response = 3.0 * (luma - 0.5) + 2.5 * (concentration - 0.62)
    return float(0.5 + 0.35 * np.tanh(response))


def _look_at_rotation(eye, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera rotation with +z looking from eye toward target."""
    forward = np.asarray(target, dtype=np.float64) - np.asarray(eye, dtype=np.float64)
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(float(forward @ up)) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def make_camera(view_id, eye, target=(0.0, 0.0, 0.0), f_norm=0.8,
                width=1000, height=1000):
    rotation = _look_at_rotation(eye, target)
    translation = -rotation @ np.asarray(eye, dtype=np.float64)
    return CameraView(
        view_id=view_id,
        fx=f_norm * width,
        fy=f_norm * height,
        cx=0.5 * width,
        cy=0.5 * height,
        width=width,
        height=height,
        rotation=rotation,
        translation=translation,
    )


def make_scene(scene_id, seed, n_points=600, n_cameras=None):
    """One procedural scene: Gaussian blobs with a planted score.

    Returns ``(GaussianScene, score)``.  Blob count, cluster tightness, base
    color, and camera ring size all vary with the seed; cameras sit on a
    sphere around the cloud looking at its centroid.
    """
    rng = np.random.default_rng(seed)
    n_clusters = int(rng.integers(1, 5))
    weights = rng.dirichlet(np.ones(n_clusters))
    cluster_centers = rng.uniform(-1.0, 1.0, size=(n_clusters, 3))
    tightness = rng.uniform(0.05, 0.8)

    counts = np.maximum(np.round(weights * n_points).astype(int), 1)
    counts[0] += n_points - counts.sum()
    points = []
    for center, count in zip(cluster_centers, counts):
        sigma = tightness * rng.uniform(0.5, 1.5)
        points.append(center + rng.normal(scale=sigma, size=(count, 3)))
    centers = np.concatenate(points)[:n_points]
    scale = rng.uniform(0.5, 20.0)  # global scale is removed by normalization
    centers = centers * scale

    base = rng.uniform(0.1, 0.9, size=3)
    colors = np.clip(base + rng.normal(scale=0.08, size=(n_points, 3)), 0.0, 1.0)

    opacity = rng.uniform(0.2, 1.0, size=n_points).astype(np.float32)
    scales = rng.uniform(0.01, 0.3, size=(n_points, 3)).astype(np.float32)
    quats = rng.normal(size=(n_points, 4))
    quats = (quats / np.linalg.norm(quats, axis=1, keepdims=True)).astype(np.float32)

    if n_cameras is None:
        n_cameras = int(rng.integers(20, 48))
    centroid = centers.mean(axis=0)
    radius = np.quantile(np.linalg.norm(centers - centroid, axis=1), 0.95)
    radius = max(radius, 1e-3)
    cameras = []
    for i in range(n_cameras):
        direction = rng.normal(size=3)
        direction = direction / np.linalg.norm(direction)
        eye = centroid + direction * radius * rng.uniform(2.5, 4.0)
        cameras.append(
            make_camera(
                f"{scene_id}_v{i:03d}", eye, target=centroid,
                f_norm=rng.uniform(0.6, 1.0),
            )
        )

    scene = GaussianScene(
        scene_id=scene_id,
        centers=centers.astype(np.float32),
        colors=colors,
        opacity=opacity,
        scales=scales,
        rotations=quats,
        cameras=cameras,
    )
    return scene, planted_score(centers, colors)


def make_dataset(n_scenes, seed=0, n_points=600):
    """A dict of scenes plus their planted scores."""
    scenes = {}
    scores = {}
    for i in range(n_scenes):
        scene_id = f"syn_{i:04d}"
        scene, score = make_scene(scene_id, stable_scene_seed(seed, i), n_points)
        scenes[scene_id] = scene
        scores[scene_id] = score
    return scenes, scores


def stable_scene_seed(seed, index):
    return (int(seed) * 1_000_003 + index * 7919) % (2**32)


def write_scene_dir(scenes, directory):
    """Write scenes as PLY files plus one camera manifest; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    manifest_path = os.path.join(directory, "cameras.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for scene_id in sorted(scenes):
            scene = scenes[scene_id]
            with open(os.path.join(directory, f"{scene_id}.ply"), "wb") as ply:
                ply.write(write_gaussian_ply(scene))
            for cam in scene.cameras:
                fh.write(json.dumps(camera_manifest_record(scene_id, cam)) + "\n")
    return directory, manifest_path


def make_annotation_table(n_scenes, seed=0, views_per_scene=(3, 12)):
    """Synthetic view-level annotation rows (lists matching the CSV schema).

    Each scene gets a latent quality level; view scores jitter around it and
    the eight attribute scores jitter around the view score, so the total and
    attr8 aggregates stay strongly correlated like real annotator output.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_scenes):
        scene_id = f"anno_{i:04d}"
        quality = rng.uniform(15.0, 85.0)
        n_views = int(rng.integers(views_per_scene[0], views_per_scene[1] + 1))
        for v in range(n_views):
            view_total = float(np.clip(quality + rng.normal(scale=8.0), 0.0, 100.0))
            attr_scores = np.clip(
                view_total + rng.normal(scale=3.0, size=len(ATTRIBUTES)), 0.0, 100.0
            )
            rows.append(
                [scene_id, f"{scene_id}_view{v:03d}", round(view_total, 2)]
                + [round(float(a), 2) for a in attr_scores]
            )
    return rows


def write_annotation_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
    return path
