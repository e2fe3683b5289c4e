"""Deterministic geometric preprocessing.

Farthest point subsampling, percentile scene normalization, spherical-bin
candidate view selection, and the pinhole projection kernel used by view
tokenization.  Everything here is a pure function of its inputs; randomness
always enters through an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import CameraView

DEPTH_EPS = 1e-6
RADIUS_FLOOR = 1e-6
AZIMUTH_BINS = 8
ELEVATION_BINS = 4


@dataclass
class SceneNormalization:
    """Centroid shift and 95th-percentile radius scale applied to a scene."""

    centroid: np.ndarray
    radius: float
    applied: bool = True

    def apply_points(self, points):
        return (np.asarray(points, dtype=np.float64) - self.centroid) / self.radius

    def invert_points(self, points):
        return np.asarray(points, dtype=np.float64) * self.radius + self.centroid

    def apply_camera(self, camera: CameraView) -> CameraView:
        """Transform a camera so it stays consistent with normalized points.

        The camera center receives the same shift-and-scale as the points;
        the rotation and intrinsics are unchanged, and the translation is
        rederived so that ``center == -R^T t`` keeps holding.
        """
        new_center = self.apply_points(camera.center)
        new_translation = -camera.rotation @ new_center
        return CameraView(
            view_id=camera.view_id,
            fx=camera.fx,
            fy=camera.fy,
            cx=camera.cx,
            cy=camera.cy,
            width=camera.width,
            height=camera.height,
            rotation=camera.rotation.copy(),
            translation=new_translation,
        )


@dataclass
class ProjectedPoint:
    """Result of projecting one point through one camera.

    ``uv`` is in normalized image coordinates and ``depth`` is the
    camera-frame z; ``discarded`` marks points behind the camera or
    outside the unit image square.
    """

    uv: np.ndarray
    depth: float
    discarded: bool


def percentile_radius(distances, q=0.95):
    """Nearest-rank percentile: the value at rank ceil(q * n) of the sorted array."""
    distances = np.sort(np.asarray(distances, dtype=np.float64))
    n = len(distances)
    if n == 0:
        raise ValueError("percentile of empty distance set")
    rank = int(np.ceil(q * n))
    rank = min(max(rank, 1), n)
    return float(distances[rank - 1])


def fps_subsample(points, n, seed):
    """Greedy farthest-point subsampling, deterministic in the seed.

    Returns indices into ``points``.  When ``n`` covers the whole population
    all indices come back in original order.  Otherwise the first pick is
    ``seed mod n`` and each successive pick maximizes its minimum Euclidean
    distance to the already-selected set, with distance ties broken by the
    lowest index.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise ValueError("fps_subsample: empty point set")
    if n < 1:
        raise ValueError(f"fps_subsample: n must be >= 1, got {n}")
    total = len(points)
    if n >= total:
        return np.arange(total, dtype=np.int64)

    selected = np.empty(n, dtype=np.int64)
    first = int(seed) % n
    selected[0] = first
    min_dist = np.linalg.norm(points - points[first], axis=1)
    min_dist[first] = -1.0  # selected points can never be re-picked
    for k in range(1, n):
        pick = int(np.argmax(min_dist))  # argmax returns the lowest tied index
        selected[k] = pick
        dist = np.linalg.norm(points - points[pick], axis=1)
        np.minimum(min_dist, dist, out=min_dist)
        min_dist[pick] = -1.0
    return selected


def normalize_scene(scene):
    """Center a scene on its centroid and scale by the 95th-percentile radius.

    Returns ``(normalized_centers, normalized_cameras, SceneNormalization)``.
    The identical transform is applied to every camera center so projections
    are unchanged up to the uniform depth rescale.
    """
    centers = np.asarray(scene.centers, dtype=np.float64)
    if len(centers) < 1:
        raise ValueError("normalize_scene: scene has no primitives")
    centroid = centers.mean(axis=0)
    centered = centers - centroid
    radius = max(percentile_radius(np.linalg.norm(centered, axis=1)), RADIUS_FLOOR)
    info = SceneNormalization(centroid=centroid, radius=radius)
    cameras = [info.apply_camera(cam) for cam in scene.cameras]
    return centered / radius, cameras, info


def _direction_bins(directions):
    """Azimuth-elevation bin index per unit direction; degenerate bin for zeros."""
    directions = np.asarray(directions, dtype=np.float64)
    norms = np.linalg.norm(directions, axis=1)
    degenerate_bin = AZIMUTH_BINS * ELEVATION_BINS
    bins = np.full(len(directions), degenerate_bin, dtype=np.int64)
    ok = norms > 1e-12
    if np.any(ok):
        unit = directions[ok] / norms[ok, None]
        azimuth = np.arctan2(unit[:, 1], unit[:, 0])  # [-pi, pi]
        elevation = np.arcsin(np.clip(unit[:, 2], -1.0, 1.0))  # [-pi/2, pi/2]
        az_bin = np.clip(
            np.floor((azimuth + np.pi) / (2 * np.pi) * AZIMUTH_BINS),
            0,
            AZIMUTH_BINS - 1,
        ).astype(np.int64)
        el_bin = np.clip(
            np.floor((elevation + np.pi / 2) / np.pi * ELEVATION_BINS),
            0,
            ELEVATION_BINS - 1,
        ).astype(np.int64)
        bins[ok] = az_bin + AZIMUTH_BINS * el_bin
    return bins


def select_candidate_views(cameras, v_max=32, seed=0):
    """Select up to ``v_max`` probe cameras by uniform azimuth-elevation binning.

    Directions are measured from the (normalized) scene origin to each camera
    center.  When the scene has at most ``v_max`` cameras all of them are
    used.  Otherwise occupied bins are drained round-robin in a seeded order,
    one random member per visit, until ``v_max`` cameras are drawn; a camera
    sitting exactly at the origin lands in a reserved degenerate bin that is
    only drawn from once every regular bin is exhausted.  Output is sorted by
    view_id and deterministic for a fixed seed.
    """
    cameras = list(cameras)
    if len(cameras) <= v_max:
        return sorted(cameras, key=lambda c: c.view_id)

    rng = np.random.default_rng(seed)
    centers = np.stack([cam.center for cam in cameras])
    bins = _direction_bins(centers)
    degenerate_bin = AZIMUTH_BINS * ELEVATION_BINS

    members: dict[int, list[int]] = {}
    for idx, b in enumerate(bins):
        members.setdefault(int(b), []).append(idx)

    regular = sorted(b for b in members if b != degenerate_bin)
    order = [regular[i] for i in rng.permutation(len(regular))]
    if degenerate_bin in members:
        order.append(degenerate_bin)
    for b in order:
        pool = members[b]
        members[b] = [pool[i] for i in rng.permutation(len(pool))]

    chosen: list[int] = []
    while len(chosen) < v_max:
        progressed = False
        for b in order:
            if len(chosen) >= v_max:
                break
            if members[b]:
                chosen.append(members[b].pop())
                progressed = True
        if not progressed:
            break
    return sorted((cameras[i] for i in chosen), key=lambda c: c.view_id)


def project_points(points, camera):
    """Project an (N, 3) array through one camera.

    Returns ``(uv, depth, kept)`` where uv is (N, 2) in normalized image
    coordinates, depth is the camera-frame z, and ``kept`` is False for
    points behind the camera (depth <= DEPTH_EPS) or landing outside
    ``[0, 1)^2``.  uv rows of dropped points are zeroed.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    q = points @ camera.rotation.T + camera.translation
    depth = q[:, 2]
    in_front = depth > DEPTH_EPS
    safe_depth = np.where(in_front, depth, 1.0)
    fx, fy, cx, cy = camera.normalized_intrinsics
    u = fx * q[:, 0] / safe_depth + cx
    v = fy * q[:, 1] / safe_depth + cy
    uv = np.stack([u, v], axis=1)
    inside = (uv >= 0.0).all(axis=1) & (uv < 1.0).all(axis=1)
    kept = in_front & inside
    uv = np.where(kept[:, None], uv, 0.0)
    return uv, depth, kept


def project_point(p, camera):
    """Project a single 3-vector; discarding is a value, not an error."""
    uv, depth, kept = project_points(np.asarray(p, dtype=np.float64)[None, :], camera)
    return ProjectedPoint(uv=uv[0], depth=float(depth[0]), discarded=not bool(kept[0]))


def grid_cell_indices(uv, g):
    """Map normalized uv coordinates in [0, 1)^2 to flat G*G cell indices."""
    uv = np.asarray(uv, dtype=np.float64)
    col = np.floor(uv[..., 0] * g).astype(np.int64)
    row = np.floor(uv[..., 1] * g).astype(np.int64)
    return col + g * row


def assign_to_grid(projected, g):
    """Group non-discarded projected points into a G x G patch grid.

    Returns a dict mapping flat cell index ``floor(u*g) + g*floor(v*g)`` to
    the list of member point indices.  Discarded points appear in no cell.
    """
    if g < 1:
        raise ValueError(f"assign_to_grid: grid side must be >= 1, got {g}")
    cells: dict[int, list[int]] = {}
    for idx, pp in enumerate(projected):
        if pp.discarded:
            continue
        cell = int(grid_cell_indices(pp.uv, g))
        cells.setdefault(cell, []).append(idx)
    return cells
