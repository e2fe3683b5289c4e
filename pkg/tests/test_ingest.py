import io

import numpy as np
import pytest

from gsaes.ingest import (
    CameraView,
    DuplicateViewError,
    GaussianScene,
    PlyParseError,
    PlySchemaError,
    PlyTruncationError,
    SH_C0,
    load_camera_manifest,
    parse_gaussian_ply,
    sh_dc_to_rgb,
    write_gaussian_ply,
)


def build_ply(columns, declared_count=None, fmt="binary_little_endian 1.0"):
    """Hand-rolled PLY builder independent of write_gaussian_ply."""
    names = [name for name, _ in columns]
    n = len(columns[0][1])
    declared = n if declared_count is None else declared_count
    header = ["ply", f"format {fmt}", f"element vertex {declared}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    table = np.zeros(n, dtype=np.dtype([(name, "<f4") for name in names]))
    for name, values in columns:
        table[name] = np.asarray(values, dtype=np.float32)
    return ("\n".join(header) + "\n").encode() + table.tobytes()


def standard_columns(n=1):
    zeros = np.zeros(n)
    return [
        ("x", zeros), ("y", zeros), ("z", zeros),
        ("f_dc_0", zeros), ("f_dc_1", zeros), ("f_dc_2", zeros),
    ]


class TestShDcToRgb:
    def test_zero_coefficients(self):
        assert np.allclose(sh_dc_to_rgb([0, 0, 0]), [0.5, 0.5, 0.5])

    def test_saturates_high(self):
        # 0.5 / SH_C0 saturates the channel at 1
        rgb = sh_dc_to_rgb([1.772453851, 0, 0])
        assert np.allclose(rgb, [1.0, 0.5, 0.5], atol=1e-9)

    def test_clamps_low(self):
        assert np.allclose(sh_dc_to_rgb([-10, 0, 0]), [0.0, 0.5, 0.5])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            sh_dc_to_rgb([np.nan, 0, 0])

    def test_monotone_per_channel(self):
        values = np.linspace(-5, 5, 101)
        rgb = sh_dc_to_rgb(np.stack([values, values, values], axis=1))
        assert np.all(np.diff(rgb[:, 0]) >= 0)

    def test_idempotent_under_clamp(self):
        rgb = sh_dc_to_rgb(np.random.default_rng(0).normal(size=(50, 3)) * 4)
        assert np.array_equal(np.clip(rgb, 0, 1), rgb)


class TestParsePly:
    def test_single_vertex_at_origin(self):
        scene = parse_gaussian_ply(build_ply(standard_columns(1)))
        assert len(scene) == 1
        assert np.allclose(scene.centers[0], [0, 0, 0])
        assert np.allclose(scene.colors[0], [0.5, 0.5, 0.5])
        assert scene.cameras == []
        assert scene.opacity is None and scene.scales is None
        assert scene.rotations is None and scene.sh_rest is None

    def test_zero_vertices_rejected(self):
        data = build_ply(standard_columns(1))
        data = data.replace(b"element vertex 1", b"element vertex 0")
        with pytest.raises(PlySchemaError):
            parse_gaussian_ply(data[: data.index(b"end_header") + len(b"end_header\n")])

    def test_truncated_body(self):
        data = build_ply(standard_columns(3), declared_count=5)
        with pytest.raises(PlyTruncationError):
            parse_gaussian_ply(data)

    def test_missing_mandatory_property(self):
        cols = standard_columns(1)
        del cols[3:]  # drop all f_dc columns
        with pytest.raises(PlySchemaError):
            parse_gaussian_ply(build_ply(cols))

    def test_malformed_header_names_line(self):
        data = build_ply(standard_columns(1), fmt="ascii 1.0")
        with pytest.raises(PlyParseError, match="ascii"):
            parse_gaussian_ply(data)

    def test_accepts_file_like(self):
        scene = parse_gaussian_ply(io.BytesIO(build_ply(standard_columns(2))))
        assert len(scene) == 2

    def test_optional_blocks_parsed(self):
        rng = np.random.default_rng(3)
        n = 4
        quats = rng.normal(size=(n, 4))
        cols = standard_columns(n)
        cols += [("opacity", rng.uniform(size=n))]
        cols += [(f"scale_{i}", rng.uniform(size=n)) for i in range(3)]
        cols += [(f"rot_{i}", quats[:, i]) for i in range(4)]
        cols += [(f"f_rest_{i}", rng.normal(size=n)) for i in range(9)]
        scene = parse_gaussian_ply(build_ply(cols))
        assert scene.opacity.shape == (n,)
        assert scene.scales.shape == (n, 3)
        assert scene.sh_rest.shape == (n, 9)
        norms = np.linalg.norm(scene.rotations.astype(np.float64), axis=1)
        assert np.allclose(norms, 1.0, atol=1e-4)

    def test_direct_rgb_alias_bypasses_sh(self):
        n = 2
        cols = [
            ("x", [0, 1]), ("y", [0, 0]), ("z", [0, 0]),
            ("red", [0.25, 1.0]), ("green", [0.5, 0.0]), ("blue", [0.75, 0.5]),
        ]
        scene = parse_gaussian_ply(build_ply(cols))
        assert np.allclose(scene.colors[0], [0.25, 0.5, 0.75])
        assert scene.sh_dc is None

    def test_round_trip_bit_identical(self):
        rng = np.random.default_rng(7)
        n = 12
        cols = [
            ("x", rng.normal(size=n)), ("y", rng.normal(size=n)), ("z", rng.normal(size=n)),
            ("f_dc_0", rng.normal(size=n)), ("f_dc_1", rng.normal(size=n)),
            ("f_dc_2", rng.normal(size=n)),
            ("opacity", rng.uniform(size=n)),
        ]
        first = parse_gaussian_ply(build_ply(cols), scene_id="s")
        second = parse_gaussian_ply(write_gaussian_ply(first), scene_id="s")
        assert np.array_equal(first.centers, second.centers)
        assert np.array_equal(first.sh_dc, second.sh_dc)


class TestGaussianSceneInvariants:
    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            GaussianScene("s", centers=np.zeros((2, 3)), colors=np.zeros((3, 3)))

    def test_rejects_colors_outside_unit(self):
        with pytest.raises(ValueError):
            GaussianScene("s", centers=np.zeros((1, 3)), colors=np.full((1, 3), 1.5))

    def test_rejects_non_unit_quaternions(self):
        with pytest.raises(ValueError):
            GaussianScene(
                "s",
                centers=np.zeros((1, 3)),
                colors=np.full((1, 3), 0.5),
                rotations=np.array([[2.0, 0, 0, 0]]),
            )


def manifest_line(scene_id="scene_a", view_id="v0", R=None, t=(0, 0, -3.0),
                  fx=500.0, fy=500.0, cx=500.0, cy=500.0, width=1000, height=1000):
    import json
    R = np.eye(3) if R is None else np.asarray(R)
    return json.dumps({
        "scene_id": scene_id, "view_id": view_id,
        "fx": fx, "fy": fy, "cx": cx, "cy": cy,
        "width": width, "height": height,
        "R": [float(v) for v in R.reshape(-1)],
        "t": [float(v) for v in t],
    })


class TestCameraManifest:
    def test_center_derived_from_pose(self, tmp_path):
        path = tmp_path / "cams.jsonl"
        path.write_text(manifest_line() + "\n")
        cams = load_camera_manifest(path)["scene_a"]
        assert np.allclose(cams[0].center, [0, 0, 3])

    def test_normalized_intrinsics(self, tmp_path):
        path = tmp_path / "cams.jsonl"
        path.write_text(manifest_line(fx=500.0, width=1000) + "\n")
        cam = load_camera_manifest(path)["scene_a"][0]
        assert cam.normalized_intrinsics[0] == pytest.approx(0.5)

    def test_non_orthonormal_rotation_rejected(self, tmp_path):
        R = np.eye(3)
        R[0, 0] = 1.1
        path = tmp_path / "cams.jsonl"
        path.write_text(manifest_line(view_id="bad_view", R=R) + "\n")
        with pytest.raises(ValueError, match="bad_view"):
            load_camera_manifest(path)

    def test_duplicate_view_id_rejected(self, tmp_path):
        path = tmp_path / "cams.jsonl"
        path.write_text(manifest_line() + "\n" + manifest_line() + "\n")
        with pytest.raises(DuplicateViewError):
            load_camera_manifest(path)

    def test_same_view_id_in_other_scene_allowed(self, tmp_path):
        path = tmp_path / "cams.jsonl"
        path.write_text(
            manifest_line(scene_id="a") + "\n" + manifest_line(scene_id="b") + "\n"
        )
        cams = load_camera_manifest(path)
        assert set(cams) == {"a", "b"}

    def test_center_consistency_on_every_load(self, tmp_path):
        rng = np.random.default_rng(5)
        lines = []
        for i in range(6):
            # random rotations via QR
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            lines.append(manifest_line(view_id=f"v{i}", R=q, t=rng.normal(size=3)))
        path = tmp_path / "cams.jsonl"
        path.write_text("\n".join(lines) + "\n")
        for cam in load_camera_manifest(path)["scene_a"]:
            recomputed = -cam.rotation.T @ cam.translation
            assert np.max(np.abs(recomputed - cam.center)) < 1e-6


class TestCameraViewValidation:
    def test_rejects_zero_dimensions(self):
        with pytest.raises(ValueError):
            CameraView("v", fx=1, fy=1, cx=0, cy=0, width=0, height=10,
                       rotation=np.eye(3), translation=np.zeros(3))

    def test_rejects_negative_focal(self):
        with pytest.raises(ValueError):
            CameraView("v", fx=-1, fy=1, cx=0, cy=0, width=10, height=10,
                       rotation=np.eye(3), translation=np.zeros(3))
