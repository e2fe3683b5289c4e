"""Parsing and validation of 3D Gaussian Splatting scenes and camera manifests.

Scenes arrive as binary-little-endian PLY files carrying per-Gaussian
attributes (position, spherical-harmonic DC color, and optional opacity /
scale / rotation / higher-order SH blocks).  Cameras arrive separately as a
newline-delimited JSON manifest of calibrated intrinsics and extrinsics.
Everything is validated on load; downstream code can assume the invariants
enforced here.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field

import numpy as np

# l = 0 real spherical-harmonic basis constant: 1 / (2 * sqrt(pi)).
SH_C0 = 0.28209479177387814

ROTATION_ORTHO_TOL = 1e-5
CENTER_CONSISTENCY_TOL = 1e-6
QUATERNION_NORM_TOL = 1e-4


class PlyParseError(ValueError):
    """Malformed PLY header or body."""


class PlyTruncationError(PlyParseError):
    """Header vertex count disagrees with the body length."""


class PlySchemaError(PlyParseError):
    """Required vertex properties are missing or unusable."""


class CameraValidationError(ValueError):
    """A camera record violates the geometric invariants."""


class DuplicateViewError(ValueError):
    """Two camera records share a view_id within one scene."""


@dataclass
class CameraView:
    """One calibrated camera: pinhole intrinsics plus world-to-camera pose.

    ``rotation`` maps world coordinates into the camera frame,
    ``translation`` completes the rigid transform, and ``center`` is the
    camera position in world coordinates (``-R^T t``).  ``normalized_intrinsics``
    holds ``(fx/width, fy/height, cx/width, cy/height)`` so that projected
    image coordinates land in the unit square regardless of resolution.
    """

    view_id: str
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    center: np.ndarray = field(init=False)
    normalized_intrinsics: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.width <= 0 or self.height <= 0:
            raise CameraValidationError(
                f"view {self.view_id!r}: image size must be positive, "
                f"got {self.width}x{self.height}"
            )
        if self.fx <= 0 or self.fy <= 0:
            raise CameraValidationError(
                f"view {self.view_id!r}: focal lengths must be positive, "
                f"got fx={self.fx}, fy={self.fy}"
            )
        residual = self.rotation.T @ self.rotation - np.eye(3)
        if np.max(np.abs(residual)) > ROTATION_ORTHO_TOL:
            raise CameraValidationError(
                f"view {self.view_id!r}: rotation is not orthonormal "
                f"(max |R^T R - I| = {np.max(np.abs(residual)):.3e})"
            )
        self.center = -self.rotation.T @ self.translation
        self.normalized_intrinsics = np.array(
            [
                self.fx / self.width,
                self.fy / self.height,
                self.cx / self.width,
                self.cy / self.height,
            ],
            dtype=np.float64,
        )

    def validate(self):
        """Re-check derived quantities; raises if the instance was mutated."""
        recomputed = -self.rotation.T @ self.translation
        if np.max(np.abs(recomputed - self.center)) > CENTER_CONSISTENCY_TOL:
            raise CameraValidationError(
                f"view {self.view_id!r}: stored center disagrees with -R^T t"
            )
        residual = self.rotation.T @ self.rotation - np.eye(3)
        if np.max(np.abs(residual)) > ROTATION_ORTHO_TOL:
            raise CameraValidationError(
                f"view {self.view_id!r}: rotation is not orthonormal"
            )


@dataclass
class GaussianScene:
    """Raw parsed Gaussian primitives for one scene plus its camera set.

    ``sh_dc`` keeps the untouched DC coefficients so a scene can be written
    back to PLY bit-identically; ``colors`` is their clamped RGB image.
    Optional attribute blocks are ``None`` when absent from the source file,
    never zero-filled.
    """

    scene_id: str
    centers: np.ndarray
    colors: np.ndarray
    opacity: np.ndarray | None = None
    scales: np.ndarray | None = None
    rotations: np.ndarray | None = None
    sh_rest: np.ndarray | None = None
    sh_dc: np.ndarray | None = None
    cameras: list[CameraView] = field(default_factory=list)

    def __post_init__(self):
        self.centers = np.asarray(self.centers)
        self.colors = np.asarray(self.colors)
        n = len(self.centers)
        if n < 1:
            raise ValueError(f"scene {self.scene_id!r}: empty scenes are rejected")
        for name in ("colors", "opacity", "scales", "rotations", "sh_rest", "sh_dc"):
            block = getattr(self, name)
            if block is not None and len(block) != n:
                raise ValueError(
                    f"scene {self.scene_id!r}: {name} has {len(block)} rows, "
                    f"expected {n}"
                )
        if np.min(self.colors) < 0.0 or np.max(self.colors) > 1.0:
            raise ValueError(f"scene {self.scene_id!r}: colors outside [0, 1]")
        if self.rotations is not None:
            norms = np.linalg.norm(self.rotations, axis=1)
            if np.max(np.abs(norms - 1.0)) > QUATERNION_NORM_TOL:
                raise ValueError(
                    f"scene {self.scene_id!r}: rotations are not unit quaternions"
                )

    def __len__(self):
        return len(self.centers)


def sh_dc_to_rgb(dc):
    """Convert SH DC coefficients to RGB in [0, 1].

    Component-wise ``clamp(0.5 + SH_C0 * dc, 0, 1)``, the export convention
    of mainstream Gaussian-splatting implementations.  Accepts a single
    3-vector or an (N, 3) array.
    """
    dc = np.asarray(dc, dtype=np.float64)
    if not np.all(np.isfinite(dc)):
        raise ValueError("sh_dc_to_rgb: non-finite DC coefficient")
    return np.clip(0.5 + SH_C0 * dc, 0.0, 1.0)


_HEADER_PROP_RE = re.compile(r"^property\s+(\w+)\s+(\S+)$")

_PLY_DTYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
}


def _parse_ply_header(stream):
    """Read the PLY header, returning (vertex_count, [(name, dtype)], body_offset)."""
    lines = []
    while True:
        raw = stream.readline()
        if not raw:
            raise PlyParseError("unexpected end of stream inside PLY header")
        line = raw.decode("ascii", errors="replace").strip()
        lines.append(line)
        if line == "end_header":
            break
        if len(lines) > 4096:
            raise PlyParseError("PLY header exceeds 4096 lines without end_header")

    if not lines or lines[0] != "ply":
        raise PlyParseError(f"not a PLY stream, first line {lines[0]!r}")

    vertex_count = None
    properties = []
    in_vertex_element = False
    for line in lines[1:]:
        if not line or line.startswith("comment"):
            continue
        if line == "end_header":
            break
        if line.startswith("format"):
            if line != "format binary_little_endian 1.0":
                raise PlyParseError(f"unsupported PLY format line: {line!r}")
            continue
        if line.startswith("element"):
            parts = line.split()
            if len(parts) != 3:
                raise PlyParseError(f"malformed element line: {line!r}")
            if parts[1] == "vertex":
                if vertex_count is not None:
                    raise PlyParseError(f"duplicate vertex element: {line!r}")
                try:
                    vertex_count = int(parts[2])
                except ValueError:
                    raise PlyParseError(f"non-integer vertex count: {line!r}") from None
                in_vertex_element = True
            else:
                in_vertex_element = False
            continue
        if line.startswith("property"):
            if not in_vertex_element:
                continue
            match = _HEADER_PROP_RE.match(line)
            if match is None:
                raise PlyParseError(f"malformed property line: {line!r}")
            type_name, prop_name = match.groups()
            if type_name not in _PLY_DTYPES:
                raise PlyParseError(f"unsupported property type in line: {line!r}")
            properties.append((prop_name, _PLY_DTYPES[type_name]))
            continue
        raise PlyParseError(f"unrecognized PLY header line: {line!r}")

    if vertex_count is None:
        raise PlyParseError("PLY header declares no vertex element")
    return vertex_count, properties


def _collect_indexed(record, prefix):
    """Columns named ``{prefix}{i}`` stacked in index order, or None."""
    names = [n for n in record.dtype.names if n.startswith(prefix)]
    if not names:
        return None
    names.sort(key=lambda n: int(n[len(prefix):]))
    expected = [f"{prefix}{i}" for i in range(len(names))]
    if names != expected:
        raise PlySchemaError(f"non-contiguous property block {prefix}*: {names}")
    return np.stack([record[n].astype(np.float32) for n in names], axis=1)


def parse_gaussian_ply(stream, scene_id="scene"):
    """Parse a binary-little-endian 3DGS PLY byte-stream into a GaussianScene.

    Accepts either a bytes object or a binary file-like.  Colors come from
    the SH DC coefficients via :func:`sh_dc_to_rgb`; files exported with
    direct ``red/green/blue`` properties bypass the conversion.  The returned
    scene has an empty camera list (cameras live in a separate manifest).
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    vertex_count, properties = _parse_ply_header(stream)
    if vertex_count < 1:
        raise PlySchemaError("PLY declares zero vertices; empty scenes are rejected")

    names = [name for name, _ in properties]
    for required in ("x", "y", "z"):
        if required not in names:
            raise PlySchemaError(f"missing mandatory vertex property {required!r}")
    has_dc = all(f"f_dc_{i}" in names for i in range(3))
    has_rgb = all(c in names for c in ("red", "green", "blue"))
    if not has_dc and not has_rgb:
        raise PlySchemaError(
            "missing mandatory color properties (f_dc_0..2 or red/green/blue)"
        )

    dtype = np.dtype([(name, np_type) for name, np_type in properties])
    body = stream.read()
    expected_bytes = vertex_count * dtype.itemsize
    if len(body) < expected_bytes:
        raise PlyTruncationError(
            f"header declares {vertex_count} vertices "
            f"({expected_bytes} bytes) but body holds {len(body)} bytes"
        )
    record = np.frombuffer(body[:expected_bytes], dtype=dtype)

    centers = np.stack(
        [record["x"], record["y"], record["z"]], axis=1
    ).astype(np.float32)

    sh_dc = None
    if has_dc:
        sh_dc = np.stack(
            [record[f"f_dc_{i}"].astype(np.float32) for i in range(3)], axis=1
        )
        colors = sh_dc_to_rgb(sh_dc)
    else:
        raw = np.stack([record["red"], record["green"], record["blue"]], axis=1)
        colors = raw.astype(np.float64)
        if raw.dtype == np.uint8:
            colors = colors / 255.0
        colors = np.clip(colors, 0.0, 1.0)

    opacity = record["opacity"].astype(np.float32) if "opacity" in names else None

    scales = _collect_indexed(record, "scale_")
    if scales is not None and scales.shape[1] != 3:
        raise PlySchemaError(f"scale block has {scales.shape[1]} components, expected 3")

    rotations = _collect_indexed(record, "rot_")
    if rotations is not None:
        if rotations.shape[1] != 4:
            raise PlySchemaError(
                f"rotation block has {rotations.shape[1]} components, expected 4"
            )
        norms = np.linalg.norm(rotations.astype(np.float64), axis=1)
        bad = np.nonzero(norms < 1e-12)[0]
        if bad.size:
            raise PlyParseError(f"zero-norm quaternion at vertex {bad[0]}")
        rotations = (rotations / norms[:, None]).astype(np.float32)

    sh_rest = _collect_indexed(record, "f_rest_")

    return GaussianScene(
        scene_id=scene_id,
        centers=centers,
        colors=colors,
        opacity=opacity,
        scales=scales,
        rotations=rotations,
        sh_rest=sh_rest,
        sh_dc=sh_dc,
    )


def write_gaussian_ply(scene):
    """Serialize a GaussianScene back to binary-little-endian PLY bytes.

    Writes the raw DC coefficients when the scene carries them (so a
    parse -> write -> parse round trip is bit-identical in centers and DC);
    otherwise the inverse of the RGB conversion is stored.
    """
    n = len(scene)
    columns = [
        ("x", scene.centers[:, 0]),
        ("y", scene.centers[:, 1]),
        ("z", scene.centers[:, 2]),
    ]
    dc = scene.sh_dc
    if dc is None:
        dc = (np.asarray(scene.colors, dtype=np.float64) - 0.5) / SH_C0
    for i in range(3):
        columns.append((f"f_dc_{i}", dc[:, i]))
    if scene.sh_rest is not None:
        for i in range(scene.sh_rest.shape[1]):
            columns.append((f"f_rest_{i}", scene.sh_rest[:, i]))
    if scene.opacity is not None:
        columns.append(("opacity", scene.opacity))
    if scene.scales is not None:
        for i in range(3):
            columns.append((f"scale_{i}", scene.scales[:, i]))
    if scene.rotations is not None:
        for i in range(4):
            columns.append((f"rot_{i}", scene.rotations[:, i]))

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name, _ in columns]
    header.append("end_header")

    table = np.zeros(n, dtype=np.dtype([(name, "<f4") for name, _ in columns]))
    for name, values in columns:
        table[name] = np.asarray(values, dtype=np.float32)
    return ("\n".join(header) + "\n").encode("ascii") + table.tobytes()


def load_camera_manifest(path):
    """Load a newline-delimited JSON camera manifest.

    Each record is ``{scene_id, view_id, fx, fy, cx, cy, width, height,
    R: 9 row-major floats, t: 3 floats}``.  Returns ``{scene_id: [CameraView]}``
    with centers and normalized intrinsics derived, never read from the file.
    """
    per_scene: dict[str, list[CameraView]] = {}
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CameraValidationError(
                    f"{path}:{lineno}: invalid JSON record: {exc}"
                ) from None
            try:
                scene_id = rec["scene_id"]
                view = CameraView(
                    view_id=rec["view_id"],
                    fx=float(rec["fx"]),
                    fy=float(rec["fy"]),
                    cx=float(rec["cx"]),
                    cy=float(rec["cy"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    rotation=np.array(rec["R"], dtype=np.float64).reshape(3, 3),
                    translation=np.array(rec["t"], dtype=np.float64),
                )
            except KeyError as exc:
                raise CameraValidationError(
                    f"{path}:{lineno}: missing field {exc}"
                ) from None
            key = (scene_id, view.view_id)
            if key in seen:
                raise DuplicateViewError(
                    f"{path}:{lineno}: duplicate view_id {view.view_id!r} "
                    f"in scene {scene_id!r}"
                )
            seen.add(key)
            per_scene.setdefault(scene_id, []).append(view)
    return per_scene


def camera_manifest_record(scene_id, view):
    """One manifest JSON record (as a dict) for a CameraView."""
    return {
        "scene_id": scene_id,
        "view_id": view.view_id,
        "fx": view.fx,
        "fy": view.fy,
        "cx": view.cx,
        "cy": view.cy,
        "width": view.width,
        "height": view.height,
        "R": [float(v) for v in view.rotation.reshape(-1)],
        "t": [float(v) for v in view.translation],
    }
