"""Deterministic software rasterizer.

Stands in for the GPU render-and-capture stage: perspective projection from a
camera pose, z-buffered triangle fill with flat per-face colors, and a fixed
fill rule (top-left, pixel centers at +0.5) so identical inputs always produce
bit-identical frames. No lighting, no textures; the pipeline around the
imagery is the subject, not the imagery.

Screen space is x right, y down, with pixel (row, col) sampled at
(col + 0.5, row + 0.5). A triangle is normalized to positive signed area in
that space; a pixel center exactly on an edge belongs to the triangle only if
the edge is a top edge (dy == 0, dx > 0) or a left edge (dy < 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import quat
from .frames import Frame, ValidationError
from .object_pool import ObjectKind, ObjectState

MARKER_BLOCK = 32
MARKER_BLUE = 0xA5

# palette for meshes loaded from text files, cycled per face
FACE_PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (255, 225, 25),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
], dtype=np.uint8)


@dataclass
class CameraIntrinsics:
    vertical_fov_deg: float = 60.0
    near: float = 0.1
    far: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.vertical_fov_deg < 180.0):
            raise ValidationError("vertical fov must be in (0, 180) degrees")
        if not (0.0 < self.near < self.far):
            raise ValidationError("need 0 < near < far")


@dataclass(eq=False)
class MeshAsset:
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int vertex indices
    face_colors: np.ndarray  # (m, 3) uint8

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.face_colors = np.asarray(self.face_colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.face_colors) != len(self.triangles):
            raise ValidationError("need one color per triangle")
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValidationError("triangle index out of range")


def unit_cube() -> MeshAsset:
    """Axis-aligned cube of side 1 at the origin, one color per face."""
    v = np.array([
        (-0.5, -0.5, -0.5), (0.5, -0.5, -0.5), (0.5, 0.5, -0.5), (-0.5, 0.5, -0.5),
        (-0.5, -0.5, 0.5), (0.5, -0.5, 0.5), (0.5, 0.5, 0.5), (-0.5, 0.5, 0.5),
    ])
    faces = {
        "+x": ((1, 2, 6), (1, 6, 5), (255, 0, 0)),
        "-x": ((0, 4, 7), (0, 7, 3), (0, 255, 0)),
        "+y": ((3, 7, 6), (3, 6, 2), (0, 0, 255)),
        "-y": ((0, 1, 5), (0, 5, 4), (255, 255, 0)),
        "+z": ((4, 5, 6), (4, 6, 7), (255, 0, 255)),
        "-z": ((0, 3, 2), (0, 2, 1), (0, 255, 255)),
    }
    tris, colors = [], []
    for t0, t1, color in faces.values():
        tris += [t0, t1]
        colors += [color, color]
    return MeshAsset(v, np.array(tris), np.array(colors))


CUBE_FACE_COLORS = {
    "+x": (255, 0, 0), "-x": (0, 255, 0),
    "+y": (0, 0, 255), "-y": (255, 255, 0),
    "+z": (255, 0, 255), "-z": (0, 255, 255),
}


def load_mesh_text(text: str) -> MeshAsset:
    """Parse the minimal mesh format: `v x y z` and `f i j k` lines.

    Face indices are 1-based. Colors come from FACE_PALETTE in face order.
    """
    verts: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v" and len(parts) == 4:
            verts.append(tuple(float(p) for p in parts[1:]))
        elif parts[0] == "f" and len(parts) == 4:
            tris.append(tuple(int(p) - 1 for p in parts[1:]))
        else:
            raise ValidationError(f"bad mesh line {lineno}: {line!r}")
    colors = FACE_PALETTE[np.arange(len(tris)) % len(FACE_PALETTE)]
    return MeshAsset(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3), colors)


def load_mesh_file(path) -> MeshAsset:
    with open(path, "r", encoding="utf-8") as f:
        return load_mesh_text(f.read())


# ---------------------------------------------------------------------------
# rasterization


def _clip_near(tri_view: np.ndarray, near: float) -> list[np.ndarray]:
    """Clip one view-space triangle against the near plane (z <= -near).

    Returns 0, 1 or 2 triangles as (3, 3) arrays.
    """
    inside = tri_view[:, 2] <= -near
    n_in = int(inside.sum())
    if n_in == 3:
        return [tri_view]
    if n_in == 0:
        return []
    poly = []
    for i in range(3):
        a, b = tri_view[i], tri_view[(i + 1) % 3]
        a_in, b_in = inside[i], inside[(i + 1) % 3]
        if a_in:
            poly.append(a)
        if a_in != b_in:
            t = (-near - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    return [np.stack((poly[0], poly[i], poly[i + 1])) for i in range(1, len(poly) - 1)]


def _project(view: np.ndarray, f: float, aspect: float, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Project view-space points (z < 0) to screen space; returns (xy, inv_depth)."""
    inv = 1.0 / (-view[:, 2])
    ndc_x = (f / aspect) * view[:, 0] * inv
    ndc_y = f * view[:, 1] * inv
    sx = (ndc_x * 0.5 + 0.5) * width
    sy = (0.5 - ndc_y * 0.5) * height
    return np.stack((sx, sy), axis=1), inv


def _edge_accepts_boundary(a: np.ndarray, b: np.ndarray) -> bool:
    # top edge: horizontal, interior below; left edge: pointing up the screen
    dx, dy = b[0] - a[0], b[1] - a[1]
    return dy < 0.0 or (dy == 0.0 and dx > 0.0)


def _raster_triangle(img: np.ndarray, zbuf: np.ndarray, pts: np.ndarray, inv: np.ndarray, color):
    height, width = zbuf.shape
    area2 = (pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1]) - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0])
    if area2 == 0.0:
        return
    if area2 < 0.0:
        pts = pts[[0, 2, 1]]
        inv = inv[[0, 2, 1]]
        area2 = -area2

    x0 = max(0, int(np.ceil(pts[:, 0].min() - 0.5)))
    x1 = min(width - 1, int(np.floor(pts[:, 0].max() - 0.5)))
    y0 = max(0, int(np.ceil(pts[:, 1].min() - 0.5)))
    y1 = min(height - 1, int(np.floor(pts[:, 1].max() - 0.5)))
    if x0 > x1 or y0 > y1:
        return

    px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
    py = (np.arange(y0, y1 + 1, dtype=np.float64) + 0.5)[:, None]

    mask = None
    bary = []
    for ia, ib in ((1, 2), (2, 0), (0, 1)):  # edge (a, b) is opposite vertex index of bary weight
        a, b = pts[ia], pts[ib]
        e = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        accept = (e > 0.0) | ((e == 0.0) & _edge_accepts_boundary(a, b))
        mask = accept if mask is None else (mask & accept)
        bary.append(e / area2)

    if not mask.any():
        return
    inv_px = bary[0] * inv[0] + bary[1] * inv[1] + bary[2] * inv[2]
    zregion = zbuf[y0 : y1 + 1, x0 : x1 + 1]
    update = mask & (inv_px > zregion)
    if not update.any():
        return
    zregion[update] = inv_px[update]
    img[y0 : y1 + 1, x0 : x1 + 1, :3][update] = color


def render(
    objects: Iterable[ObjectState],
    assets: Mapping[int, MeshAsset],
    cam_position,
    cam_rotation,
    intrinsics: CameraIntrinsics,
    width: int,
    height: int,
    background: Sequence[int] = (0, 0, 0),
    frame_seq: int = 0,
) -> Frame:
    """Render the scene from the given camera pose to an RGBA8 frame.

    Right-handed camera space: identity rotation looks down -z with +y up.
    Uncovered pixels take the background color; alpha is 255 everywhere.
    """
    if width <= 0 or height <= 0 or width % 2 or height % 2:
        raise ValidationError("render size must be positive and even")
    if not quat.is_unit(cam_rotation):
        raise ValidationError("camera rotation must be a unit quaternion")

    img = np.empty((height, width, 4), dtype=np.uint8)
    img[:, :, :3] = np.asarray(background, dtype=np.uint8)
    img[:, :, 3] = 255
    # inverse depth buffer primed at 1/far, which culls anything beyond far
    zbuf = np.full((height, width), 1.0 / intrinsics.far, dtype=np.float64)

    cam_pos = np.asarray(cam_position, dtype=np.float64).reshape(3)
    r_cam = quat.to_matrix(cam_rotation)
    f = 1.0 / np.tan(np.radians(intrinsics.vertical_fov_deg) * 0.5)
    aspect = width / height

    for obj in objects:
        if obj.kind is ObjectKind.CAMERA:
            continue
        mesh = assets[obj.id]
        if len(mesh.triangles) == 0:
            continue
        t = obj.transform
        world = (t.scale * mesh.vertices) @ quat.to_matrix(t.rotation).T + t.position
        # subtract positions before rotating so equal camera/object shifts cancel exactly
        view = (world - cam_pos) @ r_cam
        for tri_idx, tri in enumerate(mesh.triangles):
            color = mesh.face_colors[tri_idx]
            for clipped in _clip_near(view[tri], intrinsics.near):
                pts, inv = _project(clipped, f, aspect, width, height)
                _raster_triangle(img, zbuf, pts, inv, color)

    return Frame.from_rgba_array(img, frame_seq)


def render_marker(marker_id: int, width: int, height: int, background: Sequence[int] = (0, 0, 0), frame_seq: int = 0) -> Frame:
    """Background frame with the marker id encoded in a 32x32 block at the origin.

    Block color: R = id & 0xff, G = (id >> 8) & 0xff, B = 0xa5. The odd blue
    keeps marker pixels clearly apart from the scene palette.
    """
    if not (0 <= marker_id < 2**16):
        raise ValidationError(f"marker id {marker_id} out of range [0, 65536)")
    img = np.empty((height, width, 4), dtype=np.uint8)
    img[:, :, :3] = np.asarray(background, dtype=np.uint8)
    img[:, :, 3] = 255
    img[: min(MARKER_BLOCK, height), : min(MARKER_BLOCK, width), :3] = (
        marker_id & 0xFF,
        (marker_id >> 8) & 0xFF,
        MARKER_BLUE,
    )
    return Frame.from_rgba_array(img, frame_seq)
