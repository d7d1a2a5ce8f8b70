"""Deterministic software rasterizer.

Orbit camera looking at the origin, z-buffered triangles, barycentric
interpolation of normals, Lambert + ambient shading and binary alpha.

Camera space: x right, y up, z along the viewing direction (depth > 0 in
front of the camera). Light directions are given in camera space and point
from the surface towards the light.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .images import as_float, sample_windows

UNIFORM_GRAY = "uniform_gray"
REAL_RGB = "real_rgb"
TEXTURE_MODES = (UNIFORM_GRAY, REAL_RGB)

DEFAULT_LIGHT = tuple(np.array([-0.4, 0.5, -1.0]) / np.linalg.norm([-0.4, 0.5, -1.0]))

# triangles per vectorized chunk are capped so that chunk_size * bbox_area stays near this
_CHUNK_BUDGET = 1 << 16


@dataclass(frozen=True)
class Pose:
    azimuth: float
    elevation: float
    distance: float
    in_plane_rotation: float = 0.0

    def __post_init__(self):
        values = (self.azimuth, self.elevation, self.distance, self.in_plane_rotation)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"pose angles must be finite: {self}")
        if not self.distance > 0:
            raise ValidationError(f"pose distance must be positive, got {self.distance}")


def _interval(value, name):
    lo, hi = (float(v) for v in value)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValidationError(f"{name} must be a finite interval with lower <= upper, got {value}")
    return (lo, hi)


@dataclass(frozen=True)
class PoseSpec:
    azimuth_range: tuple = (0.0, 360.0)
    elevation_range: tuple = (-10.0, 30.0)
    distance_range: tuple = (2.2, 2.8)
    in_plane_range: tuple = (-10.0, 10.0)

    def __post_init__(self):
        for name in ("azimuth_range", "elevation_range", "distance_range", "in_plane_range"):
            object.__setattr__(self, name, _interval(getattr(self, name), name))
        if not self.distance_range[0] > 0:
            raise ValidationError("distance_range must be positive")


@dataclass(frozen=True)
class Camera:
    fov: float = 40.0
    width: int = 64
    height: int = 64
    near: float = 0.05
    far: float = 100.0

    def __post_init__(self):
        if not 0 < self.fov < 180:
            raise ValidationError(f"camera fov must be in (0, 180), got {self.fov}")
        if int(self.width) != self.width or int(self.height) != self.height or self.width < 1 or self.height < 1:
            raise ValidationError(f"camera size must be positive integers, got {self.width}x{self.height}")
        if not 0 < self.near < self.far:
            raise ValidationError(f"camera planes need 0 < near < far, got {self.near}, {self.far}")

    @property
    def focal(self):
        """Focal length in pixels (vertical field of view)."""
        return (self.height / 2.0) / math.tan(math.radians(self.fov) / 2.0)


@dataclass(frozen=True, eq=False)
class Material:
    texture_mode: str = UNIFORM_GRAY
    albedo_gray: float = 0.5
    texture_image: np.ndarray | None = None
    ambient: float = 0.3
    light_direction: tuple = DEFAULT_LIGHT

    def __post_init__(self):
        if self.texture_mode not in TEXTURE_MODES:
            raise ValidationError(f"texture_mode must be one of {TEXTURE_MODES}, got {self.texture_mode!r}")
        if self.texture_mode == REAL_RGB and self.texture_image is None:
            raise ValidationError("real_rgb texture mode requires a texture image")
        if not 0 <= self.albedo_gray <= 1 or not 0 <= self.ambient <= 1:
            raise ValidationError("albedo_gray and ambient must lie in [0, 1]")
        light = np.asarray(self.light_direction, dtype=np.float64)
        norm = np.linalg.norm(light)
        if light.shape != (3,) or not norm > 0:
            raise ValidationError("light_direction must be a non-zero 3-vector")
        object.__setattr__(self, "light_direction", tuple(light / norm))


def sample_pose(spec, rng):
    """Draw a pose uniformly from ``spec``; draws happen in field order."""
    az = rng.uniform(*spec.azimuth_range)
    el = rng.uniform(*spec.elevation_range)
    dist = rng.uniform(*spec.distance_range)
    rot = rng.uniform(*spec.in_plane_range)
    # rng.uniform(a, a) returns a, so point intervals are exact
    return Pose(float(az), float(el), float(dist), float(rot))


def view_matrix(pose):
    """Rotation ``R`` and eye position such that ``p_cam = R @ (p - eye)``."""
    az, el = math.radians(pose.azimuth), math.radians(pose.elevation)
    eye = pose.distance * np.array(
        [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
    )
    forward = -eye / np.linalg.norm(eye)
    world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    if np.linalg.norm(right) < 1e-9:
        # looking straight up or down
        right = np.array([math.cos(az), 0.0, -math.sin(az)])
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    rot = np.stack([right, up, forward])
    roll = math.radians(pose.in_plane_rotation)
    c, s = math.cos(roll), math.sin(roll)
    roll_m = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return roll_m @ rot, eye


def to_camera(pose, points):
    rot, eye = view_matrix(pose)
    return (np.asarray(points, dtype=np.float64) - eye) @ rot.T


def project_points(pose, camera, points):
    """Project ``(N, 3)`` model points; returns ``(uv, depth, clipped)``.

    ``uv`` are continuous pixel coordinates with the origin at the top-left
    image corner (pixel centres at +0.5). ``clipped`` marks points at or
    behind the near plane, whose ``uv`` is meaningless.
    """
    pc = to_camera(pose, np.atleast_2d(points))
    depth = pc[:, 2]
    clipped = depth <= camera.near
    safe = np.where(clipped, 1.0, depth)
    f = camera.focal
    u = camera.width / 2.0 + f * pc[:, 0] / safe
    v = camera.height / 2.0 - f * pc[:, 1] / safe
    return np.stack([u, v], axis=1), depth, clipped


def project(pose, camera, p):
    """Project a single point to ``((u, v), depth)``; raises if it must be clipped."""
    uv, depth, clipped = project_points(pose, camera, np.asarray(p, dtype=np.float64)[None])
    if clipped[0]:
        raise ValidationError("point lies behind the near plane")
    return (float(uv[0, 0]), float(uv[0, 1])), float(depth[0])


def shade(albedo, normal, material):
    """Lambert + ambient: ``albedo * (ambient + (1 - ambient) * max(0, n.l))``, clamped."""
    albedo = np.asarray(albedo, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    cos = np.maximum(0.0, normal @ np.asarray(material.light_direction))
    factor = material.ambient + (1.0 - material.ambient) * cos
    return np.clip(albedo * np.asarray(factor)[..., None], 0.0, 1.0)


def empty_image(camera):
    return np.zeros((camera.height, camera.width, 4))


def _coverage(uv, inv_z, camera):
    """Resolve visible triangle per pixel.

    Returns flat pixel indices, winning triangle ids and barycentric weights.
    """
    w, h = camera.width, camera.height
    a, b, c = uv[:, 0], uv[:, 1], uv[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    lo = uv.min(axis=1)
    hi = uv.max(axis=1)
    x0 = np.maximum(np.ceil(lo[:, 0] - 0.5), 0).astype(np.int64)
    y0 = np.maximum(np.ceil(lo[:, 1] - 0.5), 0).astype(np.int64)
    x1 = np.minimum(np.floor(hi[:, 0] - 0.5), w - 1).astype(np.int64)
    y1 = np.minimum(np.floor(hi[:, 1] - 0.5), h - 1).astype(np.int64)
    live = (np.abs(area) > 1e-12) & (x1 >= x0) & (y1 >= y0)
    ids = np.flatnonzero(live)
    if not len(ids):
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty((0, 3))

    bw = x1[ids] - x0[ids] + 1
    bh = y1[ids] - y0[ids] + 1
    order = ids[np.lexsort((ids, bw * bh))]
    pix_all, tri_all, bary_all, invz_all = [], [], [], []
    start = 0
    while start < len(order):
        # grow the chunk while the padded grid stays within budget
        end = start + 1
        mw = x1[order[start]] - x0[order[start]] + 1
        mh = y1[order[start]] - y0[order[start]] + 1
        while end < len(order):
            t = order[end]
            nw = max(mw, x1[t] - x0[t] + 1)
            nh = max(mh, y1[t] - y0[t] + 1)
            if (end - start + 1) * nw * nh > _CHUNK_BUDGET:
                break
            mw, mh = nw, nh
            end += 1
        chunk = order[start:end]
        start = end

        gx = x0[chunk, None, None] + np.arange(mw)[None, None, :]
        gy = y0[chunk, None, None] + np.arange(mh)[None, :, None]
        inside = (gx <= x1[chunk, None, None]) & (gy <= y1[chunk, None, None])
        px = gx + 0.5
        py = gy + 0.5
        ca, cb, cc = a[chunk], b[chunk], c[chunk]
        ar = area[chunk][:, None, None]

        def edge(p, q):
            return (q[:, None, None, 0] - p[:, None, None, 0]) * (py - p[:, None, None, 1]) - (
                q[:, None, None, 1] - p[:, None, None, 1]
            ) * (px - p[:, None, None, 0])

        w0 = edge(cb, cc) / ar
        w1 = edge(cc, ca) / ar
        w2 = edge(ca, cb) / ar
        inside &= (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        ti, yi, xi = np.nonzero(inside)
        bary = np.stack([w0[ti, yi, xi], w1[ti, yi, xi], w2[ti, yi, xi]], axis=1)
        tri = chunk[ti]
        pix_all.append(gy[ti, yi, 0] * w + gx[ti, 0, xi])
        tri_all.append(tri)
        bary_all.append(bary)
        invz_all.append(np.sum(bary * inv_z[tri], axis=1))

    pix = np.concatenate(pix_all)
    tri = np.concatenate(tri_all)
    bary = np.concatenate(bary_all)
    invz = np.concatenate(invz_all)
    # nearest fragment wins (largest 1/z); ties go to the lowest triangle index
    order = np.lexsort((tri, -invz, pix))
    pix, tri, bary, invz = pix[order], tri[order], bary[order], invz[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    keep = first & (invz >= 1.0 / camera.far)
    return pix[keep], tri[keep], bary[keep]


def screen_space_texture(texture, mask):
    """Stretch ``texture`` over the bounding box of ``mask``; zeros elsewhere."""
    out = np.zeros(mask.shape + (3,))
    ys, xs = np.nonzero(mask)
    if not len(ys):
        return out
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    tex = as_float(texture)[..., :3]
    th, tw = tex.shape[:2]
    out[y0:y1, x0:x1] = sample_windows(tex, [(0, 0, tw, th)], y1 - y0, x1 - x0)[0]
    return out


def rasterize(mesh, pose, camera, material):
    """Render ``mesh`` to an ``(H, W, 4)`` float RGBA image with binary alpha."""
    image = empty_image(camera)
    if mesh.is_empty:
        return image
    pc = to_camera(pose, mesh.vertices)
    corners_idx = mesh.vertex_index
    z = pc[:, 2]
    # triangles touching the near plane are dropped whole
    visible = np.all(z[corners_idx] > camera.near, axis=1)
    if not visible.any():
        return image
    f = camera.focal
    safe = np.where(z > camera.near, z, 1.0)
    uv_v = np.stack([camera.width / 2.0 + f * pc[:, 0] / safe,
                     camera.height / 2.0 - f * pc[:, 1] / safe], axis=1)
    tri_ids = np.flatnonzero(visible)
    uv = uv_v[corners_idx[tri_ids]]
    inv_z = 1.0 / z[corners_idx[tri_ids]]
    pix, local, bary = _coverage(uv, inv_z, camera)
    if not len(pix):
        return image
    tri = tri_ids[local]

    rot, _ = view_matrix(pose)
    normals_cam = mesh.normals @ rot.T
    n = np.einsum("pk,pkj->pj", bary, normals_cam[mesh.normal_index[tri]])
    pos = np.einsum("pk,pkj->pj", bary, pc[corners_idx[tri]])
    length = np.linalg.norm(n, axis=1)
    bad = length < 1e-12
    if bad.any():
        from .geometry import face_normals

        n[bad] = face_normals(pc[corners_idx[tri[bad]]])
        length[bad] = 1.0
    n /= length[:, None]
    # two-sided lighting: orient normals towards the viewer
    n[np.sum(n * pos, axis=1) > 0] *= -1.0

    ys, xs = np.divmod(pix, camera.width)
    if material.texture_mode == UNIFORM_GRAY:
        albedo = np.full((len(pix), 3), material.albedo_gray)
    else:
        mask = np.zeros((camera.height, camera.width), dtype=bool)
        mask[ys, xs] = True
        albedo = screen_space_texture(material.texture_image, mask)[ys, xs]
    image[ys, xs, :3] = shade(albedo, n, material)
    image[ys, xs, 3] = 1.0
    return image


def alpha_bbox(alpha):
    """Tight ``(x0, y0, x1, y1)`` box (exclusive) of non-zero alpha, or None."""
    ys, xs = np.nonzero(np.asarray(alpha) > 0)
    if not len(ys):
        return None
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1
