"""Triangle meshes: Wavefront OBJ parsing/serialization, procedural fixtures,
and normalization to a unit bounding box.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMeshError, ParseError, ValidationError

log = logging.getLogger(__name__)

NORMAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Mesh:
    """Indexed triangle mesh.

    ``triangles`` has shape ``(T, 3, 3)``: for each corner of each triangle the
    (position, normal, texcoord) indices, all 0-based.
    """

    vertices: np.ndarray
    normals: np.ndarray
    texcoords: np.ndarray
    triangles: np.ndarray
    category: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "normals", np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "texcoords", np.asarray(self.texcoords, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3, 3))
        for arr in (self.vertices, self.normals, self.texcoords, self.triangles):
            arr.setflags(write=False)
        self.validate()

    def validate(self):
        tris = self.triangles
        for axis, (name, arr) in enumerate(
            (("vertex", self.vertices), ("normal", self.normals), ("texcoord", self.texcoords))
        ):
            idx = tris[:, :, axis]
            if idx.size and (idx.min() < 0 or idx.max() >= len(arr)):
                raise ValidationError(f"{name} index out of range")
        if len(self.normals):
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise ValidationError("normals must have unit length")

    @property
    def vertex_index(self):
        return self.triangles[:, :, 0]

    @property
    def normal_index(self):
        return self.triangles[:, :, 1]

    @property
    def texcoord_index(self):
        return self.triangles[:, :, 2]

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    def bounds(self):
        if not len(self.vertices):
            raise EmptyMeshError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def corners(self):
        """Positions of every triangle corner, shape ``(T, 3, 3)``."""
        return self.vertices[self.vertex_index]

    def with_category(self, category):
        return Mesh(self.vertices, self.normals, self.texcoords, self.triangles, category)

    def same_geometry(self, other, atol=0.0):
        return (
            self.triangles.shape == other.triangles.shape
            and np.array_equal(self.triangles, other.triangles)
            and all(
                a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol)
                for a, b in (
                    (self.vertices, other.vertices),
                    (self.normals, other.normals),
                    (self.texcoords, other.texcoords),
                )
            )
        )


def face_normals(corners):
    """Unit normals of triangles given as ``(T, 3, 3)`` corner positions."""
    n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    out = np.zeros_like(n)
    ok = length[:, 0] > 0
    out[ok] = n[ok] / length[ok]
    # degenerate triangles still need a valid unit normal
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def planar_texcoords(vertices):
    """Project vertices onto the plane of the two largest bbox extents, scaled to [0,1]^2."""
    vertices = np.asarray(vertices, dtype=np.float64)
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    extent = hi - lo
    axes = np.sort(np.argsort(-extent, kind="stable")[:2])
    uv = np.zeros((len(vertices), 2))
    for k, a in enumerate(axes):
        uv[:, k] = (vertices[:, a] - lo[a]) / extent[a] if extent[a] > 0 else 0.5
    return uv


def _resolve_index(token, count, kind, lineno):
    try:
        i = int(token)
    except ValueError:
        raise ParseError(f"bad {kind} index {token!r}", lineno) from None
    if i == 0:
        raise ParseError(f"{kind} index 0 is invalid (indices are 1-based)", lineno)
    resolved = i - 1 if i > 0 else count + i
    if not 0 <= resolved < count:
        raise ParseError(f"{kind} index {i} out of range (have {count})", lineno)
    return resolved


def parse_obj(text, category=""):
    """Parse the v/vn/vt/f subset of Wavefront OBJ into a triangle ``Mesh``.

    Polygons are fan-triangulated from their first corner. Faces without
    normals get flat per-face normals; faces without texcoords get a planar
    projection of their vertices.
    """
    verts, norms, uvs = [], [], []
    faces = []  # (lineno, [(v, t|None, n|None), ...])
    ignored = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                verts.append([float(x) for x in rest[:3]])
                if len(rest) < 3:
                    raise ValueError
            elif tag == "vn":
                if len(rest) < 3:
                    raise ValueError
                norms.append([float(x) for x in rest[:3]])
            elif tag == "vt":
                if len(rest) < 2:
                    raise ValueError
                uvs.append([float(x) for x in rest[:2]])
            elif tag == "f":
                if len(rest) < 3:
                    raise ParseError("face needs at least 3 corners", lineno)
                corners = []
                for tok in rest:
                    parts = tok.split("/")
                    v = _resolve_index(parts[0], len(verts), "vertex", lineno)
                    t = n = None
                    if len(parts) > 1 and parts[1]:
                        t = _resolve_index(parts[1], len(uvs), "texcoord", lineno)
                    if len(parts) > 2 and parts[2]:
                        n = _resolve_index(parts[2], len(norms), "normal", lineno)
                    corners.append((v, t, n))
                faces.append((lineno, corners))
            elif tag not in ignored:
                ignored.add(tag)
                log.warning("ignoring unsupported OBJ record %r (line %d)", tag, lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed {tag!r} record", lineno) from None

    if not verts or not faces:
        raise EmptyMeshError("OBJ text contains no faces")

    vertices = np.array(verts, dtype=np.float64)
    normals = [np.asarray(n, dtype=np.float64) for n in norms]
    for i, n in enumerate(normals):
        length = np.linalg.norm(n)
        if length > 0 and abs(length - 1.0) > 1e-12:
            normals[i] = n / length
    texcoords = list(uvs)
    planar_base = None

    triangles = []
    for lineno, corners in faces:
        fan = [(corners[0], corners[i], corners[i + 1]) for i in range(1, len(corners) - 1)]
        for tri in fan:
            need_normal = any(c[2] is None or np.linalg.norm(normals[c[2]]) == 0 for c in tri)
            if need_normal:
                fn = face_normals(vertices[[c[0] for c in tri]][None])[0]
                normals.append(fn)
                flat = len(normals) - 1
            entry = []
            for v, t, n in tri:
                if t is None:
                    if planar_base is None:
                        planar_base = len(texcoords)
                        texcoords.extend(planar_texcoords(vertices).tolist())
                    t = planar_base + v
                entry.append((v, flat if need_normal else n, t))
            triangles.append(entry)

    return Mesh(vertices, np.array(normals), np.array(texcoords), np.array(triangles), category)


def _fmt(x):
    return repr(float(x))


def serialize_obj(mesh):
    """Write ``mesh`` as OBJ text using the same subset ``parse_obj`` reads."""
    lines = [f"# category {mesh.category}"] if mesh.category else []
    lines += [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"vt {_fmt(u)} {_fmt(v)}" for u, v in mesh.texcoords]
    lines += [f"vn {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.normals]
    for tri in mesh.triangles:
        lines.append("f " + " ".join(f"{v + 1}/{t + 1}/{n + 1}" for v, n, t in tri))
    return "\n".join(lines) + "\n"


def load_obj(path, category=""):
    with open(path, encoding="utf-8") as fh:
        return parse_obj(fh.read(), category)


def save_obj(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_obj(mesh))


def normalize_mesh(mesh):
    """Centre the bounding box on the origin and scale its largest extent to 1."""
    if mesh.is_empty or not len(mesh.vertices):
        raise EmptyMeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if not extent > 0:
        raise ValidationError("mesh has zero extent")
    center = (lo + hi) / 2.0
    vertices = (mesh.vertices - center) / extent
    return Mesh(vertices, mesh.normals, mesh.texcoords, mesh.triangles, mesh.category)


def transform_mesh(mesh, scale=(1.0, 1.0, 1.0), rotation=None):
    """Apply ``diag(scale)`` then ``rotation`` to positions, inverse-transpose to normals."""
    m = np.diag(np.asarray(scale, dtype=np.float64))
    if rotation is not None:
        m = np.asarray(rotation, dtype=np.float64) @ m
    vertices = mesh.vertices @ m.T
    normals = mesh.normals @ np.linalg.inv(m)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(lengths > 0, lengths, 1.0)
    return Mesh(vertices, normals, mesh.texcoords, mesh.triangles, mesh.category)


def edge_count(triangles):
    """Number of distinct undirected edges among ``(T, 3)`` position-index triangles."""
    tri = np.asarray(triangles).reshape(-1, 3)
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    return len(np.unique(edges, axis=0))


def euler_characteristic(mesh):
    used = np.unique(mesh.vertex_index)
    return len(used) - edge_count(mesh.vertex_index) + len(mesh.triangles)


# --- procedural fixtures -------------------------------------------------

FIXTURE_KINDS = ("cube", "uv_sphere", "torus", "extruded_polygon")

_FIXTURE_DEFAULTS = {
    "cube": {"size": 1.0},
    "uv_sphere": {"stacks": 8, "slices": 12, "radius": 0.5},
    "torus": {"rings": 16, "sides": 8, "major_radius": 0.5, "minor_radius": 0.2},
    "extruded_polygon": {"sides": 6, "radius": 0.5, "depth": 0.5},
}


@dataclass(frozen=True)
class FixtureSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def resolved(self):
        if self.kind not in FIXTURE_KINDS:
            raise ValidationError(f"unknown fixture kind {self.kind!r}; expected one of {FIXTURE_KINDS}")
        defaults = _FIXTURE_DEFAULTS[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        p = {**defaults, **self.params}
        checks = {
            "stacks": 2, "slices": 3, "rings": 3, "sides": 3,
        }
        for name, low in checks.items():
            if name in p and (int(p[name]) != p[name] or p[name] < low):
                raise ValidationError(f"{self.kind}: {name} must be an integer >= {low}, got {p[name]}")
        for name in ("size", "radius", "major_radius", "minor_radius", "depth"):
            if name in p and not p[name] > 0:
                raise ValidationError(f"{self.kind}: {name} must be positive, got {p[name]}")
        if self.kind == "torus" and not p["minor_radius"] < p["major_radius"]:
            raise ValidationError("torus: minor_radius must be smaller than major_radius")
        return p


def _flat_mesh(vertices, faces, category=""):
    # one flat normal per triangle; planar texcoords per vertex
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    normals = face_normals(vertices[faces])
    tris = np.stack(
        [faces, np.repeat(np.arange(len(faces))[:, None], 3, axis=1), faces], axis=-1
    )
    return Mesh(vertices, normals, planar_texcoords(vertices), tris, category)


def _smooth_mesh(vertices, normals, faces, category=""):
    faces = np.asarray(faces, dtype=np.int64)
    tris = np.stack([faces, faces, faces], axis=-1)
    return Mesh(vertices, normals, planar_texcoords(vertices), tris, category)


def _cube(size):
    h = size / 2.0
    v = np.array(
        [[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)], dtype=np.float64
    )
    # outward-wound quads as index lists into v (x-major bit order: x*4 + y*2 + z)
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # -x, +x
        (0, 4, 5, 1), (2, 3, 7, 6),  # -y, +y
        (0, 2, 6, 4), (1, 5, 7, 3),  # -z, +z
    ]
    faces = [t for a, b, c, d in quads for t in ((a, b, c), (a, c, d))]
    return _flat_mesh(v, faces)


def _uv_sphere(stacks, slices, radius):
    verts = [(0.0, radius, 0.0)]
    for i in range(1, stacks):
        phi = math.pi * i / stacks
        for j in range(slices):
            theta = 2.0 * math.pi * j / slices
            verts.append((radius * math.sin(phi) * math.cos(theta), radius * math.cos(phi),
                          -radius * math.sin(phi) * math.sin(theta)))
    verts.append((0.0, -radius, 0.0))
    v = np.array(verts)
    bottom = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * slices + (j % slices)

    faces = []
    for j in range(slices):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, stacks - 1):
        for j in range(slices):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces += [(a, c, d), (a, d, b)]
    for j in range(slices):
        faces.append((bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)))
    return _smooth_mesh(v, v / radius, faces)


def _torus(rings, sides, major, minor):
    verts, norms = [], []
    for i in range(rings):
        u = 2.0 * math.pi * i / rings
        cu, su = math.cos(u), math.sin(u)
        for j in range(sides):
            w = 2.0 * math.pi * j / sides
            cw, sw = math.cos(w), math.sin(w)
            verts.append(((major + minor * cw) * cu, minor * sw, -(major + minor * cw) * su))
            norms.append((cw * cu, sw, -cw * su))

    def idx(i, j):
        return (i % rings) * sides + (j % sides)

    faces = []
    for i in range(rings):
        for j in range(sides):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
    return _smooth_mesh(np.array(verts), np.array(norms), faces)


def _extruded_polygon(sides, radius, depth):
    ang = 2.0 * math.pi * np.arange(sides) / sides + math.pi / 2.0
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    front = np.column_stack([ring, np.full(sides, depth / 2.0)])
    back = np.column_stack([ring, np.full(sides, -depth / 2.0)])
    v = np.vstack([front, back])
    faces = []
    for i in range(1, sides - 1):
        faces.append((0, i, i + 1))
        faces.append((sides, sides + i + 1, sides + i))
    for i in range(sides):
        j = (i + 1) % sides
        faces += [(i, sides + i, sides + j), (i, sides + j, j)]
    return _flat_mesh(v, faces)


def make_fixture(spec, category=""):
    """Build a deterministic procedural mesh from a ``FixtureSpec``."""
    p = spec.resolved()
    if spec.kind == "cube":
        mesh = _cube(p["size"])
    elif spec.kind == "uv_sphere":
        mesh = _uv_sphere(int(p["stacks"]), int(p["slices"]), p["radius"])
    elif spec.kind == "torus":
        mesh = _torus(int(p["rings"]), int(p["sides"]), p["major_radius"], p["minor_radius"])
    else:
        mesh = _extruded_polygon(int(p["sides"]), p["radius"], p["depth"])
    return mesh.with_category(category) if category else mesh
