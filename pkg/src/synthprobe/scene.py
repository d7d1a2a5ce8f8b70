"""Background/texture configuration matrix, compositing and persisted datasets."""
from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ManifestError, NoObjectError, ValidationError
from .images import LUMA, as_float, as_uint8, fit_to_canvas, read_image, resize_bilinear, write_image
from .patches import Box
from .render import (
    DEFAULT_LIGHT,
    REAL_RGB,
    UNIFORM_GRAY,
    Camera,
    Material,
    PoseSpec,
    alpha_bbox,
    rasterize,
    sample_pose,
)

WHITE = "white"
REAL_GRAY = "real_gray"
BACKGROUND_MODES = (REAL_RGB, REAL_GRAY, WHITE)

PRESETS = {
    "RR-RR": (REAL_RGB, REAL_RGB),
    "W-RR": (WHITE, REAL_RGB),
    "W-UG": (WHITE, UNIFORM_GRAY),
    "RR-UG": (REAL_RGB, UNIFORM_GRAY),
    "RG-UG": (REAL_GRAY, UNIFORM_GRAY),
    "RG-RR": (REAL_GRAY, REAL_RGB),
}

VIEWS = ("front", "side", "none")
PROVENANCES = ("virtual", "real")


def preset(name):
    """Return ``(background_mode, texture_mode)`` for a named configuration."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}"
        ) from None


def view_tag(azimuth):
    """Front within 45 deg of azimuth 0, side within 45 deg of 90 or 270, else none."""
    a = azimuth % 360.0
    if min(a, 360.0 - a) <= 45.0:
        return "front"
    if abs(a - 90.0) <= 45.0 or abs(a - 270.0) <= 45.0:
        return "side"
    return "none"


def to_grayscale(image):
    """Replace every pixel by its Rec.601 luma on all three channels."""
    y = as_float(image)[..., :3] @ LUMA
    return np.repeat(y[..., None], 3, axis=-1)


@dataclass(frozen=True, eq=False)
class SceneConfig:
    background_mode: str = REAL_RGB
    texture_mode: str = REAL_RGB
    pose_spec: PoseSpec = field(default_factory=PoseSpec)
    camera: Camera = field(default_factory=Camera)
    background_pool: tuple = ()
    texture_pool: tuple = ()
    ambient: float = 0.3
    light_direction: tuple = DEFAULT_LIGHT
    albedo_gray: float = 0.5

    def __post_init__(self):
        if self.background_mode not in BACKGROUND_MODES:
            raise ValidationError(f"background_mode must be one of {BACKGROUND_MODES}")
        if self.texture_mode not in (REAL_RGB, UNIFORM_GRAY):
            raise ValidationError(f"texture_mode must be real_rgb or uniform_gray")
        object.__setattr__(self, "background_pool", tuple(self.background_pool))
        if isinstance(self.texture_pool, dict):
            pools = {str(k): tuple(v) for k, v in sorted(self.texture_pool.items())}
            if any(not v for v in pools.values()):
                raise ValidationError("every per-category texture pool must be non-empty")
            object.__setattr__(self, "texture_pool", pools)
        else:
            object.__setattr__(self, "texture_pool", tuple(self.texture_pool))
        if self.background_mode != WHITE and not self.background_pool:
            raise ValidationError(f"{self.background_mode} background needs a non-empty background_pool")
        if self.texture_mode == REAL_RGB and not self.texture_pool:
            raise ValidationError("real_rgb texture needs a non-empty texture_pool")

    @classmethod
    def from_preset(cls, name, **kwargs):
        bg, tx = preset(name)
        return cls(background_mode=bg, texture_mode=tx, **kwargs)

    def textures_for(self, category):
        """Texture candidates for ``category``; a plain pool is shared by all."""
        if isinstance(self.texture_pool, dict):
            if category not in self.texture_pool:
                raise ValidationError(f"no texture pool for category {category!r}")
            return self.texture_pool[category]
        return self.texture_pool

    def material(self, texture=None):
        return Material(
            texture_mode=self.texture_mode,
            albedo_gray=self.albedo_gray,
            texture_image=texture,
            ambient=self.ambient,
            light_direction=self.light_direction,
        )


@dataclass(frozen=True)
class BoxLabel:
    category: str
    box: Box
    view: str = "none"

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValidationError(f"view tag must be one of {VIEWS}, got {self.view!r}")


@dataclass(eq=False)
class LabeledImage:
    id: str
    image: np.ndarray
    boxes: list
    provenance: str = "virtual"
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.image = as_uint8(self.image)
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"provenance must be one of {PROVENANCES}")
        h, w = self.image.shape[:2]
        for label in self.boxes:
            if not label.box.within(w, h):
                raise ValidationError(f"{self.id}: box {label.box.as_tuple()} outside {w}x{h} image")

    @property
    def size(self):
        h, w = self.image.shape[:2]
        return w, h

    @property
    def categories(self):
        return sorted({b.category for b in self.boxes})

    def labels_equal(self, other):
        return self.id == other.id and self.provenance == other.provenance and self.boxes == other.boxes


@dataclass(eq=False)
class Dataset:
    items: list
    manifest_path: Path | None = None
    seed: int | None = None

    def __post_init__(self):
        seen = set()
        for item in self.items:
            if item.id in seen:
                raise ValidationError(f"duplicate item id {item.id!r}")
            seen.add(item.id)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def categories(self):
        return sorted({b.category for item in self.items for b in item.boxes})

    def category_counts(self):
        counts = {}
        for item in self.items:
            for cat in item.categories:
                counts[cat] = counts.get(cat, 0) + 1
        return counts

    def subset(self, keep):
        keep = set(keep)
        return Dataset([it for it in self.items if it.id in keep], seed=self.seed)

    def merged(self, other):
        return Dataset(list(self.items) + list(other.items), seed=self.seed)


def background_for(config, rng):
    cam = config.camera
    if config.background_mode == WHITE:
        return np.ones((cam.height, cam.width, 3))
    src = config.background_pool[int(rng.integers(len(config.background_pool)))]
    bg = fit_to_canvas(src, cam.height, cam.width)
    if config.background_mode == REAL_GRAY:
        bg = to_grayscale(bg)
    return bg


def composite(fg, config, rng, *, category="object", view="none", item_id="item", keep_mask=False):
    """Alpha-blend a rendered foreground over a background chosen by ``config``."""
    fg = np.asarray(fg, dtype=np.float64)
    bbox = alpha_bbox(fg[..., 3])
    if bbox is None:
        raise NoObjectError(f"{item_id}: foreground has no covered pixels")
    bg = background_for(config, rng)
    alpha = fg[..., 3:4]
    image = fg[..., :3] * alpha + bg * (1.0 - alpha)
    return LabeledImage(
        id=item_id,
        image=as_uint8(image),
        boxes=[BoxLabel(category, Box(*bbox), view)],
        provenance="virtual",
        mask=(fg[..., 3] > 0) if keep_mask else None,
    )


def mesh_categories(meshes):
    cats = sorted({m.category for m in meshes})
    return cats, {c: [m for m in meshes if m.category == c] for c in cats}


def render_item(meshes_by_cat, category, config, rng, item_id, keep_mask=False):
    choices = meshes_by_cat[category]
    mesh = choices[int(rng.integers(len(choices)))]
    pose = sample_pose(config.pose_spec, rng)
    texture = None
    if config.texture_mode == REAL_RGB:
        pool = config.textures_for(category)
        texture = pool[int(rng.integers(len(pool)))]
    fg = rasterize(mesh, pose, config.camera, config.material(texture))
    return composite(fg, config, rng, category=category, view=view_tag(pose.azimuth),
                     item_id=item_id, keep_mask=keep_mask)


def generate_batch(meshes, config, n, seed, *, prefix="v", provenance="virtual", keep_masks=False):
    """Render ``n`` labeled images, round-robin over the meshes' categories.

    Item ``i`` draws everything from its own stream seeded by ``(seed, i)``,
    so results do not depend on generation order.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not meshes:
        raise ValidationError("need at least one mesh")
    cats, by_cat = mesh_categories(meshes)
    width = len(str(n - 1))
    items = []
    for i in range(n):
        rng = np.random.default_rng([int(seed), i])
        item_id = f"{prefix}{i:0{width}d}"
        try:
            item = render_item(by_cat, cats[i % len(cats)], config, rng, item_id, keep_masks)
        except (ValidationError, RuntimeError) as exc:
            raise type(exc)(f"item {i}: {exc}") from exc
        item.provenance = provenance
        items.append(item)
    return Dataset(items, seed=seed)


# --- manifests -------------------------------------------------------------

def _record(item, file):
    return {
        "id": item.id,
        "file": file,
        "provenance": item.provenance,
        "boxes": [
            {"category": b.category, "x0": b.box.x0, "y0": b.box.y0, "x1": b.box.x1,
             "y1": b.box.y1, "view": b.view}
            for b in item.boxes
        ],
    }


def write_manifest(ds, path, image_format="ppm"):
    """Write a JSON-lines manifest plus one lossless image file per item."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img_dir = path.parent / "images"
    img_dir.mkdir(exist_ok=True)
    lines = []
    for item in ds.items:
        rel = f"images/{item.id}.{image_format}"
        write_image(path.parent / rel, item.image)
        lines.append(json.dumps(_record(item, rel)))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    ds.manifest_path = path
    return path


def _parse_record(rec, lineno, base):
    try:
        item_id = rec["id"]
        file = rec["file"]
        provenance = rec.get("provenance", "real")
        raw_boxes = rec["boxes"]
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"missing field {exc}", lineno) from None
    if not isinstance(item_id, str) or not isinstance(raw_boxes, list):
        raise ManifestError("id must be a string and boxes a list", lineno)
    try:
        image = read_image(base / file)
    except OSError as exc:
        raise ManifestError(f"{item_id}: cannot read image {file}: {exc}", lineno) from None
    h, w = image.shape[:2]
    boxes = []
    for b in raw_boxes:
        try:
            coords = [b[k] for k in ("x0", "y0", "x1", "y1")]
            if not all(isinstance(c, int) for c in coords):
                raise ValidationError("box coordinates must be integers")
            box = Box(*coords)
            label = BoxLabel(str(b["category"]), box, b.get("view", "none"))
        except (KeyError, TypeError, ValidationError) as exc:
            raise ManifestError(f"{item_id}: bad box {b!r}: {exc}", lineno) from None
        if not box.within(w, h):
            raise ManifestError(f"{item_id}: box {box.as_tuple()} outside {w}x{h} image", lineno)
        boxes.append(label)
    try:
        return LabeledImage(item_id, image, boxes, provenance)
    except ValidationError as exc:
        raise ManifestError(str(exc), lineno) from None


def read_manifest(path):
    path = Path(path)
    items, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from None
            item = _parse_record(rec, lineno, path.parent)
            if item.id in seen:
                raise ManifestError(f"duplicate id {item.id!r}", lineno)
            seen.add(item.id)
            items.append(item)
    return Dataset(items, manifest_path=path)


def subsample_real(ds, k, seed, categories=None):
    """Pick ``k`` images per category uniformly without replacement.

    Images are kept whole, so multi-object images bring all their boxes.
    """
    cats = ds.categories if categories is None else list(categories)
    rng = np.random.default_rng(int(seed))
    chosen = set()
    for cat in cats:
        pool = [it.id for it in ds.items if cat in it.categories]
        if len(pool) < k:
            raise InsufficientDataError(
                f"category {cat!r} has {len(pool)} images, {k} requested"
            )
        picks = rng.choice(len(pool), size=k, replace=False) if k else []
        chosen.update(pool[i] for i in picks)
    return Dataset([it for it in ds.items if it.id in chosen], seed=seed)


# --- procedural image pools ----------------------------------------------

BACKGROUND_GAIN = 0.5
TEXTURE_GAIN = 0.3


def _smooth_noise(rng, size, cells, channels):
    grid = rng.uniform(0.0, 1.0, size=(cells + 1, cells + 1, channels))
    return resize_bilinear(grid, size, size)


def make_pool(kind, count, seed, size=64, hue=None):
    """Procedural RGB images: smooth coloured noise and colour gradients.

    ``kind`` selects the contrast: ``"background"`` images keep half of it,
    ``"texture"`` images under a third. With ``hue`` in [0, 1) every image
    is a tint of one colour near that hue, so a category's textures share
    a look. Returned as uint8 arrays.
    """
    rng = np.random.default_rng(int(seed))
    out = []
    for i in range(count):
        if i % 2 == 0:
            cells = int(rng.integers(2, 5))
            img = _smooth_noise(rng, size, cells, 3)
        else:
            c0, c1 = rng.uniform(0.0, 1.0, size=(2, 3))
            theta = rng.uniform(0.0, 2.0 * math.pi)
            yy, xx = np.mgrid[0:size, 0:size] / max(1, size - 1)
            t = (np.cos(theta) * xx + np.sin(theta) * yy)
            t = (t - t.min()) / max(1e-9, t.max() - t.min())
            img = c0 * (1 - t[..., None]) + c1 * t[..., None]
        mean = img.mean(axis=(0, 1), keepdims=True)
        gain = TEXTURE_GAIN if kind == "texture" else BACKGROUND_GAIN
        if hue is not None:
            h = (hue + rng.normal(0.0, 0.03)) % 1.0
            color = np.array(colorsys.hsv_to_rgb(h, rng.uniform(0.55, 0.9), rng.uniform(0.6, 0.95)))
            lum = img @ LUMA
            img = color * (1.0 + gain * (lum - lum.mean()))[..., None]
        else:
            img = mean + gain * (img - mean)
        out.append(as_uint8(np.clip(img, 0.0, 1.0)))
    return out
