"""Desk-scale toy world: procedural shape families, image pools and a "real" domain.

Stand-in for CAD models plus a real photo collection. Virtual images come
from one set of shape variants and pools; "real" images (the real training
pool and the test set) are RR-RR renders of held-out variants over held-out
backgrounds and textures, with different lighting and mild sensor noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..geometry import FixtureSpec, make_fixture, normalize_mesh, transform_mesh
from ..images import as_float, as_uint8
from ..render import Camera, PoseSpec
from ..scene import Dataset, SceneConfig, generate_batch, make_pool
from .config import derive_seed

CATEGORY_KINDS = {"box": "cube", "ball": "uv_sphere", "ring": "torus", "prism": "extruded_polygon"}
CATEGORIES = tuple(CATEGORY_KINDS)
# each category's "real" textures share a hue, as photographed objects do
CATEGORY_HUES = {"box": 0.08, "ball": 0.98, "ring": 0.15, "prism": 0.6}

REAL_AMBIENT = 0.4
REAL_LIGHT = tuple(np.array([0.5, 0.6, -1.0]) / np.linalg.norm([0.5, 0.6, -1.0]))
REAL_NOISE = 0.01


def _rot_y(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_x(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def shape_variant(category, rng):
    """One random member of a category's shape family, centred with unit extent.

    Families are wide (slabs to towers, flat discs to spheres) so that a
    handful of variants covers noticeably less of the family than many do.
    """
    kind = CATEGORY_KINDS[category]
    if kind == "cube":
        mesh = make_fixture(FixtureSpec("cube"))
        scale = (1.0, *_log_uniform(rng, 0.25, 1.6, 2))
        rot = _rot_y(rng.uniform(-30, 30))
    elif kind == "uv_sphere":
        spec = FixtureSpec("uv_sphere", {"stacks": int(rng.integers(6, 11)), "slices": int(rng.integers(8, 15))})
        mesh = make_fixture(spec)
        scale = (1.0, *_log_uniform(rng, 0.4, 1.5, 2))
        rot = _rot_y(rng.uniform(-30, 30))
    elif kind == "torus":
        spec = FixtureSpec("torus", {"rings": 18, "sides": 8, "minor_radius": rng.uniform(0.07, 0.3)})
        mesh = make_fixture(spec)
        scale = (1.0, 1.0, _log_uniform(rng, 0.5, 1.5))
        rot = _rot_y(rng.uniform(-30, 30)) @ _rot_x(rng.uniform(45, 110))
    else:
        # thin triangular plates: a box family member never looks like one
        spec = FixtureSpec("extruded_polygon", {"sides": 3, "depth": rng.uniform(0.2, 0.6)})
        mesh = make_fixture(spec)
        scale = (1.0, _log_uniform(rng, 0.5, 1.6), 1.0)
        rot = _rot_y(rng.uniform(-30, 30)) @ _rot_x(rng.uniform(-20, 20))
    return normalize_mesh(transform_mesh(mesh, scale, rot)).with_category(category)


def shape_family(category, count, seed):
    rng = np.random.default_rng(int(seed))
    return [shape_variant(category, rng) for _ in range(count)]


def texture_pools(categories, count, seed, size):
    return {c: make_pool("texture", count, derive_seed(seed, c), size, hue=CATEGORY_HUES[c])
            for c in categories}


def add_noise(ds, sigma, seed):
    """Add Gaussian sensor noise in place, per item from its own stream."""
    if sigma <= 0:
        return ds
    for i, item in enumerate(ds.items):
        rng = np.random.default_rng([int(seed), i])
        item.image = as_uint8(as_float(item.image) + rng.normal(0.0, sigma, item.image.shape))
    return ds


@dataclass(eq=False)
class ToyWorld:
    categories: list
    meshes: list
    real_meshes: list
    backgrounds: list
    textures: dict
    real_backgrounds: list
    real_textures: dict
    camera: Camera
    pose_spec: PoseSpec
    ambient: float = 0.3
    seed: int = 0

    def meshes_by_category(self, real=False):
        pool = self.real_meshes if real else self.meshes
        return {c: [m for m in pool if m.category == c] for c in self.categories}

    def scene(self, preset_name):
        return SceneConfig.from_preset(
            preset_name, pose_spec=self.pose_spec, camera=self.camera,
            background_pool=self.backgrounds, texture_pool=self.textures, ambient=self.ambient,
        )

    def real_scene(self):
        return SceneConfig.from_preset(
            "RR-RR", pose_spec=self.pose_spec, camera=self.camera,
            background_pool=self.real_backgrounds, texture_pool=self.real_textures,
            ambient=REAL_AMBIENT, light_direction=REAL_LIGHT,
        )

    def render_virtual(self, preset_name, n, seed, meshes=None, prefix="v"):
        return generate_batch(self.meshes if meshes is None else meshes, self.scene(preset_name), n, seed,
                              prefix=prefix)

    def render_real(self, n, seed, prefix="r"):
        ds = generate_batch(self.real_meshes, self.real_scene(), n, seed, prefix=prefix, provenance="real")
        return add_noise(ds, REAL_NOISE, derive_seed(seed, "noise"))


def build_world(cfg, seed=None):
    """Meshes and pools for a master seed; everything else stays with the caller."""
    seed = cfg.experiment.seed if seed is None else seed
    ex, sc = cfg.experiment, cfg.scene
    cats = list(CATEGORIES[: ex.categories])
    meshes, real = [], []
    for c in cats:
        meshes += shape_family(c, ex.variants, derive_seed(seed, "shapes", c))
        real += shape_family(c, ex.real_variants, derive_seed(seed, "real-shapes", c))
    if sc.pool_size < 1:
        raise ValidationError("scene.pool_size must be >= 1")
    size = max(sc.width, sc.height)
    return ToyWorld(
        categories=cats,
        meshes=meshes,
        real_meshes=real,
        backgrounds=make_pool("background", sc.pool_size, derive_seed(seed, "bg"), size),
        textures=texture_pools(cats, sc.pool_size, derive_seed(seed, "tex"), size),
        real_backgrounds=make_pool("background", sc.pool_size, derive_seed(seed, "real-bg"), size),
        real_textures=texture_pools(cats, sc.pool_size, derive_seed(seed, "real-tex"), size),
        camera=Camera(fov=sc.fov, width=sc.width, height=sc.height),
        pose_spec=PoseSpec(tuple(sc.azimuth_range), tuple(sc.elevation_range),
                           tuple(sc.distance_range), tuple(sc.in_plane_range)),
        ambient=sc.ambient,
        seed=seed,
    )


def test_set(world, cfg, seed=None):
    seed = world.seed if seed is None else seed
    n = cfg.experiment.test_per_category * len(world.categories)
    return world.render_real(n, derive_seed(seed, "test"), prefix="t")


def real_pool(world, cfg, seed=None):
    seed = world.seed if seed is None else seed
    n = cfg.experiment.real_per_category * len(world.categories)
    return world.render_real(n, derive_seed(seed, "real"), prefix="r")


__all__ = ["CATEGORIES", "ToyWorld", "build_world", "real_pool", "shape_family", "shape_variant",
           "test_set", "Dataset"]
