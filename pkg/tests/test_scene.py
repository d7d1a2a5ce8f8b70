import json

import numpy as np
import pytest

from synthprobe.errors import InsufficientDataError, ManifestError, NoObjectError, ValidationError
from synthprobe.geometry import FixtureSpec, make_fixture, normalize_mesh
from synthprobe.images import write_image
from synthprobe.render import Camera, Pose, PoseSpec, alpha_bbox, rasterize
from synthprobe.scene import (
    BoxLabel,
    Dataset,
    LabeledImage,
    SceneConfig,
    composite,
    generate_batch,
    make_pool,
    preset,
    read_manifest,
    subsample_real,
    to_grayscale,
    view_tag,
    write_manifest,
)
from synthprobe.patches import Box

CAM = Camera(fov=40, width=32, height=32)
POSES = PoseSpec((0, 360), (-10, 30), (2.2, 2.8), (-10, 10))


def meshes():
    out = []
    for cat, kind in (("a", "cube"), ("b", "uv_sphere"), ("c", "torus")):
        out.append(normalize_mesh(make_fixture(FixtureSpec(kind))).with_category(cat))
    return out


def config(name, **kw):
    pools = dict(background_pool=make_pool("background", 3, 1, 32), texture_pool=make_pool("texture", 3, 2, 32))
    pools.update(kw)
    return SceneConfig.from_preset(name, pose_spec=POSES, camera=CAM, **pools)


def test_presets():
    assert preset("W-UG") == ("white", "uniform_gray")
    assert preset("RG-RR") == ("real_gray", "real_rgb")
    with pytest.raises(ValidationError, match="RR-RR"):
        preset("XX-YY")


def test_grayscale():
    img = np.array([[[0.5, 0.5, 0.5], [1.0, 0.0, 0.0]]])
    g = to_grayscale(img)
    assert np.allclose(g[0, 0], 0.5) and np.allclose(g[0, 1], 0.299)
    rnd = to_grayscale(np.random.default_rng(0).uniform(size=(5, 5, 3)))
    assert np.array_equal(rnd[..., 0], rnd[..., 1]) and np.array_equal(rnd[..., 1], rnd[..., 2])


def test_white_composite_tight_box():
    fg = np.zeros((32, 32, 4))
    fg[20:31, 10:21] = (0.2, 0.3, 0.4, 1.0)
    item = composite(fg, config("W-UG"), np.random.default_rng(0))
    assert item.boxes[0].box.as_tuple() == (10, 20, 21, 31)
    outside = np.ones((32, 32), bool)
    outside[20:31, 10:21] = False
    assert np.all(item.image[outside] == 255)
    assert item.provenance == "virtual"


def test_full_canvas_box():
    fg = np.ones((32, 32, 4))
    item = composite(fg, config("RR-RR"), np.random.default_rng(0))
    assert item.boxes[0].box.as_tuple() == (0, 0, 32, 32)


def test_transparent_fg_errors():
    with pytest.raises(NoObjectError):
        composite(np.zeros((8, 8, 4)), config("W-UG"), np.random.default_rng(0))


def test_real_gray_background_is_achromatic():
    ds = generate_batch(meshes(), config("RG-UG"), 6, 3, keep_masks=True)
    for item in ds:
        img = item.image.astype(int)
        bg = ~item.mask
        assert np.array_equal(img[bg, 0], img[bg, 1]) and np.array_equal(img[bg, 1], img[bg, 2])
        # the object is uniform gray too
        assert np.array_equal(img[item.mask, 0], img[item.mask, 2])


def test_w_ug_background_white_object_gray():
    ds = generate_batch(meshes(), config("W-UG"), 6, 4, keep_masks=True)
    for item in ds:
        assert np.all(item.image[~item.mask] == 255)
        obj = item.image[item.mask].astype(int)
        assert np.array_equal(obj[:, 0], obj[:, 1]) and np.array_equal(obj[:, 1], obj[:, 2])


def test_boxes_equal_mask_tight_box():
    ds = generate_batch(meshes(), config("RR-RR"), 9, 5, keep_masks=True)
    for item in ds:
        assert item.boxes[0].box.as_tuple() == alpha_bbox(item.mask)
        assert item.boxes[0].box.area > 0


def test_batch_counts_balance_and_determinism(tmp_path):
    ds = generate_batch(meshes(), config("RR-RR"), 10, 7)
    assert len(ds) == 10
    counts = ds.category_counts()
    assert max(counts.values()) - min(counts.values()) <= 1
    write_manifest(ds, tmp_path / "a" / "m.jsonl")
    write_manifest(generate_batch(meshes(), config("RR-RR"), 10, 7), tmp_path / "b" / "m.jsonl")
    assert (tmp_path / "a" / "m.jsonl").read_bytes() == (tmp_path / "b" / "m.jsonl").read_bytes()
    for f in (tmp_path / "a" / "images").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / "images" / f.name).read_bytes()


def test_single_deterministic_image():
    spec = PoseSpec((30, 30), (10, 10), (2.5, 2.5), (0, 0))
    cfg = SceneConfig.from_preset("W-UG", pose_spec=spec, camera=CAM)
    mesh = meshes()[:1]
    ds = generate_batch(mesh, cfg, 1, 0)
    fg = rasterize(mesh[0], Pose(30, 10, 2.5, 0), CAM, cfg.material())
    assert ds.items[0].boxes[0].box.as_tuple() == alpha_bbox(fg[..., 3])
    assert np.array_equal(ds.items[0].image, generate_batch(mesh, cfg, 1, 99).items[0].image)


def test_view_tags():
    assert view_tag(0) == "front" and view_tag(350) == "front" and view_tag(45) == "front"
    assert view_tag(90) == "side" and view_tag(270) == "side" and view_tag(135) == "side"
    assert view_tag(180) == "none" and view_tag(150) == "none"


def test_manifest_round_trip(tmp_path):
    ds = generate_batch(meshes(), config("RR-UG"), 3, 1)
    path = write_manifest(ds, tmp_path / "m.jsonl")
    back = read_manifest(path)
    assert len(back) == 3
    for a, b in zip(ds, back):
        assert a.labels_equal(b) and np.array_equal(a.image, b.image)
    write_manifest(back, tmp_path / "again" / "m.jsonl")
    assert (tmp_path / "again" / "m.jsonl").read_bytes() == path.read_bytes()


def _one_line_manifest(tmp_path, records):
    write_image(tmp_path / "x.ppm", np.zeros((10, 10, 3)))
    path = tmp_path / "m.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_manifest_duplicate_id(tmp_path):
    rec = {"id": "x", "file": "x.ppm", "boxes": []}
    with pytest.raises(ManifestError, match="line 2"):
        read_manifest(_one_line_manifest(tmp_path, [rec, rec]))


def test_manifest_box_outside(tmp_path):
    rec = {"id": "item7", "file": "x.ppm",
           "boxes": [{"category": "a", "x0": 0, "y0": 0, "x1": 20, "y1": 5, "view": "none"}]}
    with pytest.raises(ManifestError, match="item7"):
        read_manifest(_one_line_manifest(tmp_path, [rec]))


def test_png_images_read(tmp_path):
    img = (np.arange(48).reshape(4, 4, 3) * 5).astype(np.uint8)
    write_image(tmp_path / "a.png", img)
    from synthprobe.images import read_image
    assert np.array_equal(read_image(tmp_path / "a.png"), img)


def _real_ds(per_cat, cats=("a", "b"), multi=0):
    items = []
    for c in cats:
        for i in range(per_cat):
            boxes = [BoxLabel(c, Box(0, 0, 4, 4))]
            if i < multi:
                boxes.append(BoxLabel("b" if c == "a" else "a", Box(4, 4, 8, 8)))
            items.append(LabeledImage(f"{c}{i}", np.zeros((8, 8, 3)), boxes, "real"))
    return Dataset(items)


def test_subsample_counts():
    cats = [f"c{i}" for i in range(12)]
    ds = _real_ds(8, cats)
    assert len(subsample_real(ds, 5, 0)) == 60
    assert subsample_real(ds, 5, 3).items[0].id == subsample_real(ds, 5, 3).items[0].id


def test_subsample_keeps_multi_object_images():
    ds = _real_ds(6, multi=6)
    sub = subsample_real(ds, 2, 1)
    assert all(len(it.boxes) == 2 for it in sub)


def test_subsample_too_few():
    with pytest.raises(InsufficientDataError, match="'a'"):
        subsample_real(_real_ds(3), 4, 0)


def test_scene_config_needs_pools():
    with pytest.raises(ValidationError):
        SceneConfig.from_preset("RR-RR", camera=CAM)
    with pytest.raises(ValidationError):
        SceneConfig.from_preset("W-RR", camera=CAM, texture_pool={"a": []})


def test_pools_are_deterministic():
    a, b = make_pool("texture", 4, 9, 16), make_pool("texture", 4, 9, 16)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    hued = make_pool("texture", 4, 9, 16, hue=0.6)
    assert all(x.dtype == np.uint8 and x.shape == (16, 16, 3) for x in hued)
