"""The four comparison protocols, each a full generate/train/detect/evaluate run."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientDataError, ValidationError
from ..evaluation import EvalReport
from ..features import adapt_many
from ..scene import Dataset, subsample_real
from .config import derive_seed
from .pipeline import (
    BACKGROUND,
    build_extractor,
    check_balance,
    evaluate_detectors,
    fit_adapter,
    patch_features,
    proposal_features,
    proposals_for,
    sample_patches,
    train_detectors,
    train_on_dataset,
)
from .world import build_world, real_pool, test_set as make_test_set

# Full-scale reference numbers (AlexNet features, PASCAL VOC 2007). They are
# kept as labelled reference values in report notes and never recomputed.
REFERENCES = {
    "matrix": "full-scale AP reference: RR-RR 28.9, W-RR 31.2, W-UG 30.1, RG-RR 31.2",
    "views": "full-scale mAP reference: all 61.2, -random 60.9, -front 59.1, -side 60.4, "
             "-front with a net also fine-tuned without front views 56.4",
    "shapes": "full-scale mAP reference: all models 28.9, half the models 23.53",
    "vcnn": "full-scale mAP reference: baseline 18.9, fine-tuned on virtual 22, "
            "plus 5 real images per category 28; part-based baseline 33",
}


@dataclass
class MatrixResult:
    rows: dict

    def __post_init__(self):
        for name, report in self.rows.items():
            if not isinstance(report, EvalReport):
                raise ValidationError(f"row {name!r} is not an EvalReport")

    def gap(self, a, b):
        return self.rows[a].mAP - self.rows[b].mAP


@dataclass
class Context:
    """World, extractor, holdout and its proposal features for one master seed."""
    cfg: object
    seed: int
    world: object
    extractor: object
    test: Dataset
    proposals: list
    test_feats: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)

    def report_config(self, **extra):
        d = {"fingerprint": self.cfg.fingerprint(), "seed": self.seed,
             "extractor": self.extractor.describe()}
        d.update(extra)
        return d


def make_context(cfg, seed=None, test_set=None, world=None, extractor=None):
    seed = cfg.experiment.seed if seed is None else seed
    world = world or build_world(cfg, seed)
    extractor = extractor or build_extractor(cfg.extractor)
    test = test_set if test_set is not None else make_test_set(world, cfg, seed)
    proposals = proposals_for(cfg.classifier, test.items[0].size)
    feats = proposal_features(test, proposals, extractor)
    return Context(cfg, seed, world, extractor, test, proposals, feats)


def _evaluate(ctx, detectors, notes, fmap=None, **extra):
    return evaluate_detectors(detectors, ctx.test_feats, ctx.proposals, ctx.test, ctx.cfg.classifier,
                              ctx.world.categories, ctx.report_config(**extra), notes, fmap)


def run_preset(ctx, preset_name, meshes=None, label=None, per_category=None):
    """Train on virtual images of one preset and evaluate on the holdout."""
    cfg = ctx.cfg
    per_category = cfg.experiment.virtual_per_category if per_category is None else per_category
    n = per_category * len(ctx.world.categories)
    seed = derive_seed(ctx.seed, "train", preset_name)
    train = ctx.world.render_virtual(preset_name, n, seed, meshes=meshes)
    check_balance(train, ctx.world.categories, expected=n)
    detectors = train_on_dataset(train, ctx.extractor, cfg, seed, ctx.world.categories)
    return _evaluate(ctx, detectors, [REFERENCES["matrix"]], preset=preset_name, virtual_n=n,
                     run=label or preset_name)


def run_texture_matrix(cfg, test_set=None, presets=None, ctx=None):
    """One EvalReport per preset, all tested on the same holdout."""
    ctx = ctx or make_context(cfg, test_set=test_set)
    presets = list(cfg.experiment.presets if presets is None else presets)
    rows = {}
    for name in presets:
        try:
            rows[name] = run_preset(ctx, name)
        except Exception as exc:
            raise type(exc)(f"preset {name}: {exc}") from exc
    return MatrixResult(rows)


def filter_views(real_ds, removal, seed):
    """Drop every item whose boxes carry the removed view.

    ``random`` drops as many items as ``front`` would, chosen by ``seed``.
    """
    if removal not in ("none", "random", "front", "side"):
        raise ValidationError("removal must be none, random, front or side")
    if removal == "none":
        return real_ds
    tagged = [it.id for it in real_ds.items if any(b.view == "front" for b in it.boxes)]
    if removal == "random":
        rng = np.random.default_rng(int(seed))
        ids = [it.id for it in real_ds.items]
        drop = {ids[i] for i in rng.choice(len(ids), size=len(tagged), replace=False)}
    else:
        drop = {it.id for it in real_ds.items if any(b.view == removal for b in it.boxes)}
    kept = real_ds.subset(it.id for it in real_ds.items if it.id not in drop)
    if removal in ("front", "side"):
        assert not any(b.view == removal for it in kept.items for b in it.boxes)
    return kept


def run_view_ablation(real_ds, removal, cfg, ctx=None):
    """Train only on real images, optionally minus one view, and evaluate."""
    ctx = ctx or make_context(cfg)
    seed = derive_seed(ctx.seed, "views")
    train = filter_views(real_ds, removal, derive_seed(seed, "removal"))
    counts = train.category_counts()
    for cat in ctx.world.categories:
        if counts.get(cat, 0) == 0:
            raise InsufficientDataError(f"removal={removal} leaves category {cat!r} with no training images")
    detectors = train_on_dataset(train, ctx.extractor, cfg, seed, ctx.world.categories)
    return _evaluate(ctx, detectors, [REFERENCES["views"]], removal=removal, train_n=len(train))


def select_meshes(meshes_by_cat, fraction, seed):
    """``ceil(fraction * n)`` seed-chosen meshes per category, in their original order."""
    if not 0 < fraction <= 1:
        raise ValidationError("fraction must be in (0, 1]")
    out = []
    for cat in sorted(meshes_by_cat):
        pool = meshes_by_cat[cat]
        if len(pool) < 2:
            raise ValidationError(f"category {cat!r} needs at least 2 meshes, has {len(pool)}")
        k = math.ceil(fraction * len(pool))
        if k < 1:
            raise ValidationError(f"fraction {fraction} leaves category {cat!r} with no meshes")
        rng = np.random.default_rng([int(seed), len(out)])
        keep = sorted(rng.choice(len(pool), size=k, replace=False).tolist())
        out += [pool[i] for i in keep]
    return out


def run_shape_ablation(meshes_by_cat, fraction, cfg, ctx=None, preset_name="RR-RR"):
    """Full-mesh run and reduced-mesh run sharing every other seed.

    With ``experiment.shape_images_per_mesh`` (the default) every mesh
    contributes the same number of renders, so the reduced run also has
    proportionally fewer images; otherwise both runs render the same count.
    """
    if not 0 < fraction < 1:
        raise ValidationError("fraction must be strictly between 0 and 1")
    ctx = ctx or make_context(cfg)
    full = [m for cat in sorted(meshes_by_cat) for m in meshes_by_cat[cat]]
    reduced = select_meshes(meshes_by_cat, fraction, derive_seed(ctx.seed, "shape-select"))
    per_cat = cfg.experiment.virtual_per_category
    sizes = {len(v) for v in meshes_by_cat.values()}
    if len(sizes) != 1:
        raise ValidationError("shape ablation needs the same mesh count in every category")
    n_full = sizes.pop()
    n_kept = math.ceil(fraction * n_full)
    reduced_per_cat = math.ceil(per_cat * n_kept / n_full) if cfg.experiment.shape_images_per_mesh else per_cat
    a = run_preset(ctx, preset_name, meshes=full, label="all meshes")
    b = run_preset(ctx, preset_name, meshes=reduced, label=f"fraction {fraction}", per_category=reduced_per_cat)
    for report, kept in ((a, n_full), (b, n_kept)):
        report.notes.append(REFERENCES["shapes"])
        report.config["meshes_per_category"] = kept
    return a, b


def _vcnn_features(ctx, virtual_n, pool, preset_name, seed):
    # base features shared by the adapter on/off runs of one context
    virtual = ctx.world.render_virtual(preset_name, virtual_n, derive_seed(seed, "virtual"))
    if len(virtual) != virtual_n:
        raise ValidationError(f"expected {virtual_n} virtual images, got {len(virtual)}")
    spec = ctx.cfg.sampler.spec()
    v_samples = sample_patches(virtual, spec, derive_seed(seed, "v-patches"))
    r_samples = sample_patches(pool, spec, derive_seed(seed, "r-patches"))
    return (
        patch_features(virtual, v_samples, ctx.extractor, base=True),
        [s[2] for s in v_samples],
        patch_features(pool, r_samples, ctx.extractor, base=True),
        np.array([s[0] for s in r_samples], dtype=int),
        [s[2] for s in r_samples],
    )


def run_vcnn(virtual_n, real_ks, adapter, cfg, ctx=None, pool=None, preset_name="RR-RR"):
    """SVMs on virtual plus ``k`` real images per category, for each ``k``.

    With ``adapter`` on, the adapter is trained on virtual windows only and
    then used as the feature map for both SVM training and detection.
    """
    if virtual_n < 1:
        raise ValidationError("virtual_n must be >= 1")
    ctx = ctx or make_context(cfg)
    cats = ctx.world.categories
    pool = pool if pool is not None else real_pool(ctx.world, cfg, ctx.seed)
    counts = pool.category_counts()
    need = max(real_ks) if real_ks else 0
    short = [c for c in cats if counts.get(c, 0) < need]
    if short:
        raise InsufficientDataError(f"real pool too small for k={need} in categories {short}")

    seed = derive_seed(ctx.seed, "vcnn")
    key = ("vcnn", virtual_n, preset_name, id(pool))
    if key not in ctx.cache:
        ctx.cache[key] = _vcnn_features(ctx, virtual_n, pool, preset_name, seed)
    v_base, v_labels, r_base, r_items, r_labels = ctx.cache[key]

    extractor = ctx.extractor
    fmap = None
    if adapter:
        model = fit_adapter(v_base, v_labels, cfg.extractor, derive_seed(seed, "adapter"))
        extractor = extractor.with_adapter(model)

        def fmap(x):
            return adapt_many(model, x)

    v_feats = fmap(v_base) if fmap else v_base
    r_feats = fmap(r_base) if fmap else r_base
    actx = Context(cfg, ctx.seed, ctx.world, extractor, ctx.test, ctx.proposals, ctx.test_feats)

    index = {it.id: i for i, it in enumerate(pool.items)}
    curve = []
    for k in real_ks:
        chosen = subsample_real(pool, k, derive_seed(seed, "k", k), cats) if k else Dataset([])
        rows = np.isin(r_items, [index[it.id] for it in chosen.items])
        X = np.concatenate([v_feats, r_feats[rows]])
        labels = v_labels + [lab for lab, keep in zip(r_labels, rows) if keep]
        detectors = train_detectors(X, labels, cats, cfg.classifier, derive_seed(seed, "svm", k))
        report = _evaluate(actx, detectors, [REFERENCES["vcnn"]], fmap, k=k, adapter=bool(adapter),
                           virtual_n=virtual_n, real_images=len(chosen))
        curve.append((k, report))
    return curve


__all__ = ["BACKGROUND", "Context", "MatrixResult", "REFERENCES", "filter_views", "make_context",
           "run_preset", "run_shape_ablation", "run_texture_matrix", "run_vcnn", "run_view_ablation",
           "select_meshes"]
