"""One train/detect/evaluate cycle, split so features can be cached across runs."""
from __future__ import annotations

import numpy as np

from ..classify import detections_from_scores, mine_hard_negatives, train_svm
from ..errors import InsufficientDataError, ValidationError
from ..evaluation import evaluate
from ..features import Extractor, load_convnet, random_convnet, train_adapter
from ..patches import crop_resize_many, propose, sample_negatives, sample_positives
from .config import derive_seed

BACKGROUND = "__background__"

TOY_NOTES = (
    "toy world: procedural box/ball/ring/prism shape families stand in for CAD models; "
    "'real' images are RR-RR renders of held-out shapes and pools, not PASCAL VOC photos",
    "proposals: multi-scale sliding windows replace selective search",
    "features: desk-scale backends replace AlexNet fc7; the adapter stands in for fine-tuning",
)


def build_extractor(section):
    if section.backend == "precomputed":
        raise ValidationError("the precomputed backend cannot score sliding-window proposals")
    net = None
    if section.backend == "convnet":
        net = load_convnet(section.weights) if section.weights else random_convnet(
            section.net_seed, hidden=section.net_hidden)
    return Extractor(section.backend, dict(section.params), net=net)


def sample_patches(dataset, spec, seed):
    """Positive and negative training windows as ``(item index, box, label)``.

    Positives carry their gt category, negatives the ``BACKGROUND`` label.
    """
    out = []
    for idx, item in enumerate(dataset.items):
        rng = np.random.default_rng([int(seed), idx])
        for label in item.boxes:
            boxes, _ = sample_positives(label.box, spec, item.size, rng)
            out += [(idx, b, label.category) for b in boxes]
        gts = [label.box for label in item.boxes]
        boxes, _ = sample_negatives(gts, spec, item.size, rng)
        out += [(idx, b, BACKGROUND) for b in boxes]
    return out


def patch_features(dataset, samples, extractor, base=False):
    """Features of sampled windows, in sample order."""
    if not samples:
        return np.zeros((0, extractor.base_dim if base else extractor.dim))
    fn = extractor.base_many if base else extractor.extract_many
    rows = []
    by_item = {}
    for pos, (idx, box, _) in enumerate(samples):
        by_item.setdefault(idx, []).append((pos, box))
    order = []
    for idx, entries in by_item.items():
        patches = crop_resize_many(dataset.items[idx].image, [b for _, b in entries], extractor.patch_size)
        rows.append(fn(patches))
        order += [p for p, _ in entries]
    feats = np.concatenate(rows)
    out = np.empty_like(feats)
    out[np.asarray(order)] = feats
    return out


def fit_adapter(features, labels, section, seed):
    return train_adapter(features, labels, section.adapter_hidden, lr=section.adapter_lr,
                         epochs=section.adapter_epochs, batch_size=section.adapter_batch,
                         weight_decay=section.adapter_weight_decay, seed=seed)


def train_detectors(features, labels, categories, section, seed=0):
    """One-vs-rest linear SVMs: other categories' windows count as negatives."""
    labels = np.asarray(labels, dtype=object)
    detectors = {}
    for cat in categories:
        y = np.where(labels == cat, 1.0, -1.0)
        if not np.any(y > 0):
            raise InsufficientDataError(f"category {cat!r} has no positive training windows")
        detectors[cat] = train_svm(features, y, C=section.C, epochs=section.epochs,
                                   seed=derive_seed(seed, "svm", cat), category=cat)
    return detectors


def proposals_for(section, size):
    return propose(size, section.proposal_scales, section.stride_fraction)


def proposal_features(dataset, proposals, extractor, base=False):
    """``(n_items, n_proposals, dim)`` features of every proposal window."""
    fn = extractor.base_many if base else extractor.extract_many
    return np.stack([fn(crop_resize_many(item.image, proposals, extractor.patch_size))
                     for item in dataset.items])


def ground_truth(dataset, categories):
    gt = {c: [] for c in categories}
    for item in dataset.items:
        for label in item.boxes:
            gt.setdefault(label.category, []).append((item.id, label.box))
    return gt


def evaluate_detectors(detectors, feats, proposals, dataset, section, categories=None, config=None,
                       notes=(), fmap=None):
    """Score cached proposal features, NMS per category, then AP per category.

    ``fmap`` (e.g. an adapter) is applied to each image's features on the fly.
    """
    categories = sorted(categories or detectors)
    dets = {c: [] for c in categories}
    for item, f in zip(dataset.items, feats):
        if fmap is not None:
            f = fmap(f)
        for cat, clf in detectors.items():
            dets[cat] += detections_from_scores(f @ clf.w + clf.b, proposals, item.id, cat,
                                                section.nms, section.score_floor)
    return evaluate(dets, ground_truth(dataset, categories), section.ap_method, section.iou_thresh,
                    config=config, notes=list(TOY_NOTES) + list(notes))


def add_hard_negatives(detectors, features, labels, dataset, extractor, cfg):
    """Retrain each detector once with its top-scoring background windows."""
    k = cfg.classifier.hard_negatives
    if k <= 0:
        return detectors
    spec = cfg.sampler.spec()
    props = {}

    def proposals(item):
        if item.size not in props:
            props[item.size] = proposals_for(cfg.classifier, item.size)
        return props[item.size]

    by_id = {item.id: item for item in dataset.items}
    out = {}
    for cat, clf in detectors.items():
        mined = mine_hard_negatives(clf, dataset, extractor, k, proposals, spec)
        extra = [extractor.extract_many(crop_resize_many(by_id[i].image, [b], extractor.patch_size))[0]
                 for i, b in mined]
        X = np.concatenate([features, np.asarray(extra).reshape(-1, features.shape[1])])
        y = np.where(np.asarray(labels, dtype=object) == cat, 1.0, -1.0)
        y = np.concatenate([y, -np.ones(len(extra))])
        out[cat] = train_svm(X, y, C=cfg.classifier.C, epochs=cfg.classifier.epochs,
                             seed=clf.meta["seed"], category=cat)
    return out


def train_on_dataset(dataset, extractor, cfg, seed, categories=None):
    """Sample windows, extract features, fit per-category SVMs."""
    samples = sample_patches(dataset, cfg.sampler.spec(), derive_seed(seed, "patches"))
    X = patch_features(dataset, samples, extractor)
    labels = [s[2] for s in samples]
    cats = sorted(categories or dataset.categories)
    detectors = train_detectors(X, labels, cats, cfg.classifier, seed)
    return add_hard_negatives(detectors, X, labels, dataset, extractor, cfg)


def check_balance(dataset, categories, expected=None):
    """Assert round-robin balance: category counts differ by at most one."""
    counts = dataset.category_counts()
    values = [counts.get(c, 0) for c in categories]
    if max(values) - min(values) > 1:
        raise ValidationError(f"unbalanced training set: {counts}")
    if expected is not None and len(dataset) != expected:
        raise ValidationError(f"expected {expected} images, generated {len(dataset)}")
