"""Linear SVM detectors, scoring, non-maximum suppression and windowed detection."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DivergenceError, ValidationError
from .patches import Box, crop_resize_many, iou, negative_eligible, SamplerSpec


@dataclass(eq=False)
class LinearClassifier:
    w: np.ndarray
    b: float
    category: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = float(self.b)
        if self.w.ndim != 1 or not np.all(np.isfinite(self.w)) or not math.isfinite(self.b):
            raise ValidationError("classifier parameters must be a finite vector and scalar")

    @property
    def dim(self):
        return len(self.w)

    def to_dict(self):
        return {"category": self.category, "dim": self.dim, "w": self.w.tolist(), "b": self.b,
                "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        clf = cls(d["w"], d["b"], d.get("category", ""), dict(d.get("meta", {})))
        if "dim" in d and d["dim"] != clf.dim:
            raise ValidationError(f"classifier declares dim {d['dim']} but has {clf.dim} weights")
        return clf

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def svm_objective(w, b, X, y, C):
    """``0.5 |w|^2 + C * sum(max(0, 1 - y (X w + b)))``."""
    return float(0.5 * w @ w + C * np.maximum(0.0, 1.0 - y * (X @ w + b)).sum())


def _smoothed(theta, X, y, C, delta):
    # hinge with its kink replaced by a quadratic of width delta
    w, b = theta[:-1], theta[-1]
    m = 1.0 - y * (X @ w + b)
    quad = (m > 0) & (m < delta)
    lin = m >= delta
    loss = np.where(lin, m - delta / 2.0, np.where(quad, m * m / (2.0 * delta), 0.0))
    dloss = np.where(lin, 1.0, np.where(quad, m / delta, 0.0))
    g = -C * dloss * y
    return 0.5 * w @ w + C * loss.sum(), np.concatenate([w + X.T @ g, [g.sum()]])


def train_svm(features, labels, C=1.0, epochs=7, seed=0, category="", max_iter=100):
    """Fit a linear SVM with an unregularized bias.

    Each epoch minimizes a smoothed hinge objective with L-BFGS, warm-started
    from the previous epoch, with the smoothing width shrinking geometrically
    from 1 to 1e-3. The exact hinge objective after every epoch is kept in
    ``meta["objectives"]``. The solver is deterministic; ``seed`` is only
    recorded.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValidationError("features must be (n, d) with one label per row")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValidationError("labels must be +1 or -1")
    if len(np.unique(y)) < 2:
        raise ValidationError("train_svm needs both positive and negative examples")
    if not C > 0:
        raise ValidationError("C must be positive")
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    deltas = np.geomspace(1.0, 1e-3, epochs) if epochs > 1 else np.array([1e-3])
    theta = np.zeros(X.shape[1] + 1)
    objectives = []
    for epoch, delta in enumerate(deltas):
        res = minimize(_smoothed, theta, args=(X, y, C, delta), jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-13})
        theta = res.x
        obj = svm_objective(theta[:-1], theta[-1], X, y, C)
        if not math.isfinite(obj):
            raise DivergenceError(f"SVM objective became non-finite at epoch {epoch}")
        objectives.append(obj)
    meta = {"C": C, "epochs": epochs, "seed": seed, "n": len(X), "objective": objectives[-1],
            "objectives": objectives}
    return LinearClassifier(theta[:-1], theta[-1], category, meta)


def score(clf, f):
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != clf.dim:
        raise ValidationError(f"feature dim {f.shape[-1]} != classifier dim {clf.dim}")
    return f @ clf.w + clf.b


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: Box
    score: float
    category: str = ""

    def sort_key(self):
        return (-self.score, self.image_id, self.box.as_tuple())


def nms(dets, thresh=0.3):
    """Greedy suppression: keep the best, drop others with IoU > ``thresh`` against it."""
    if not 0 <= thresh < 1:
        raise ValidationError("nms threshold must be in [0, 1)")
    remaining = sorted(dets, key=Detection.sort_key)
    kept = []
    for d in remaining:
        if all(k.image_id != d.image_id or iou(k.box, d.box) <= thresh for k in kept):
            kept.append(d)
    return kept


def detect(clf, extractor, image, proposals, nms_thresh=0.3, score_floor=-1.0, image_id=None):
    """Score every proposal window, drop those under ``score_floor`` and apply NMS."""
    proposals = list(proposals)
    if not proposals:
        raise ValidationError("detect needs at least one proposal")
    if extractor.dim != clf.dim:
        raise ValidationError(f"extractor dim {extractor.dim} != classifier dim {clf.dim}")
    if hasattr(image, "image"):
        image_id = image.id if image_id is None else image_id
        image = image.image
    feats = extractor.extract_many(crop_resize_many(image, proposals, extractor.patch_size))
    return detections_from_scores(feats @ clf.w + clf.b, proposals, image_id or "", clf.category,
                                  nms_thresh, score_floor)


def detections_from_scores(scores, proposals, image_id, category, nms_thresh=0.3, score_floor=-1.0):
    dets = [Detection(image_id, box, float(s), category)
            for box, s in zip(proposals, scores) if s >= score_floor]
    return nms(dets, nms_thresh)


def mine_hard_negatives(clf, dataset, extractor, k, proposals_for, spec=None):
    """Top ``k`` scoring proposals that are negative-eligible against every gt box.

    ``proposals_for(item)`` returns the candidate boxes of one dataset item.
    Ties break by (image id, box) so the result is deterministic.
    """
    if k <= 0:
        return []
    spec = spec or SamplerSpec()
    pool = []
    for item in dataset:
        gts = [label.box for label in item.boxes]
        boxes = [b for b in proposals_for(item) if negative_eligible(b, gts, spec)]
        if not boxes:
            continue
        feats = extractor.extract_many(crop_resize_many(item.image, boxes, extractor.patch_size))
        for b, s in zip(boxes, feats @ clf.w + clf.b):
            pool.append((-float(s), item.id, b.as_tuple(), b))
    pool.sort(key=lambda t: t[:3])
    return [(item_id, b) for _, item_id, _, b in pool[:k]]
