"""Box arithmetic, positive/negative patch sampling, sliding-window proposals
and patch cropping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .images import sample_windows

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Box:
    """Integer pixel box; ``x1``/``y1`` are exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValidationError(f"box coordinates must be integers, got {self}")
            object.__setattr__(self, name, int(v))
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValidationError(f"degenerate box {self.as_tuple()}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def as_tuple(self):
        return (self.x0, self.y0, self.x1, self.y1)

    def shift(self, dx, dy):
        return Box(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def within(self, width, height):
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height


def clip_box(x0, y0, x1, y1, width, height):
    """Clip to ``[0, width) x [0, height)``; None if nothing is left."""
    x0, y0 = max(0, int(x0)), max(0, int(y0))
    x1, y1 = min(width, int(x1)), min(height, int(y1))
    if x0 >= x1 or y0 >= y1:
        return None
    return Box(x0, y0, x1, y1)


def intersection(a, b):
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    return w * h if w > 0 and h > 0 else 0


def iou(a, b):
    inter = intersection(a, b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU between two ``(N, 4)`` / ``(M, 4)`` coordinate arrays."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / np.where(union > 0, union, 1.0), 0.0)


@dataclass(frozen=True)
class SamplerSpec:
    pos_min_iou: float = 0.7
    neg_max_iou: float = 0.3
    positives_per_box: int = 4
    negatives_per_image: int = 8
    jitter_fraction: float = 0.15
    # a negative may not lie mostly inside an object, whatever its IoU
    neg_max_inside: float = 0.5
    max_retries: int = 50

    def __post_init__(self):
        if not 0 <= self.neg_max_iou < self.pos_min_iou <= 1:
            raise ValidationError("sampler needs 0 <= neg_max_iou < pos_min_iou <= 1")
        if self.positives_per_box < 1 or self.negatives_per_image < 0:
            raise ValidationError("sampler counts must be positive")
        if not 0 <= self.jitter_fraction < 1 or not 0 < self.neg_max_inside <= 1:
            raise ValidationError("jitter_fraction must be in [0, 1) and neg_max_inside in (0, 1]")


def negative_eligible(box, gt_boxes, spec):
    for g in gt_boxes:
        if iou(box, g) > spec.neg_max_iou:
            return False
        if intersection(box, g) > spec.neg_max_inside * box.area:
            return False
    return True


def sample_positives(gt, spec, bounds, rng):
    """Return ``(boxes, complete)``: ``gt`` plus jittered copies with IoU >= pos_min_iou.

    ``complete`` is False when rejection sampling ran out of retries.
    """
    width, height = bounds
    if not gt.within(width, height):
        raise ValidationError(f"ground-truth box {gt.as_tuple()} outside image {bounds}")
    want = spec.positives_per_box
    out = [gt]
    jw, jh = spec.jitter_fraction * gt.width, spec.jitter_fraction * gt.height
    tries = 0
    while len(out) < want and tries < spec.max_retries * want:
        tries += 1
        d = rng.uniform(-1.0, 1.0, size=4) * (jw, jh, jw, jh)
        box = clip_box(*np.round(np.array(gt.as_tuple()) + d), width, height)
        if box is not None and iou(box, gt) >= spec.pos_min_iou:
            out.append(box)
    complete = len(out) == want
    if not complete:
        log.warning("positive quota unreachable: %d of %d", len(out), want)
    return out, complete


def sample_negatives(gt_boxes, spec, bounds, rng):
    """Return ``(boxes, complete)`` of background boxes away from every gt box.

    Side lengths are log-uniform between 10% and 80% of the short image side,
    aspect ratios log-uniform in [1/2, 2].
    """
    width, height = bounds
    short = min(width, height)
    lo, hi = math.log(max(1.0, 0.1 * short)), math.log(max(1.0, 0.8 * short))
    want = spec.negatives_per_image
    out = []
    tries = 0
    while len(out) < want and tries < spec.max_retries * max(want, 1):
        tries += 1
        side = math.exp(rng.uniform(lo, hi))
        aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
        w = int(min(width, max(1, round(side * math.sqrt(aspect)))))
        h = int(min(height, max(1, round(side / math.sqrt(aspect)))))
        x0 = int(rng.integers(0, width - w + 1))
        y0 = int(rng.integers(0, height - h + 1))
        box = Box(x0, y0, x0 + w, y0 + h)
        if negative_eligible(box, gt_boxes, spec):
            out.append(box)
    complete = len(out) == want
    if not complete:
        log.warning("negative quota unreachable: %d of %d", len(out), want)
    return out, complete


def propose(bounds, scales, stride_fraction, aspects=(0.5, 1.0, 2.0)):
    """Sliding-window proposals: per scale and aspect, a grid with stride ``stride_fraction * scale``.

    Aspect is width/height at constant area ``scale**2``. Boxes are clipped
    to the image and deduplicated; order is deterministic.
    """
    width, height = bounds
    if not stride_fraction > 0:
        raise ValidationError("stride_fraction must be positive")
    seen = set()
    out = []
    for scale in scales:
        if not 0 < scale <= max(width, height):
            raise ValidationError(f"scale {scale} does not fit in {bounds}")
        stride = max(1, int(round(stride_fraction * scale)))
        for aspect in aspects:
            w = max(1, int(round(scale * math.sqrt(aspect))))
            h = max(1, int(round(scale / math.sqrt(aspect))))
            nx = (width - w) // stride + 1 if w <= width else 1
            ny = (height - h) // stride + 1 if h <= height else 1
            for j in range(ny):
                for i in range(nx):
                    box = clip_box(i * stride, j * stride, i * stride + w, j * stride + h, width, height)
                    if box is not None and box not in seen:
                        seen.add(box)
                        out.append(box)
    return out


def crop_resize(image, box, out_size):
    """Bilinearly resample ``box`` of ``image`` to an ``out_size`` square float patch."""
    return crop_resize_many(image, [box], out_size)[0]


def crop_resize_many(image, boxes, out_size):
    h, w = np.asarray(image).shape[:2]
    coords = []
    for box in boxes:
        if not isinstance(box, Box):
            box = Box(*box)
        if not box.within(w, h):
            raise ValidationError(f"box {box.as_tuple()} outside image {w}x{h}")
        coords.append(box.as_tuple())
    if not coords:
        return np.zeros((0, out_size, out_size, 3))
    return sample_windows(image, coords, out_size)[..., :3]
