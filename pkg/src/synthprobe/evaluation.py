"""PASCAL-style precision/recall, average precision and report files."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .patches import iou

AP_METHODS = ("voc11", "continuous")


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    num_gt: int
    num_det: int
    tp: np.ndarray = field(default=None, repr=False)

    @property
    def points(self):
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def pr_curve(dets, gt, iou_thresh=0.5):
    """Greedy matching of score-sorted detections to ground truth.

    ``gt`` is a list of ``(image_id, Box)``. Each detection takes the
    highest-IoU still-unmatched gt box in its image; it is a true positive
    when that IoU reaches ``iou_thresh``. Score ties are broken by
    ``(image_id, box)``.
    """
    by_image = {}
    for image_id, box in gt:
        by_image.setdefault(image_id, []).append(box)
    matched = {k: [False] * len(v) for k, v in by_image.items()}
    order = sorted(dets, key=lambda d: (-d.score, d.image_id, d.box.as_tuple()))
    tp = np.zeros(len(order), dtype=bool)
    for i, d in enumerate(order):
        best, best_j = 0.0, -1
        for j, g in enumerate(by_image.get(d.image_id, [])):
            if matched[d.image_id][j]:
                continue
            o = iou(d.box, g)
            if o > best:
                best, best_j = o, j
        if best_j >= 0 and best >= iou_thresh:
            matched[d.image_id][best_j] = True
            tp[i] = True
    ctp = np.cumsum(tp)
    n_gt = len(gt)
    recall = ctp / n_gt if n_gt else np.zeros(len(order))
    precision = ctp / np.arange(1, len(order) + 1)
    return PrCurve(recall.astype(np.float64), precision.astype(np.float64), n_gt, len(order), tp)


def ap(curve, method="voc11"):
    """Average precision of a curve: 11-point interpolated or area under the envelope."""
    if method not in AP_METHODS:
        raise ValidationError(f"AP method must be one of {AP_METHODS}")
    rec, prec = np.asarray(curve.recall), np.asarray(curve.precision)
    if curve.num_gt == 0 or len(rec) == 0:
        return 0.0
    if method == "voc11":
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = prec[rec >= t - 1e-12]
            total += above.max() if len(above) else 0.0
        return float(total / 11.0)
    mrec = np.concatenate([[0.0], rec, [1.0]])
    mpre = np.concatenate([[0.0], prec, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def mean_ap(aps):
    if not aps:
        raise ValidationError("mean_ap needs at least one category")
    return float(sum(aps.values()) / len(aps))


@dataclass
class EvalReport:
    ap: dict
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    mAP: float = None

    def __post_init__(self):
        self.ap = {str(k): float(v) for k, v in sorted(self.ap.items())}
        for k, v in self.ap.items():
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"AP for {k!r} outside [0, 1]: {v}")
        computed = mean_ap(self.ap)
        if self.mAP is not None and abs(self.mAP - computed) > 1e-12:
            raise ValidationError(f"mAP {self.mAP} is not the mean of the APs ({computed})")
        self.mAP = computed

    def to_dict(self):
        return {"ap": self.ap, "mAP": self.mAP, "config": self.config, "notes": list(self.notes)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["ap"], d.get("config", {}), list(d.get("notes", [])), d.get("mAP"))


def evaluate(dets_by_category, gt_by_category, method="voc11", iou_thresh=0.5, config=None, notes=()):
    aps = {}
    for cat in sorted(gt_by_category):
        curve = pr_curve(dets_by_category.get(cat, []), gt_by_category[cat], iou_thresh)
        aps[cat] = ap(curve, method)
    return EvalReport(aps, dict(config or {}), list(notes))


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def report_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "ap"])
    for cat, value in report.ap.items():
        writer.writerow([cat, f"{value:.6f}"])
    writer.writerow(["mAP", f"{report.mAP:.6f}"])
    return buf.getvalue()


def emit_report(report, format, path):
    """Write ``report`` as CSV (``category,ap`` rows plus ``mAP``) or full JSON."""
    if format not in ("csv", "json"):
        raise ValidationError("report format must be csv or json")
    text = report_csv(report) if format == "csv" else report_json(report)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))
