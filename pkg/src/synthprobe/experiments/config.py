"""Experiment configuration: JSON sections mapped onto dataclasses with defaults."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ValidationError
from ..patches import SamplerSpec
from ..scene import PRESETS, preset

ALL_PRESETS = list(PRESETS)


@dataclass
class SceneSection:
    width: int = 64
    height: int = 64
    fov: float = 40.0
    azimuth_range: list = field(default_factory=lambda: [0.0, 360.0])
    elevation_range: list = field(default_factory=lambda: [-10.0, 30.0])
    distance_range: list = field(default_factory=lambda: [2.2, 2.8])
    in_plane_range: list = field(default_factory=lambda: [-10.0, 10.0])
    ambient: float = 0.3
    pool_size: int = 12
    preset: str = "RR-RR"


@dataclass
class SamplerSection:
    pos_min_iou: float = 0.7
    neg_max_iou: float = 0.3
    positives_per_box: int = 4
    negatives_per_image: int = 16
    jitter_fraction: float = 0.15
    neg_max_inside: float = 0.99

    def spec(self):
        return SamplerSpec(**asdict(self))


@dataclass
class ExtractorSection:
    backend: str = "gradhist"
    params: dict = field(default_factory=dict)
    weights: str | None = None
    net_seed: int = 0
    net_hidden: int = 64
    adapter: bool = False
    adapter_hidden: int = 512
    adapter_lr: float = 0.1
    adapter_epochs: int = 3
    adapter_batch: int = 32
    adapter_weight_decay: float = 1e-4


@dataclass
class ClassifierSection:
    C: float = 1.0
    epochs: int = 4
    nms: float = 0.3
    score_floor: float = -1.0
    hard_negatives: int = 0
    proposal_scales: list = field(default_factory=lambda: [22, 28, 34, 40, 48])
    stride_fraction: float = 0.15
    ap_method: str = "voc11"
    iou_thresh: float = 0.5


@dataclass
class ExperimentSection:
    seed: int = 0
    presets: list = field(default_factory=lambda: list(ALL_PRESETS))
    categories: int = 4
    variants: int = 8
    real_variants: int = 4
    virtual_per_category: int = 16
    test_per_category: int = 24
    real_per_category: int = 24
    vcnn_virtual_n: int = 160
    real_ks: list = field(default_factory=lambda: [0, 5, 10, 20])
    shape_fraction: float = 0.5
    shape_images_per_mesh: bool = True
    removal: str = "front"


SECTIONS = {
    "scene": SceneSection,
    "sampler": SamplerSection,
    "extractor": ExtractorSection,
    "classifier": ClassifierSection,
    "experiment": ExperimentSection,
}


@dataclass
class ExperimentConfig:
    scene: SceneSection = field(default_factory=SceneSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    extractor: ExtractorSection = field(default_factory=ExtractorSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in self.experiment.presets:
            preset(name)
        preset(self.scene.preset)
        if not 2 <= self.experiment.categories <= 4:
            raise ValidationError("experiment.categories must be between 2 and 4")
        if self.experiment.variants < 2 or self.experiment.real_variants < 1:
            raise ValidationError("need >= 2 virtual and >= 1 real shape variants per category")
        if self.experiment.removal not in ("none", "random", "front", "side"):
            raise ValidationError("experiment.removal must be none, random, front or side")
        if self.classifier.ap_method not in ("voc11", "continuous"):
            raise ValidationError("classifier.ap_method must be voc11 or continuous")
        if any(k < 0 for k in self.experiment.real_ks):
            raise ValidationError("real_ks must be non-negative")
        self.sampler.spec()

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        kwargs = {}
        out = data.pop("out", None)
        for name, section_cls in SECTIONS.items():
            raw = data.pop(name, {}) or {}
            if not isinstance(raw, dict):
                raise ValidationError(f"config section {name!r} must be an object")
            known = {f.name for f in fields(section_cls)}
            unknown = set(raw) - known
            if unknown:
                raise ValidationError(f"unknown keys in {name!r}: {sorted(unknown)}")
            try:
                kwargs[name] = section_cls(**raw)
            except TypeError as exc:
                raise ValidationError(f"bad {name!r} section: {exc}") from None
        if data:
            raise ValidationError(f"unknown config sections: {sorted(data)}")
        return cls(out=out, **kwargs)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        d = {name: asdict(getattr(self, name)) for name in SECTIONS}
        return d

    def fingerprint(self):
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()

    def write_fingerprint(self, out_dir, extra=None):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {"config": self.to_dict(), "sha256": self.fingerprint()}
        if extra:
            payload.update(extra)
        path = out_dir / "fingerprint.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def derive_seed(master, *parts):
    """Stable 63-bit seed from a master seed and any labels (e.g. preset names)."""
    text = "/".join([str(int(master))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little") >> 1
