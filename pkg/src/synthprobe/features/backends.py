"""Pixel, gradient-histogram and precomputed feature backends."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..images import LUMA, as_float, sample_windows


def l2_normalize(x, axis=-1):
    """Scale rows to unit L2 norm; zero rows pass through unchanged."""
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


def _as_batch(patches):
    arr = as_float(patches)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValidationError(f"expected (N, H, W, C) patches, got shape {arr.shape}")
    return arr[..., :3]


def resize_batch(patches, side):
    """Bilinearly resize a batch of ``(N, H, W, 3)`` patches to ``side x side``."""
    patches = _as_batch(patches)
    n, h, w = patches.shape[:3]
    if (h, w) == (side, side):
        return patches
    return np.stack([sample_windows(p, [(0, 0, w, h)], side)[0] for p in patches]) if n else (
        np.zeros((0, side, side, 3))
    )


def pixels_many(patches, side=8):
    small = resize_batch(patches, side)
    return l2_normalize(small.reshape(len(small), -1))


def extract_pixels(patch, side=8):
    """Resize to ``side x side``, flatten RGB row-major and L2-normalize."""
    return pixels_many(patch, side)[0]


def gradhist_many(patches, cells=4, bins=9):
    patches = _as_batch(patches)
    n, h, w = patches.shape[:3]
    if min(h, w) < 2 * cells:
        raise ValidationError(f"patch side must be >= 2 * cells ({2 * cells}), got {h}x{w}")
    gray = patches @ LUMA
    padded = np.pad(gray, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = (padded[:, 1:-1, 2:] - padded[:, 1:-1, :-2]) / 2.0
    gy = (padded[:, 2:, 1:-1] - padded[:, :-2, 1:-1]) / 2.0
    mag = np.hypot(gx, gy)
    angle = np.mod(np.arctan2(gy, gx), math.pi)
    bin_idx = np.minimum((angle / (math.pi / bins)).astype(np.int64), bins - 1)
    ycell = np.arange(h) * cells // h
    xcell = np.arange(w) * cells // w
    cell = ycell[:, None] * cells + xcell[None, :]
    flat = (np.arange(n)[:, None, None] * cells * cells + cell[None]) * bins + bin_idx
    hist = np.bincount(flat.ravel(), weights=mag.ravel(), minlength=n * cells * cells * bins)
    hist = hist.reshape(n, cells * cells, bins)
    hist = hist / (np.linalg.norm(hist, axis=2, keepdims=True) + 1e-6)
    return l2_normalize(hist.reshape(n, -1))


def extract_gradhist(patch, cells=4, bins=9):
    """Unsigned orientation histograms of central-difference gradients on an n x n cell grid."""
    return gradhist_many(patch, cells, bins)[0]


class PrecomputedStore:
    """Feature vectors looked up by patch id, loaded from JSON lines ``{id, values}``."""

    def __init__(self, vectors):
        self.vectors = {}
        dim = None
        for key, values in vectors.items():
            v = np.asarray(values, dtype=np.float64)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValidationError(f"vector {key!r} must be a finite 1-D list")
            if dim is None:
                dim = len(v)
            elif len(v) != dim:
                raise ValidationError(f"vector {key!r} has dim {len(v)}, expected {dim}")
            self.vectors[key] = v
        self.dim = dim or 0

    @classmethod
    def load(cls, path):
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key, values = rec["id"], rec["values"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise ValidationError(f"{path}: line {lineno}: expected {{id, values}}") from None
                if key in vectors:
                    raise ValidationError(f"{path}: line {lineno}: duplicate id {key!r}")
                vectors[key] = values
        return cls(vectors)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.vectors):
                fh.write(json.dumps({"id": key, "values": self.vectors[key].tolist()}) + "\n")

    def __getitem__(self, key):
        try:
            return self.vectors[key]
        except KeyError:
            raise KeyError(f"no precomputed vector for id {key!r}") from None

    def __contains__(self, key):
        return key in self.vectors


def precomputed_store(path):
    return PrecomputedStore.load(Path(path))
