"""Pluggable patch feature extraction.

An ``Extractor`` wraps one backend (``pixels``, ``gradhist``, ``convnet`` or
``precomputed``) and an optional trained ``Adapter`` applied on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ValidationError
from .adapter import Adapter, adapt, adapt_many, loss_and_grad, predict, train_adapter
from .backends import (
    PrecomputedStore,
    extract_gradhist,
    extract_pixels,
    gradhist_many,
    l2_normalize,
    pixels_many,
    precomputed_store,
)
from .convnet import (
    ConvNetSpec,
    convnet_forward,
    convnet_many,
    load_convnet,
    random_convnet,
    save_convnet,
)

BACKENDS = ("pixels", "gradhist", "convnet", "precomputed")

_DEFAULTS = {
    "pixels": {"side": 8},
    "gradhist": {"patch_size": 16, "cells": 4, "bins": 9},
    "convnet": {},
    "precomputed": {},
}


@dataclass(frozen=True, eq=False)
class Extractor:
    backend: str
    params: dict = field(default_factory=dict)
    net: ConvNetSpec | None = None
    store: PrecomputedStore | None = None
    adapter: Adapter | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValidationError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        object.__setattr__(self, "params", {**_DEFAULTS[self.backend], **self.params})
        if self.backend == "convnet" and self.net is None:
            raise ValidationError("convnet backend needs a loaded net")
        if self.backend == "precomputed" and self.store is None:
            raise ValidationError("precomputed backend needs a store")
        if self.backend == "gradhist" and self.params["patch_size"] < 2 * self.params["cells"]:
            raise ValidationError("gradhist patch_size must be >= 2 * cells")
        if self.adapter is not None and self.adapter.input_dim != self.base_dim:
            raise ValidationError(
                f"adapter expects dim {self.adapter.input_dim}, backend produces {self.base_dim}"
            )

    @property
    def patch_size(self):
        """Side length patches are cropped to before extraction."""
        if self.backend == "pixels":
            return self.params["side"]
        if self.backend == "gradhist":
            return self.params["patch_size"]
        if self.backend == "convnet":
            return self.net.input_size
        return 0

    @property
    def base_dim(self):
        p = self.params
        if self.backend == "pixels":
            return 3 * p["side"] ** 2
        if self.backend == "gradhist":
            return p["cells"] ** 2 * p["bins"]
        if self.backend == "convnet":
            return self.net.dim
        return self.store.dim

    @property
    def dim(self):
        return self.adapter.hidden_dim if self.adapter is not None else self.base_dim

    def with_adapter(self, adapter):
        return replace(self, adapter=adapter)

    def base_many(self, patches):
        p = self.params
        if self.backend == "pixels":
            return pixels_many(patches, p["side"])
        if self.backend == "gradhist":
            return gradhist_many(patches, p["cells"], p["bins"])
        if self.backend == "convnet":
            return convnet_many(self.net, patches)
        raise ValidationError("precomputed backend looks vectors up by id; use extract_ids")

    def extract_many(self, patches):
        feats = self.base_many(patches)
        return adapt_many(self.adapter, feats) if self.adapter is not None else feats

    def extract(self, patch):
        return self.extract_many(np.asarray(patch)[None])[0]

    def extract_ids(self, ids):
        feats = np.stack([self.store[i] for i in ids]) if len(ids) else np.zeros((0, self.store.dim))
        return adapt_many(self.adapter, feats) if self.adapter is not None else feats

    def describe(self):
        d = {"backend": self.backend, "params": dict(self.params), "dim": self.dim,
             "adapter": self.adapter is not None}
        if self.net is not None:
            d["net_params"] = self.net.num_params
        return d


__all__ = [
    "Adapter", "BACKENDS", "ConvNetSpec", "Extractor", "PrecomputedStore", "adapt", "adapt_many",
    "convnet_forward", "convnet_many", "extract_gradhist", "extract_pixels", "gradhist_many",
    "l2_normalize", "load_convnet", "loss_and_grad", "pixels_many", "precomputed_store", "predict",
    "random_convnet", "save_convnet", "train_adapter",
]
