"""Experiment harness: configuration, toy world, pipeline and protocols."""
from .config import ExperimentConfig, derive_seed
from .protocols import (
    MatrixResult,
    REFERENCES,
    filter_views,
    make_context,
    run_shape_ablation,
    run_texture_matrix,
    run_vcnn,
    run_view_ablation,
)
from .world import ToyWorld, build_world, real_pool, test_set

__all__ = [
    "ExperimentConfig", "MatrixResult", "REFERENCES", "ToyWorld", "build_world", "derive_seed",
    "filter_views", "make_context", "real_pool", "run_shape_ablation", "run_texture_matrix",
    "run_vcnn", "run_view_ablation", "test_set",
]
