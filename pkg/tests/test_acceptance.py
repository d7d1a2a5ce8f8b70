"""Acceptance criteria 1-10, each timed against its budget.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion. Criteria 7-10 run the toy-world experiments at
their default sizes and take a few minutes in total on one core.
"""
import itertools
import time

import numpy as np
import pytest

import test_features as feature_suite
import test_render as render_suite
import test_scene as scene_suite
from oracles import adapter_loss, finite_difference, svm_grid_oracle, voc11_bruteforce
from synthprobe.classify import score, svm_objective, train_svm
from synthprobe.cli import main
from synthprobe.evaluation import PrCurve, ap
from synthprobe.experiments import (
    ExperimentConfig,
    filter_views,
    make_context,
    real_pool,
    run_shape_ablation,
    run_texture_matrix,
    run_vcnn,
)
from synthprobe.features import loss_and_grad
from synthprobe.geometry import FixtureSpec, make_fixture, normalize_mesh
from synthprobe.render import Camera, PoseSpec
from synthprobe.scene import SceneConfig, generate_batch, read_manifest, write_manifest


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def _curve(tp, num_gt):
    c = np.cumsum(tp)
    return PrCurve(c / num_gt, c / np.arange(1, len(tp) + 1), num_gt, len(tp))


def test_criterion_1_ap_oracle(record_property):
    cases = []
    for length in range(1, 11):
        for tp in itertools.product((False, True), repeat=length):
            hits = sum(tp)
            for num_gt in sorted({max(hits, 1), hits + 2}):
                cases.append((tp, num_gt))
    with Timer() as oracle_time:
        want = [voc11_bruteforce(tp, n) for tp, n in cases]
    with Timer() as t:
        got = [ap(_curve(np.array(tp), n)) for tp, n in cases]
        perfect = ap(_curve(np.ones(4, bool), 4))
        empty = ap(_curve(np.zeros(0, bool), 3))
    mismatches = sum(g != w for g, w in zip(got, want))
    record_property("detail", f"{len(cases)} curves, {mismatches} mismatches, ap time {t.seconds:.2f}s "
                              f"(oracle {oracle_time.seconds:.2f}s)")
    assert mismatches == 0 and perfect == 1.0 and empty == 0.0
    assert t.seconds < 1.0


def test_criterion_2_svm_oracle(record_property):
    X = np.array([[1.0, 1.0], [2.0, 0.5], [-1.0, -1.0], [-0.5, -2.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    with Timer() as t:
        ratios = {}
        for C in (0.1, 1.0, 10.0):
            clf = train_svm(X, y, C=C)
            ratios[C] = svm_objective(clf.w, clf.b, X, y, C) / svm_grid_oracle(X, y, C)
            pair = train_svm([[-1.0], [1.0]], [-1, 1], C=C)
            assert score(pair, [-1.0]) < 0 < score(pair, [1.0])
    record_property("detail", "objective / grid optimum: " +
                    ", ".join(f"C={c}: {r:.4f}" for c, r in ratios.items()))
    assert all(r <= 1.02 for r in ratios.values())
    assert t.seconds < 5.0


def test_criterion_3_gradient_check(record_property):
    with Timer() as t:
        rng = np.random.default_rng(7)
        X = rng.normal(size=(5, 4))
        y = np.array([0, 1, 2, 1, 0])
        W, b, head = rng.normal(size=(6, 4)), rng.normal(size=6), rng.normal(size=(3, 6))
        loss, grads = loss_and_grad(W, b, head, X, y, 0.01)
        numeric = finite_difference(lambda: loss_and_grad(W, b, head, X, y, 0.01)[0], [W, b, head], 1e-4)
        worst = max(float((np.abs(g - n) / np.maximum(np.abs(g) + np.abs(n), 1e-8)).max())
                    for g, n in zip(grads, numeric))
    record_property("detail", f"max relative error {worst:.2e}")
    assert loss == pytest.approx(adapter_loss(W, b, head, X, y, 0.01), rel=1e-12)
    assert worst < 1e-4 and t.seconds < 1.0


def test_criterion_4_forward_oracle(record_property):
    with Timer() as t:
        feature_suite.test_fixture_matches_reference()
        feature_suite.test_shape_formula()
        for seed in range(10):
            feature_suite.test_random_stacks_against_scalar_oracle(seed)
    record_property("detail", "fixture nets and 10 random stacks")
    assert t.seconds < 5.0


def test_criterion_5_rendering(record_property, tmp_path):
    with Timer() as t:
        render_suite.test_render_determinism()
        render_suite.test_depth_ordering_in_one_mesh()
        render_suite.test_square_matches_corner_projection()
        render_suite.test_binary_alpha_and_gray_achromatic()
        for az in (0.0, 90.0):
            render_suite.test_half_turn_mirrors_symmetric_cube(az)
        scene_suite.test_boxes_equal_mask_tight_box()
        scene_suite.test_white_composite_tight_box()
        scene_suite.test_real_gray_background_is_achromatic()
        scene_suite.test_w_ug_background_white_object_gray()
        scene_suite.test_batch_counts_balance_and_determinism(tmp_path)
    record_property("detail", "determinism, depth, tight boxes, achromatic modes")
    assert t.seconds < 30.0


def test_criterion_6_protocol_structure(record_property, tmp_path):
    with Timer() as t:
        meshes = [normalize_mesh(make_fixture(FixtureSpec(kind))).with_category(cat)
                  for cat, kind in (("a", "cube"), ("b", "uv_sphere"), ("c", "torus"))]
        cfg = SceneConfig.from_preset("W-UG", pose_spec=PoseSpec(), camera=Camera(fov=40, width=24, height=24))
        ds = generate_batch(meshes, cfg, 2000, 11)
        counts = ds.category_counts()
        assert len(ds) == 2000 and sum(counts.values()) == 2000
        assert max(counts.values()) - min(counts.values()) <= 1
        for removal in ("front", "side"):
            kept = filter_views(ds, removal, 0)
            assert not any(b.view == removal for it in kept for b in it.boxes)
            assert len(kept) < len(ds)
        rnd = filter_views(ds, "random", 0)
        assert len(ds) - len(rnd) == len(ds) - len(filter_views(ds, "front", 0))
        first = write_manifest(ds, tmp_path / "a" / "m.jsonl")
        again = write_manifest(read_manifest(first), tmp_path / "b" / "m.jsonl")
        assert first.read_bytes() == again.read_bytes()
    record_property("detail", f"2000 images, counts {dict(sorted(counts.items()))}")


SEEDS_7 = range(5)
SEEDS_8 = range(8)
SEEDS_9 = range(5)


def test_criterion_7_texture_invariance(record_property):
    with Timer() as t:
        gaps = {}
        for backend in ("pixels", "gradhist"):
            cfg = ExperimentConfig.from_dict({"extractor": {"backend": backend}})
            per_seed = []
            for seed in SEEDS_7:
                m = run_texture_matrix(cfg, presets=["RR-RR", "W-UG"], ctx=make_context(cfg, seed=seed))
                per_seed.append(m.gap("RR-RR", "W-UG"))
            gaps[backend] = float(np.mean(per_seed))
    record_property("detail", f"mean gap RR-RR minus W-UG: pixels {gaps['pixels']:.3f}, "
                              f"gradhist {gaps['gradhist']:.3f}")
    assert gaps["pixels"] > gaps["gradhist"]
    assert t.seconds < 180


def test_criterion_8_shape_ablation(record_property):
    cfg = ExperimentConfig()
    with Timer() as t:
        full, reduced = [], []
        for seed in SEEDS_8:
            ctx = make_context(cfg, seed=seed)
            a, b = run_shape_ablation(ctx.world.meshes_by_category(), 0.5, cfg, ctx=ctx)
            full.append(a.mAP)
            reduced.append(b.mAP)
    record_property("detail", f"mean mAP all meshes {np.mean(full):.3f}, half {np.mean(reduced):.3f} "
                              f"over {len(full)} seeds")
    assert np.mean(reduced) <= np.mean(full)
    assert t.seconds < 180


def test_criterion_9_vcnn(record_property):
    cfg = ExperimentConfig()
    n = cfg.experiment.vcnn_virtual_n
    ks = cfg.experiment.real_ks
    with Timer() as t:
        off, on = [], []
        for seed in SEEDS_9:
            ctx = make_context(cfg, seed=seed)
            pool = real_pool(ctx.world, cfg, seed)
            off.append(run_vcnn(n, [0], False, cfg, ctx=ctx, pool=pool)[0][1].mAP)
            on.append([r.mAP for _, r in run_vcnn(n, ks, True, cfg, ctx=ctx, pool=pool)])
    curve = np.mean(on, axis=0)
    record_property("detail", f"k=0 off {np.mean(off):.3f} vs on {curve[0]:.3f}; curve over k={ks}: "
                              + ", ".join(f"{v:.3f}" for v in curve))
    assert curve[0] >= np.mean(off)
    assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert t.seconds < 300


def test_criterion_10_matrix_cli(record_property, tmp_path):
    outputs = []
    durations = []
    for run in ("first", "second"):
        with Timer() as t:
            status = main(["matrix", "--seed", "0", "--out", str(tmp_path / run)])
        durations.append(t.seconds)
        assert status == 0
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())})
    reports = [name for name in outputs[0] if name != "fingerprint.json"]
    record_property("detail", f"{len(reports)} reports, runs took "
                              + " and ".join(f"{d:.0f}s" for d in durations))
    assert len(reports) == 6
    assert outputs[0] == outputs[1]
    assert max(durations) < 300
