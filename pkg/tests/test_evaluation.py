import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import voc11_bruteforce
from synthprobe.classify import Detection
from synthprobe.errors import ValidationError
from synthprobe.evaluation import (
    EvalReport,
    PrCurve,
    ap,
    emit_report,
    evaluate,
    load_report,
    mean_ap,
    pr_curve,
)
from synthprobe.patches import Box

GT = Box(10, 10, 30, 30)


def curve_from_tp(tp, num_gt):
    tp = np.asarray(tp, bool)
    c = np.cumsum(tp)
    return PrCurve(c / num_gt, c / np.arange(1, len(tp) + 1), num_gt, len(tp), tp)


def test_perfect_single():
    curve = pr_curve([Detection("a", GT, 0.9)], [("a", GT)])
    assert curve.points == [(1.0, 1.0)]
    assert ap(curve) == 1.0 and ap(curve, "continuous") == 1.0


def test_no_detections():
    curve = pr_curve([], [("a", GT)])
    assert curve.points == [] and ap(curve) == 0.0 and ap(curve, "continuous") == 0.0


def test_duplicate_on_target():
    dets = [Detection("a", GT, 0.8), Detection("a", GT.shift(1, 0), 0.9)]
    curve = pr_curve(dets, [("a", GT)])
    assert curve.points == [(1.0, 1.0), (1.0, 0.5)]
    assert ap(curve) == 1.0 == voc11_bruteforce([True, False], 1)


def test_duplicate_tie_is_order_independent():
    a, b = Detection("a", GT, 0.5), Detection("a", GT.shift(0, 1), 0.5)
    one, two = pr_curve([a, b], [("a", GT)]), pr_curve([b, a], [("a", GT)])
    assert one.tp.tolist() == two.tp.tolist() and one.tp.sum() == 1


def test_wrong_image_is_false_positive():
    curve = pr_curve([Detection("b", GT, 0.9)], [("a", GT)])
    assert curve.tp.tolist() == [False] and ap(curve) == 0.0


def test_each_gt_matched_once_and_best_iou():
    g1, g2 = Box(0, 0, 10, 10), Box(6, 0, 16, 10)
    # the detection overlaps g2 more, so g1 stays free for the second one
    dets = [Detection("a", Box(5, 0, 15, 10), 0.9), Detection("a", Box(0, 0, 10, 10), 0.8)]
    curve = pr_curve(dets, [("a", g1), ("a", g2)])
    assert curve.tp.tolist() == [True, True]


@given(st.lists(st.booleans(), max_size=10), st.integers(0, 3))
@settings(max_examples=200, deadline=None)
def test_voc11_matches_bruteforce(tp, extra):
    num_gt = sum(tp) + extra
    if num_gt == 0:
        return
    assert ap(curve_from_tp(tp, num_gt)) == voc11_bruteforce(tp, num_gt)


def test_unknown_method():
    with pytest.raises(ValidationError):
        ap(curve_from_tp([True], 1), "coco")


def test_methods_agree_on_random_curves():
    gaps = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(50, 200))
        tp = rng.uniform(size=n) < np.linspace(0.9, rng.uniform(0.0, 0.3), n)
        num_gt = max(1, int(tp.sum() + rng.integers(0, 10)))
        c = curve_from_tp(tp, num_gt)
        gaps.append(abs(ap(c) - ap(c, "continuous")))
    assert max(gaps) < 0.1


@given(st.lists(st.booleans(), min_size=1, max_size=30), st.integers(0, 5))
@settings(max_examples=150, deadline=None)
def test_lower_false_positive_never_helps(tp, extra):
    num_gt = max(1, sum(tp) + extra)
    for method in ("voc11", "continuous"):
        assert ap(curve_from_tp(tp + [False], num_gt), method) <= ap(curve_from_tp(tp, num_gt), method)


@given(st.permutations(range(4)))
@settings(max_examples=24, deadline=None)
def test_duplicates_any_order(order):
    dets = [Detection("a", GT.shift(i, 0), 0.7) for i in range(4)]
    curve = pr_curve([dets[i] for i in order], [("a", GT)])
    assert curve.tp.tolist() == [True, False, False, False]


def test_mean_ap():
    assert mean_ap({"a": 1.0}) == 1.0
    assert mean_ap({"a": 0.0, "b": 1.0}) == 0.5
    with pytest.raises(ValidationError):
        mean_ap({})


def test_report_invariants():
    with pytest.raises(ValidationError):
        EvalReport({"a": 1.2})
    with pytest.raises(ValidationError):
        EvalReport({"a": 0.5}, mAP=0.4)


def test_evaluate_orders_categories():
    dets = {"b": [Detection("i", GT, 1.0, "b")]}
    report = evaluate(dets, {"b": [("i", GT)], "a": [("i", GT)]}, notes=["toy"])
    assert list(report.ap) == ["a", "b"] and report.ap == {"a": 0.0, "b": 1.0} and report.mAP == 0.5


def test_emit_round_trip_and_bytes(tmp_path):
    report = EvalReport({"box": 0.25, "ball": 0.75}, {"seed": 3, "preset": "RR-RR"}, ["toy world"])
    emit_report(report, "json", tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back.to_dict() == report.to_dict()
    assert json.loads((tmp_path / "r.json").read_text())["config"]["seed"] == 3
    emit_report(report, "csv", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines == ["category,ap", "ball,0.750000", "box,0.250000", "mAP,0.500000"]
    emit_report(report, "json", tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == (tmp_path / "r.json").read_bytes()
    with pytest.raises(ValidationError):
        emit_report(report, "xml", tmp_path / "r.xml")
