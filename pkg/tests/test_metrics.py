import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispose.geometry import Pose, icosphere, make_shape, random_rotation
from vispose.metrics import MetricReport, add_metric, add_s_mixed, adds_metric, aggregate, auc, threshold_recall

VERTS = make_shape("box").vertices


def rand_pose(rng):
    return Pose(random_rotation(rng), rng.normal(scale=0.1, size=3) + [0, 0, 0.5])


def test_add_identities():
    rng = np.random.default_rng(0)
    gt = rand_pose(rng)
    assert add_metric(VERTS, gt, gt) == 0.0
    assert adds_metric(VERTS, gt, gt) == 0.0
    delta = np.array([0.003, -0.004, 0.0])
    assert add_metric(VERTS, gt, Pose(gt.R, gt.t + delta)) == pytest.approx(0.005, abs=1e-15)


def test_add_matches_brute_force():
    rng = np.random.default_rng(1)
    gt, est = rand_pose(rng), rand_pose(rng)
    brute = np.mean([np.linalg.norm((gt.R @ x + gt.t) - (est.R @ x + est.t)) for x in VERTS])
    assert add_metric(VERTS, gt, est) == pytest.approx(brute, rel=1e-12)
    d = np.linalg.norm(gt.transform(VERTS)[:, None] - est.transform(VERTS)[None], axis=-1).min(axis=1)
    assert adds_metric(VERTS, gt, est) == pytest.approx(d.mean(), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_add_symmetric_and_adds_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_pose(rng), rand_pose(rng)
    assert add_metric(VERTS, a, b) == pytest.approx(add_metric(VERTS, b, a), rel=1e-12)
    assert adds_metric(VERTS, a, b) <= add_metric(VERTS, a, b) + 1e-15


def test_adds_on_rotated_sphere_is_bounded_by_tessellation():
    # every point of the sphere lies within a triangle circumradius of some vertex
    rng = np.random.default_rng(2)
    gt = Pose(np.eye(3), [0, 0, 0.5])
    for level in (3, 5):
        s = icosphere(level, 0.05)
        edge = np.linalg.norm(s.vertices[s.faces[:, 0]] - s.vertices[s.faces[:, 1]], axis=1).max()
        for _ in range(10):
            est = Pose(random_rotation(rng), gt.t)
            d = adds_metric(s.vertices, gt, est)
            assert d < edge / np.sqrt(3)
            assert add_s_mixed(s.vertices, gt, est, True) == d
            assert add_s_mixed(s.vertices, gt, est, False) == add_metric(s.vertices, gt, est)
        if level == 5:
            assert d < 0.02 * 0.05


def test_threshold_recall_examples():
    assert threshold_recall(0.0, 1.0, 0.02) == 1
    assert threshold_recall(0.05, 1.0, 0.05) == 0
    assert [threshold_recall(0.03, 1.0, x) for x in (0.02, 0.05, 0.1)] == [0, 1, 1]
    with pytest.raises(ValueError):
        threshold_recall(0.0, 0.0, 0.1)


def test_auc_cases():
    for interp in (False, True):
        assert auc(np.zeros(10), interpolate=interp) == 1.0
        assert auc(np.full(10, 0.2), interpolate=interp) == 0.0
        assert auc([np.inf, np.nan], interpolate=interp) == 0.0
    d = np.random.default_rng(3).uniform(0, 0.1, 10_000)
    assert abs(auc(d) - 0.5) <= 0.02
    assert abs(auc(d, interpolate=True) - 0.5) <= 0.06
    # exact area of a single step at d: 1 - d / max
    assert auc([0.025]) == pytest.approx(0.75)
    # 11-point: thresholds 0.0, 0.01, ..., 0.1; d = 0.025 counts from 0.03 on
    assert auc([0.025], interpolate=True) == pytest.approx(8 / 11)
    with pytest.raises(ValueError):
        auc([])
    with pytest.raises(ValueError):
        auc([0.1], max_threshold=0)


def test_report_and_recall_chain():
    rng = np.random.default_rng(4)
    gt = rand_pose(rng)
    diam = 0.2
    for shift in (0.0, 0.003, 0.007, 0.015, 0.05):
        rep = MetricReport.compute(VERTS, gt, Pose(gt.R, gt.t + [shift, 0, 0]), diam)
        assert rep.add_s <= rep.add + 1e-15
        assert rep.recall_002d <= rep.recall_005d <= rep.recall_01d
    fail = MetricReport.compute(VERTS, gt, None, diam)
    assert math.isinf(fail.add) and fail.recall_01d == 0
    assert set(fail.to_dict()) == {"add", "add_s", "recall_002d", "recall_005d", "recall_01d"}


def test_aggregate():
    reps = [MetricReport(0.01, 0.005, 0, 1, 1), MetricReport(0.02, 0.01, 0, 0, 1),
            MetricReport(float("inf"), float("inf"), 0, 0, 0)]
    agg = aggregate(reps)
    assert agg["n"] == 3 and agg["median_add"] == 0.02
    assert agg["recall_01d"] == pytest.approx(2 / 3)
    assert agg["auc_add_s"] == pytest.approx((0.95 + 0.9 + 0) / 3)
    assert agg["auc_add_s_mixed"] == pytest.approx((0.9 + 0.8 + 0) / 3)
    assert aggregate(reps, symmetric=True)["auc_add_s_mixed"] == agg["auc_add_s"]
    with pytest.raises(ValueError):
        aggregate([])
