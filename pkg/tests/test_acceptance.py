"""Acceptance suite: each test checks one criterion at its stated tolerance.

Every test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports what was measured.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from vispose import cli
from vispose.geometry import (KeypointSet, Pose, farthest_point_sampling, icosphere, make_shape, orbit_poses,
                              random_rotation, rot_z, rotation_angle_deg)
from vispose.importance import (build_knn_graph, graph_from_adjacency, importance, power_iteration_ppr, precompute_ppr,
                                restart_vector)
from vispose.metrics import add_metric, adds_metric, auc
from vispose.pipeline import DEFAULT_CAMERA, RunConfig, SimulateConfig, evaluate_dataset, simulate_dataset
from vispose.pnp import epnp, ransac_pnp
from vispose.render import MaskImage, Scene, render_silhouette
from vispose.selection import SelectionConfig, select_top
from vispose.symmetry import SymmetrySpec, canonical_angle, canonicalize, canonicalize_continuous
from vispose.visibility import (external_visibility, internal_visibility, labeling_accuracy, oracle_visibility,
                                project_points, view_dot_normal)

CAM = DEFAULT_CAMERA


def record(num, passed, detail):
    ACCEPTANCE[num] = (bool(passed), detail)
    assert passed, detail


def random_object_pose(rng):
    return Pose(random_rotation(rng), [rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.3, 1.0)])


def test_criterion_01_ppr_oracle_equivalence():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        k = (5, 20)[i % 2]
        c = (0.8, 0.85, 0.9)[i % 3]
        n = int(rng.integers(k + 2, 513))
        g = precompute_ppr(build_knn_graph(rng.normal(size=(n, 3)), k), c)
        v = rng.random(n) < rng.uniform(0.05, 0.95)
        v[rng.integers(n)] = True
        s = restart_vector(v)
        r = importance(g, s)
        p, _ = power_iteration_ppr(g, s, c, tol=1e-13)
        worst = max(worst, np.abs(r - p).max())
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-9 and elapsed < 30, f"max |closed - iterative| = {worst:.2e}, {elapsed:.1f} s")


def test_criterion_02_two_node_closed_form():
    g = precompute_ppr(graph_from_adjacency(np.array([[0, 1], [1, 0]])), 0.85)
    r = importance(g, np.array([1.0, 0.0]))
    err = np.abs(r - [20 / 37, 17 / 37]).max()  # (1 - c) / (1 - c^2) * (1, c)
    record(2, err <= 1e-12, f"r = ({r[0]:.12f}, {r[1]:.12f}), error {err:.1e}")


def test_criterion_03_continuous_minimality():
    rng = np.random.default_rng(1)
    theta = np.linspace(0.0, 2 * np.pi, 100_000, endpoint=False)
    cos, sin = np.cos(theta), np.sin(theta)
    t0 = time.perf_counter()
    worst_gap, worst_idem = -np.inf, 0.0
    for _ in range(1000):
        pose = random_object_pose(rng)
        u = pose.R.T @ pose.t
        a, b = u[0], u[1]
        th = canonical_angle(pose)
        f = a * np.cos(th) + b * np.sin(th)
        worst_gap = max(worst_gap, f - np.min(a * cos + b * sin))
        once = canonicalize_continuous(pose)
        worst_idem = max(worst_idem, np.abs(canonicalize_continuous(once).R - once.R).max())
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-9 and worst_idem <= 1e-9 and elapsed < 10
    record(3, ok, f"f(theta) - sweep min <= {worst_gap:.1e}, idempotence {worst_idem:.1e}, {elapsed:.1f} s")


def test_criterion_04_symmetry_consistency():
    rng = np.random.default_rng(2)
    spec = SymmetrySpec((np.eye(3),), ((0.0, 0.0, 1.0),))
    worst, n = 0.0, 0
    while n < 1000:
        pose = random_object_pose(rng)
        u = pose.R.T @ pose.t
        if np.hypot(u[0], u[1]) == 0:
            continue
        alpha = rng.uniform(0, 2 * np.pi)
        a = canonicalize(pose, spec, None, None)
        b = canonicalize(Pose(pose.R @ rot_z(alpha), pose.t), spec, None, None)
        worst = max(worst, np.abs(a.R - b.R).max())
        n += 1
    record(4, worst <= 1e-7, f"max elementwise difference {worst:.1e} over {n} pairs")


def test_criterion_05_convex_back_face_exactness():
    s = icosphere(3, 0.05)
    kps = KeypointSet(s.vertices, s.vertex_normals, np.arange(s.n_vertices))
    checked = wrong = 0
    per_view = []
    for pose in orbit_poses(s, 8, 0.5):
        oracle = oracle_visibility(s, kps, Scene(((s, pose),)), CAM)
        eq3 = internal_visibility(kps, pose)
        keep = np.abs(view_dot_normal(kps, pose, normalize=True)) >= 1e-6
        bad = int(np.sum(eq3[keep] != oracle[keep]))
        per_view.append(bad)
        checked += int(keep.sum())
        wrong += bad
    record(5, wrong == 0, f"{checked - wrong}/{checked} non-grazing keypoints agree; mismatches per view {per_view}")


def test_criterion_06_non_convex_mitigation():
    torus = make_shape("torus")
    kps = farthest_point_sampling(torus, 512)
    g = precompute_ppr(build_knn_graph(kps.points, 20), 0.85)
    rows, ok = [], True
    for pose in orbit_poses(torus, 8, 0.5):
        oracle = oracle_visibility(torus, kps, Scene(((torus, pose),)), CAM)
        v = internal_visibility(kps, pose) & external_visibility(kps, pose, CAM, render_silhouette(torus, pose, CAM))
        acc = labeling_accuracy(internal_visibility(kps, pose), oracle)
        sel = select_top(importance(g, restart_vector(v)), SelectionConfig(256))
        prec = float(oracle[sel.indices].mean())
        rows.append(f"{prec:.3f}/{acc:.3f}")
        ok &= prec > acc
    record(6, ok, "precision/accuracy per view " + " ".join(rows))


def test_criterion_07_pnp_round_trip():
    rng = np.random.default_rng(3)
    worst_r = worst_t = 0.0
    for _ in range(1000):
        X = rng.uniform(-0.05, 0.05, size=(20, 3))
        gt = Pose(random_rotation(rng), [rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.4, 1.0)])
        uv, _ = project_points(CAM, gt, X)
        est = epnp(X, uv, CAM)
        worst_r = max(worst_r, rotation_angle_deg(est.R, gt.R))
        worst_t = max(worst_t, np.linalg.norm(est.t - gt.t))
    epnp_ok = worst_r < 0.01 and worst_t < 1e-5

    good = 0
    for seed in range(100):
        rs = np.random.default_rng(1000 + seed)
        X = rs.uniform(-0.05, 0.05, size=(200, 3))
        diameter = np.linalg.norm(X[:, None] - X[None], axis=-1).max()
        gt = Pose(random_rotation(rs), [rs.uniform(-0.05, 0.05), rs.uniform(-0.05, 0.05), 0.3])
        uv, _ = project_points(CAM, gt, X)
        uv = uv + rs.standard_normal(uv.shape)
        out = rs.permutation(200)[:60]
        ang = rs.uniform(0, 2 * np.pi, 60)
        uv[out] += 50.0 * np.column_stack([np.cos(ang), np.sin(ang)])
        est = ransac_pnp(X, uv, CAM, seed=seed).pose
        good += rotation_angle_deg(est.R, gt.R) < 1.0 and np.linalg.norm(est.t - gt.t) < 0.01 * diameter
    record(7, epnp_ok and good >= 99,
           f"EPnP worst {worst_r:.1e} deg / {worst_t:.1e} m; RANSAC within tolerance on {good}/100 seeds")


def test_criterion_08_metric_identities():
    rng = np.random.default_rng(4)
    V = make_shape("box").vertices
    gt = random_object_pose(rng)
    checks = {"ADD(gt, gt) = 0": add_metric(V, gt, gt) == 0.0}
    delta = np.array([0.003, -0.004, 0.012])
    checks["ADD under translation = |delta|"] = add_metric(V, gt, Pose(gt.R, gt.t + delta)) == pytest.approx(
        np.linalg.norm(delta), rel=1e-12)
    pairs_ok = True
    for _ in range(1000):
        a, b = random_object_pose(rng), random_object_pose(rng)
        pairs_ok &= adds_metric(V, a, b) <= add_metric(V, a, b)
    checks["ADD-S <= ADD"] = pairs_ok
    checks["AUC(0) = 1"] = auc(np.zeros(50)) == 1.0 and auc(np.zeros(50), interpolate=True) == 1.0
    checks["AUC(out of range) = 0"] = auc(np.full(50, 0.5)) == 0.0 and auc(np.full(50, 0.5), interpolate=True) == 0.0
    uni = auc(rng.uniform(0, 0.1, 10_000))
    checks["AUC(uniform) ~ 0.5"] = abs(uni - 0.5) <= 0.02
    failed = [k for k, v in checks.items() if not v]
    record(8, not failed, f"uniform AUC {uni:.4f}; failed: {failed or 'none'}")


@pytest.mark.slow
def test_criterion_09_end_to_end_ordering(tmp_path):
    t0 = time.perf_counter()
    simulate_dataset(tmp_path, SimulateConfig(n_scenes=100, coverage_range=(0.3, 0.6), seed=0))
    report = evaluate_dataset(tmp_path, RunConfig(seed=0))
    elapsed = time.perf_counter() - t0
    m = report["summary"]["objects"]["box"]
    sel, alls, rnd = (m[v]["median_add"] for v in ("selection", "all", "random"))
    ok = (sel < alls and sel < rnd and m["selection"]["recall_01d"] >= m["all"]["recall_01d"]
          and report["summary"]["n_errors"] == 0 and elapsed < 300)
    record(9, ok, f"median ADD selection {sel:.5f} / all {alls:.5f} / random {rnd:.5f} m; "
                  f"0.1d recall {m['selection']['recall_01d']:.2f} vs {m['all']['recall_01d']:.2f}; {elapsed:.0f} s")


def test_criterion_10_determinism(tmp_path, occluded_dataset):
    args = [str(occluded_dataset), "--seed", "11", "--n", "128", "--n-select", "64"]
    assert cli.main(["evaluate", *args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["evaluate", *args, "--out", str(tmp_path / "b")]) == 0
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("report.json", "summary.csv", "summary.txt"))
    record(10, same, "report.json, summary.csv and summary.txt byte-identical across runs")
