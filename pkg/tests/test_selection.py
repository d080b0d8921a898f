import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispose.geometry import KeypointSet, farthest_point_sampling, fps_indices, icosphere, make_shape, orbit_poses
from vispose.importance import build_knn_graph, importance, precompute_ppr, restart_vector
from vispose.render import Camera, SceneConfig, generate_scene, render_visible_mask
from vispose.selection import (SelectionConfig, evenly_distributed, merge_multiview_keypoints, select_top,
                               select_with_fallback)
from vispose.visibility import external_visibility, internal_visibility, oracle_visibility


def test_select_top_examples():
    assert select_top([0.4, 0.3, 0.2, 0.1], SelectionConfig(2)).to_list() == [0, 1]
    assert select_top([0.25] * 4, SelectionConfig(2)).to_list() == [0, 1]
    assert select_top([0.1, 0.2, 0.4, 0.3], SelectionConfig(2)).to_list() == [2, 3]


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_select_top_dominates_unselected(seed, n_sel):
    r = np.random.default_rng(seed).random(40)
    sel = select_top(r, SelectionConfig(n_sel))
    mask = np.zeros(40, bool)
    mask[sel.indices] = True
    assert len(sel.indices) == n_sel and np.all(np.diff(sel.indices) > 0)
    if n_sel < 40:
        assert r[mask].min() >= r[~mask].max()


def test_config_validation():
    with pytest.raises(ValueError):
        SelectionConfig(0)
    with pytest.raises(ValueError):
        SelectionConfig(4, 1.5)
    with pytest.raises(ValueError):
        select_top(np.ones(3), SelectionConfig(4))


def test_fallback_on_zero_visible_equals_fps():
    kps = farthest_point_sampling(icosphere(2), 64)
    sel = select_with_fallback(np.zeros(64, bool), None, kps, SelectionConfig(16))
    assert sel.used_fallback
    assert sel.to_list() == sorted(fps_indices(kps.points, 16, 0).tolist())
    assert np.array_equal(sel.indices, evenly_distributed(kps, 16))


def test_half_visible_uses_importance():
    kps = farthest_point_sampling(icosphere(2), 64)
    v = np.arange(64) < 32
    g = precompute_ppr(build_knn_graph(kps.points, 5))
    r = importance(g, restart_vector(v))
    sel = select_with_fallback(v, r, kps, SelectionConfig(16, 0.1))
    assert not sel.used_fallback
    assert sel.to_list() == select_top(r, SelectionConfig(16)).to_list()


def test_length_mismatch():
    kps = farthest_point_sampling(icosphere(1), 10)
    with pytest.raises(ValueError):
        select_with_fallback(np.ones(9, bool), None, kps, SelectionConfig(3))


@settings(max_examples=30)
@given(st.integers(0, 64), st.floats(0, 1), st.floats(0, 1))
def test_lower_threshold_never_triggers_fallback(n_vis, t1, t2):
    lo, hi = sorted((t1, t2))
    kps = farthest_point_sampling(icosphere(2), 64)
    v = np.arange(64) < n_vis
    r = np.linspace(1, 0, 64)
    a = select_with_fallback(v, r, kps, SelectionConfig(8, hi))
    b = select_with_fallback(v, r, kps, SelectionConfig(8, lo))
    if not a.used_fallback:
        assert not b.used_fallback


def test_merge_single_view_is_visible_fps():
    m = icosphere(3, 0.05)
    pose = orbit_poses(m, 1, 0.5)[0]
    kps = merge_multiview_keypoints([m], [pose], 40)
    assert len(kps) == 40 and np.all(kps.source_mesh == 0)
    vis = np.flatnonzero(internal_visibility(KeypointSet(m.vertices, m.vertex_normals, np.arange(m.n_vertices)), pose))
    expected = vis[fps_indices(m.vertices[vis], 40, 0)]
    assert np.array_equal(kps.source_indices, expected)


def test_merge_eight_views():
    m = make_shape("box")
    poses = orbit_poses(m, 8, 0.5)
    kps = merge_multiview_keypoints([m] * 8, poses, 512)
    assert len(kps) == 512
    for i, pose in enumerate(poses):
        part = kps.subset(np.flatnonzero(kps.source_mesh == i))
        assert len(part) == 64 and internal_visibility(part, pose).all()


def test_merge_errors():
    m = icosphere(1)
    pose = orbit_poses(m, 1, 0.5)[0]
    with pytest.raises(ValueError):
        merge_multiview_keypoints([m, m], [pose, pose], 5)
    with pytest.raises(ValueError):
        merge_multiview_keypoints([m], [pose], 40)  # fewer visible vertices than the quota
    with pytest.raises(ValueError):
        merge_multiview_keypoints([m], [], 4)


@pytest.mark.slow
def test_selection_raises_visible_precision():
    cam = Camera(572.4, 573.6, 325.3, 242.0, 640, 480)
    target = make_shape("box")
    occluders = [make_shape("cylinder"), make_shape("sphere")]
    kps = farthest_point_sampling(target, 512)
    g = precompute_ppr(build_knn_graph(kps.points, 20))
    wins = 0
    for i in range(100):
        scene = generate_scene(target, occluders, SceneConfig(cam), i)
        pose = scene.entries[0][1]
        mask = render_visible_mask(scene, cam)
        v = external_visibility(kps, pose, cam, mask) & internal_visibility(kps, pose)
        truth = oracle_visibility(target, kps, scene, cam)
        if not v.any():
            continue
        sel = select_top(importance(g, restart_vector(v)), SelectionConfig(256))
        wins += truth[sel.indices].mean() > truth.mean()
    assert wins >= 95
