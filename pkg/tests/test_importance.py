import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispose.importance import (build_knn_graph, graph_from_adjacency, importance, importance_to_json, knn_indices,
                                power_iteration_ppr, precompute_ppr, restart_vector)

TWO_CYCLE = np.array([[0, 1], [1, 0]])


def cycle_graph(n):
    # symmetric 2-NN ring: each node points to both neighbours
    A = np.zeros((n, n), dtype=int)
    for i in range(n):
        A[i, (i - 1) % n] = A[i, (i + 1) % n] = 1
    return graph_from_adjacency(A)


def random_graph(rng, n, k):
    return build_knn_graph(rng.normal(size=(n, 3)), k)


# --- graph ------------------------------------------------------------------------

def test_collinear_example():
    g = build_knn_graph(np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]]), 1)
    assert g.edges() == [(0, 1), (1, 0), (2, 1)]
    assert g.edge_list_text() == "0 1\n1 0\n2 1\n"


def test_distance_tie_prefers_lower_index():
    # point 1 is equidistant from 0 and 2
    assert knn_indices(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), 1)[1, 0] == 0


def test_k_equal_n_minus_one_is_complete():
    g = build_knn_graph(np.random.default_rng(0).normal(size=(6, 3)), 5)
    assert np.array_equal(g.adjacency, 1 - np.eye(6, dtype=int))


def test_default_size_degrees_and_column_sums():
    g = random_graph(np.random.default_rng(1), 512, 20)
    assert np.all(g.adjacency.sum(axis=1) == 20)
    assert not np.any(np.diag(g.adjacency))
    assert np.abs(g.transition.sum(axis=0) - 1).max() <= 1e-12


def test_graph_errors():
    with pytest.raises(ValueError):
        build_knn_graph(np.zeros((3, 3)), 1)  # duplicates
    with pytest.raises(ValueError):
        build_knn_graph(np.eye(3), 3)
    with pytest.raises(ValueError):
        graph_from_adjacency(np.eye(2))


def test_graph_is_immutable():
    g = random_graph(np.random.default_rng(2), 10, 3)
    with pytest.raises(ValueError):
        g.transition[0, 0] = 1.0


# --- PPR ----------------------------------------------------------------------------

def test_two_cycle_closed_form():
    g = precompute_ppr(graph_from_adjacency(TWO_CYCLE), 0.85)
    c = 0.85
    expected = (1 - c) / (1 - c * c) * np.array([[1, c], [c, 1]])
    assert np.abs(g.ppr_matrix - expected).max() <= 1e-12
    r = importance(g, [1.0, 0.0])
    assert r[0] == pytest.approx(0.5405405405405406, abs=1e-12)
    assert r[1] == pytest.approx(0.4594594594594595, abs=1e-12)
    p, _ = power_iteration_ppr(g, [1.0, 0.0], 0.85, tol=1e-14)
    assert np.abs(p - r).max() <= 1e-13


def test_small_damping_approaches_identity():
    g = precompute_ppr(random_graph(np.random.default_rng(3), 50, 5), 0.01)
    assert np.abs(g.ppr_matrix - np.eye(50)).max() <= 0.02


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.8, 0.85, 0.9]))
def test_ppr_columns_stochastic(seed, c):
    rng = np.random.default_rng(seed)
    g = precompute_ppr(random_graph(rng, int(rng.integers(10, 120)), 5), c)
    assert np.abs(g.ppr_matrix.sum(axis=0) - 1).max() <= 1e-9
    assert g.ppr_matrix.min() >= 0


def test_invalid_damping():
    g = graph_from_adjacency(TWO_CYCLE)
    for c in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            precompute_ppr(g, c)


def test_restart_vector():
    assert restart_vector([1, 0, 1]).tolist() == [0.5, 0.0, 0.5]
    assert restart_vector([1, 1, 1, 1]).tolist() == [0.25] * 4
    with pytest.raises(ValueError, match="empty restart support"):
        restart_vector([0, 0, 0])


def test_importance_errors():
    g = graph_from_adjacency(TWO_CYCLE)
    with pytest.raises(ValueError):
        importance(g, [1.0, 0.0])  # no T_ppr yet
    with pytest.raises(ValueError):
        importance(precompute_ppr(g), [1.0, 0.0, 0.0])


def test_uniform_restart_on_cycle_is_fixed_point():
    g = precompute_ppr(cycle_graph(12))
    s = np.full(12, 1 / 12)
    assert np.abs(importance(g, s) - s).max() <= 1e-9
    r, iters = power_iteration_ppr(g, s)
    assert iters == 1 and np.abs(r - s).max() <= 1e-15


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([5, 20]), st.sampled_from([0.8, 0.85, 0.9]))
def test_closed_form_matches_power_iteration(seed, k, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(k + 2, 300))
    g = precompute_ppr(random_graph(rng, n, k), c)
    s = restart_vector(rng.random(n) < 0.5 + np.eye(1, n, 0)[0])
    r = importance(g, s)
    p, _ = power_iteration_ppr(g, s, c)
    assert np.abs(r - p).max() <= 1e-10
    assert r.min() >= 0 and r.sum() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("c", [0.5, 0.85, 0.95])
def test_power_iteration_bound(c):
    # the L1 change contracts by c per step, starting from at most 2
    g = random_graph(np.random.default_rng(4), 80, 5)
    s = restart_vector(np.arange(80) < 10)
    tol = 1e-10
    _, iters = power_iteration_ppr(g, s, c, tol=tol)
    assert iters <= int(np.ceil(np.log(tol / 2) / np.log(c))) + 1


def test_power_iteration_rejects_bad_tol():
    with pytest.raises(ValueError):
        power_iteration_ppr(graph_from_adjacency(TWO_CYCLE), [1.0, 0.0], tol=0)


# --- properties ----------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_visible_keypoints_score_higher_on_average(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(100, 3))
    g = precompute_ppr(build_knn_graph(P, 10))
    v = P[:, 0] > np.median(P[:, 0])  # a spatially coherent visible half
    r = importance(g, restart_vector(v))
    assert r[v].mean() > r[~v].mean()


def test_path_graph_locality():
    n = 20
    A = np.zeros((n, n), dtype=int)
    A[0, 1] = A[n - 1, n - 2] = 1
    for i in range(1, n - 1):
        A[i, i - 1] = A[i, i + 1] = 1
    # ends have out-degree 1; pad with a second edge to keep regularity
    A[0, 2] = A[n - 1, n - 3] = 1
    g = precompute_ppr(graph_from_adjacency(A))
    v = np.zeros(n, bool)
    v[:3] = True
    r = importance(g, restart_vector(v))
    assert np.all(np.diff(r[3:]) <= 1e-15)


def test_damping_continuity():
    g = random_graph(np.random.default_rng(5), 200, 20)
    s = restart_vector(np.arange(200) % 3 == 0)
    r1 = importance(precompute_ppr(g, 0.85), s)
    r2 = importance(precompute_ppr(g, 0.85 + 1e-6), s)
    assert np.abs(r1 - r2).max() < 1e-4


def test_importance_json():
    assert importance_to_json(np.array([0.5, 0.5])) == "[0.5, 0.5]"
