import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from subnn.neighbors import BRUTE, SPATIAL, build_index, kth_nn_distance, query_knn, sorted_neighbor_order


def full_sort_oracle(points, x, k):
    d = np.sqrt(((points - x) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(len(points)), d))[:k]
    return order, d[order]


def test_empty_point_set_rejected():
    with pytest.raises(ValueError):
        build_index(np.empty((0, 2)))


def test_single_point_brute():
    idx = build_index([[0.5, 0.5]], mode=BRUTE)
    assert idx.n == 1
    nl = query_knn(idx, [0, 0], 1)
    assert nl.indices.tolist() == [0]


def test_collinear_modes_agree():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    a, b = build_index(pts, SPATIAL), build_index(pts, BRUTE)
    for x in ([0.4, 0.4], [1.5, 1.5], [3, 3]):
        for k in (1, 2, 3):
            na, nb = query_knn(a, x, k), query_knn(b, x, k)
            assert na.indices.tolist() == nb.indices.tolist()
            assert np.array_equal(na.distances, nb.distances)


def test_uniform_r5_modes_agree(rng):
    pts = rng.random((1000, 5))
    q = rng.random((100, 5))
    ia, da, _ = build_index(pts, SPATIAL).query(q, 10)
    ib, db, _ = build_index(pts, BRUTE).query(q, 10)
    assert np.array_equal(ia, ib)
    assert np.array_equal(da, db)


def test_line_example():
    idx = build_index(np.array([[0.0], [1.0], [3.0]]))
    nl = query_knn(idx, [0.0], 2)
    assert nl.indices.tolist() == [0, 1]
    assert nl.distances.tolist() == [0.0, 1.0]
    assert kth_nn_distance(idx, [0.0], 3) == 3.0


@pytest.mark.parametrize("mode", [SPATIAL, BRUTE])
def test_tie_goes_to_lower_index(mode):
    idx = build_index(np.array([[1.0, 0.0], [0.0, 1.0]]), mode)
    assert query_knn(idx, [0.0, 0.0], 1).indices.tolist() == [0]
    idx = build_index(np.array([[0.0, 1.0], [5.0, 5.0], [1.0, 0.0], [-1.0, 0.0]]), mode)
    assert query_knn(idx, [0.0, 0.0], 3).indices.tolist() == [0, 2, 3]


def test_full_sort_oracle_r3(rng):
    pts = rng.random((500, 3))
    idx = build_index(pts)
    for _ in range(20):
        x = rng.random(3)
        nl = query_knn(idx, x, 7)
        o_idx, o_d = full_sort_oracle(pts, x, 7)
        assert nl.indices.tolist() == o_idx.tolist()
        assert np.allclose(nl.distances, o_d, rtol=0, atol=1e-12)


def test_k_larger_than_n_is_clamped():
    idx = build_index(np.array([[0.0], [1.0], [3.0]]))
    nl = query_knn(idx, [0.0], 10)
    assert nl.clamped
    assert len(nl) == 3
    assert kth_nn_distance(idx, [0.0], 10) == 3.0
    assert not query_knn(idx, [0.0], 3).clamped


def test_errors():
    idx = build_index(np.zeros((3, 2)) + np.arange(3)[:, None])
    with pytest.raises(ValueError):
        query_knn(idx, [0.0, 0.0, 0.0], 1)
    with pytest.raises(ValueError):
        query_knn(idx, [0.0, 0.0], 0)


def test_data_point_has_zero_first_distance(rng):
    pts = rng.random((50, 4))
    idx = build_index(pts)
    assert all(kth_nn_distance(idx, p, 1) == 0.0 for p in pts)


def test_high_dim_falls_back_to_brute(rng):
    pts = rng.random((200, 40))
    idx = build_index(pts, SPATIAL)
    assert not idx.uses_tree
    q = rng.random((20, 40))
    ia, da, _ = idx.query(q, 5)
    ib, db, _ = build_index(pts, BRUTE).query(q, 5)
    assert np.array_equal(ia, ib) and np.array_equal(da, db)


def test_points_are_immutable(rng):
    pts = rng.random((10, 2))
    idx = build_index(pts)
    pts[0] = 100.0  # caller's array is copied
    assert idx.points[0, 0] < 1
    with pytest.raises(ValueError):
        idx.points[0, 0] = 5.0


def test_sorted_neighbor_order_matches_query(rng):
    pts = np.round(rng.random((300, 2)), 1)  # many duplicate distances
    q = np.round(rng.random((40, 2)), 1)
    idx = build_index(pts)
    for kmax in (5, 300):
        order = sorted_neighbor_order(idx, q, kmax)
        expect, _, _ = build_index(pts, BRUTE).query(q, kmax)
        assert np.array_equal(order, expect)


def test_concurrent_queries_identical(rng):
    from concurrent.futures import ThreadPoolExecutor

    pts = rng.random((2000, 3))
    q = rng.random((500, 3))
    idx = build_index(pts)
    ref = idx.query(q, 9)[0]
    with ThreadPoolExecutor(4) as ex:
        outs = list(ex.map(lambda _: idx.query(q, 9)[0], range(8)))
    assert all(np.array_equal(o, ref) for o in outs)


# ---------------------------------------------------------------- properties

point_sets = st.integers(1, 40).flatmap(
    lambda n: st.integers(1, 4).flatmap(
        lambda D: arrays(np.float64, (n, D), elements=st.integers(-4, 4).map(float))))


@settings(max_examples=60, deadline=None)
@given(point_sets, st.integers(1, 12), st.integers(0, 2**16))
def test_oracle_equivalence_property(pts, k, seed):
    # integer grid coordinates force many exact ties
    q = np.random.default_rng(seed).integers(-5, 6, (5, pts.shape[1])).astype(float)
    ia, da, ca = build_index(pts, SPATIAL).query(q, k)
    ib, db, cb = build_index(pts, BRUTE).query(q, k)
    assert np.array_equal(ia, ib) and np.array_equal(da, db) and ca == cb
    for row, x in zip(ia, q):
        o_idx, _ = full_sort_oracle(pts, x, k)
        assert row.tolist() == o_idx.tolist()


@settings(max_examples=40, deadline=None)
@given(point_sets, st.integers(0, 2**16))
def test_kth_distance_monotone_in_k(pts, seed):
    idx = build_index(pts)
    x = np.random.default_rng(seed).normal(size=pts.shape[1])
    r = [kth_nn_distance(idx, x, k) for k in range(1, len(pts) + 2)]
    assert all(a <= b for a, b in zip(r, r[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(1, 5), st.integers(0, 2**16))
def test_reordering_invariance_with_distinct_distances(n, k, seed):
    g = np.random.default_rng(seed)
    pts = g.random((n, 3))
    x = g.random(3)
    perm = g.permutation(n)
    a = query_knn(build_index(pts), x, k)
    b = query_knn(build_index(pts[perm]), x, k)
    assert perm[b.indices].tolist() == a.indices.tolist()
    assert np.array_equal(a.distances, b.distances)


def test_repeated_queries_deterministic(rng):
    pts = rng.random((300, 2))
    idx = build_index(pts)
    x = rng.random(2)
    a, b = query_knn(idx, x, 11), query_knn(idx, x, 11)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.distances, b.distances)
