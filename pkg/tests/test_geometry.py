import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cloud
from oracles import brute_radius, partition, union_find_labels
from pepperharvest.errors import EmptyCloud, NonPositiveRadius, TooFewPoints
from pepperharvest.geometry import (
    ColorPointCloud,
    SpatialIndex,
    SurfaceSamples,
    aabb,
    cluster_indices,
    detect_boundary,
    estimate_normals,
    euclidean_cluster,
    read_ply,
    statistical_outlier_removal,
    voxel_downsample,
    write_ply,
)
from pepperharvest.geometry import kernels
from pepperharvest.geometry.index import build_grid


# ---------------------------------------------------------------- spatial index


def test_single_point_radius_query():
    idx = SpatialIndex(np.array([[0.1, 0.2, 0.3]]))
    assert idx.radius([0.1, 0.2, 0.3], 0.01).tolist() == [0]


def test_collinear_points_radius():
    idx = SpatialIndex(np.array([[0.0, 0, 0], [0.01, 0, 0], [0.02, 0, 0]]))
    assert idx.radius([0.01, 0, 0], 0.011).tolist() == [0, 1, 2]


def test_random_cloud_matches_brute_force(rng):
    pts = rng.uniform(0, 1, (200, 3))
    idx = SpatialIndex(pts)
    for q in rng.uniform(0, 1, (50, 3)):
        np.testing.assert_array_equal(idx.radius(q, 0.15), brute_radius(pts, q, 0.15))


def test_knn_matches_brute_force(rng):
    pts = rng.uniform(0, 1, (300, 3))
    idx = SpatialIndex(pts)
    for q in rng.uniform(0, 1, (30, 3)):
        got, dist = idx.knn(q, 7)
        d = np.linalg.norm(pts - q, axis=1)
        want = np.lexsort((np.arange(len(pts)), d))[:7]
        np.testing.assert_array_equal(got, want)
        np.testing.assert_allclose(dist, d[want], rtol=0, atol=1e-15)


def test_knn_pads_when_k_exceeds_cloud():
    idx = SpatialIndex(np.zeros((2, 3)))
    i, d = idx.knn_batch(np.zeros((1, 3)), 4)
    assert i[0].tolist() == [0, 1, -1, -1]
    assert np.isinf(d[0, 2:]).all()


def test_index_rejects_bad_input():
    with pytest.raises(EmptyCloud):
        SpatialIndex(np.zeros((0, 3)))
    with pytest.raises(NonPositiveRadius):
        SpatialIndex(np.zeros((1, 3))).radius([0, 0, 0], 0.0)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=st.floats(-1, 1)),
    st.floats(0.01, 0.8),
)
def test_radius_property(points, r):
    idx = SpatialIndex(points)
    for q in points[:5]:
        np.testing.assert_array_equal(idx.radius(q, r), brute_radius(points, q, r))


# ---------------------------------------------------------------- downsampling


def test_voxel_empty():
    assert len(voxel_downsample(ColorPointCloud.empty(), 0.002)) == 0


def test_voxel_two_close_points_merge_at_midpoint():
    c = cloud([[0.0003, 0.0003, 0.0003], [0.0013, 0.0003, 0.0003]], [[10, 20, 30], [20, 40, 61]])
    out = voxel_downsample(c, 0.002)
    assert len(out) == 1
    np.testing.assert_allclose(out.points[0], [0.0008, 0.0003, 0.0003])
    assert out.colors[0].tolist() == [15, 30, 46]  # 45.5 rounds half-up


def test_voxel_grid_points_unchanged_in_count():
    pts = [[x, y, 0.0001] for x in (0.0001, 0.0051) for y in (0.0001, 0.0051)]
    assert len(voxel_downsample(cloud(pts), 0.002)) == 4


def test_voxel_inverse_maps_members(rng):
    c = cloud(rng.uniform(0, 0.02, (500, 3)))
    out, inv = voxel_downsample(c, 0.005, return_inverse=True)
    for k in range(len(out)):
        np.testing.assert_allclose(out.points[k], c.points[inv == k].mean(axis=0))
    with pytest.raises(NonPositiveRadius):
        voxel_downsample(c, 0)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 80), st.just(3)), elements=st.floats(-0.05, 0.05)))
def test_voxel_never_grows_and_one_point_per_cell(points):
    out = voxel_downsample(cloud(points), 0.01)
    assert len(out) <= len(points)
    assert len(out) == len({tuple(c) for c in np.floor(points / 0.01).astype(int)})


# ---------------------------------------------------------------- outlier removal


def test_sor_removes_far_point(rng):
    pts = np.vstack([rng.normal(0, 0.002, (50, 3)), [[1.0, 0, 0]]])
    out = statistical_outlier_removal(cloud(pts), 8, 1.0)
    assert len(out) >= 40 and not np.any(out.points[:, 0] > 0.5)
    # oracle: the same statistic by brute force
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    np.fill_diagonal(d, np.inf)
    stat = np.sort(d, axis=1)[:, :8].mean(axis=1)
    assert len(out) == int(np.sum(stat <= stat.mean() + stat.std()))


def test_sor_identical_points_all_kept():
    assert len(statistical_outlier_removal(cloud(np.ones((20, 3))), 8)) == 20


def test_sor_too_few_points():
    with pytest.raises(TooFewPoints):
        statistical_outlier_removal(cloud(np.zeros((8, 3))), 8)


# ---------------------------------------------------------------- clustering


def test_cluster_forced_by_distances():
    c = cloud([[0, 0, 0], [0.001, 0, 0], [0.1, 0, 0]])
    parts = euclidean_cluster(c, 0.01, 1)
    assert [len(p) for p in parts] == [2, 1]
    assert partition(cluster_indices(c.points, 0.01)) == [(0, 1), (2,)]
    assert euclidean_cluster(c, 0.01, 3) == []


def test_cluster_matches_union_find(rng):
    for seed in range(20):
        pts = np.random.default_rng(seed).uniform(0, 1, (200, 3))
        labels = union_find_labels(pts, 0.08)
        groups: dict = {}
        for i, l in enumerate(labels):
            groups.setdefault(l, []).append(i)
        assert partition(cluster_indices(pts, 0.08)) == partition(groups.values())


def test_cluster_order_and_size_filter(rng):
    pts = np.vstack([rng.normal(0, 0.001, (30, 3)), rng.normal(1, 0.001, (60, 3)), [[5, 5, 5]]])
    sizes = [len(c) for c in cluster_indices(pts, 0.05, 2, 50)]
    assert sizes == [30]
    assert [len(c) for c in cluster_indices(pts, 0.05)] == [60, 30, 1]
    with pytest.raises(ValueError):
        cluster_indices(pts, 0.05, 10, 5)


# ---------------------------------------------------------------- aabb


def test_aabb_cases(rng):
    p = np.array([[0.3, -0.2, 1.0]])
    box = aabb(cloud(p))
    np.testing.assert_array_equal(box.min, p[0])
    np.testing.assert_array_equal(box.max, p[0])
    box = aabb(np.array([[0.0, 0, 0], [1, 2, 3]]))
    assert box.min.tolist() == [0, 0, 0] and box.max.tolist() == [1, 2, 3]
    pts = rng.normal(size=(100, 3))
    box = aabb(pts)
    for a in range(3):
        assert box.min[a] == min(p[a] for p in pts) and box.max[a] == max(p[a] for p in pts)
    with pytest.raises(EmptyCloud):
        aabb(np.zeros((0, 3)))


# ---------------------------------------------------------------- normals and boundary


def grid(n=21, step=0.002):
    x, y = np.meshgrid(np.arange(n) * step, np.arange(n) * step)
    return np.stack([x.ravel(), y.ravel(), np.zeros(n * n)], axis=1)


def test_plane_normals():
    s = estimate_normals(grid(), 0.005, [0.02, 0.02, 1.0])
    assert len(s) == 21 * 21
    np.testing.assert_allclose(s.normals, np.tile([0, 0, 1.0], (len(s), 1)), atol=1e-12)
    assert np.abs(s.curvature).max() <= 1e-9


def test_sphere_normals_radial():
    n = 500
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    pts = 0.05 * np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    s = estimate_normals(pts, 0.012, [1.0, 1.0, 1.0])
    radial = s.points / np.linalg.norm(s.points, axis=1, keepdims=True)
    # the viewpoint orientation rule flips normals of the far side inward
    cos = np.abs(np.einsum("ij,ij->i", s.normals, radial))
    assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() < 5.0


def test_isolated_point_excluded():
    pts = np.vstack([grid(5), [[1.0, 1.0, 1.0]]])
    s = estimate_normals(pts, 0.005, [0, 0, 1])
    assert len(pts) - 1 not in s.source.tolist()


def test_boundary_interior_corner_and_single_neighbor():
    pts = grid()
    idx = SpatialIndex(pts)
    s = detect_boundary(estimate_normals(pts, 0.005, [0, 0, 1], idx), idx, np.pi / 2, radius=0.005)
    centre = 10 * 21 + 10
    pos = {int(k): j for j, k in enumerate(s.source)}
    assert not s.is_boundary[pos[centre]]
    assert s.is_boundary[pos[0]]
    # a sample with exactly one neighbour in range
    two = np.array([[0.0, 0, 0], [0.001, 0, 0]])
    samples = SurfaceSamples(two[:1], np.array([[0, 0, 1.0]]), np.zeros(1), np.zeros(1, bool), np.array([0]))
    assert detect_boundary(samples, SpatialIndex(two), np.pi / 2, radius=0.005).is_boundary[0]


# ---------------------------------------------------------------- PLY


def test_ply_round_trip(tmp_path, rng):
    c = cloud(rng.uniform(-1, 1, (40, 3)), rng.integers(0, 256, (40, 3)).astype(np.uint8))
    write_ply(tmp_path / "c.ply", c)
    back = read_ply(tmp_path / "c.ply")
    np.testing.assert_allclose(back.points, c.points, rtol=1e-8)
    np.testing.assert_array_equal(back.colors, c.colors)


# ---------------------------------------------------------------- backend equivalence


backends = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in backends, reason="compiled kernels not built")


@needs_cython
def test_backends_agree(rng):
    py, cy = backends["python"], backends["cython"]
    pts = np.ascontiguousarray(rng.uniform(0, 0.1, (800, 3)))
    g = build_grid(pts, 0.01 * (1 + 1e-6))
    a, b = py.radius_neighbors(pts, *g.args(), pts, 0.01), cy.radius_neighbors(pts, *g.args(), pts, 0.01)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    ex = np.arange(len(pts), dtype=np.int64)
    gk = build_grid(pts, 0.02)
    ka, kb = py.knn(pts, *gk.args(), pts, 9, ex), cy.knn(pts, *gk.args(), pts, 9, ex)
    np.testing.assert_array_equal(ka[0], kb[0])
    np.testing.assert_array_equal(ka[1], kb[1])
    np.testing.assert_array_equal(
        py.euclidean_components(pts, *g.args(), 0.01), cy.euclidean_components(pts, *g.args(), 0.01)
    )
    off, nbr = a
    np.testing.assert_allclose(
        py.patch_covariances(pts, off, nbr), cy.patch_covariances(pts, off, nbr), rtol=1e-12, atol=1e-18
    )
    normals = rng.normal(size=pts.shape)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    centers = np.arange(len(pts), dtype=np.int64)
    np.testing.assert_allclose(
        py.angle_gaps(pts, centers, normals, off, nbr), cy.angle_gaps(pts, centers, normals, off, nbr), atol=1e-12
    )
    u, v = rng.uniform(-5, 70, 3000), rng.uniform(-5, 50, 3000)
    z, rad = rng.uniform(0.2, 2, 3000), rng.integers(0, 3, 3000).astype(np.int64)
    outs = []
    for impl in (py, cy):
        depth, index = np.full((48, 64), np.inf), np.full((48, 64), -1, dtype=np.int64)
        impl.zbuffer(u, v, z, rad, depth, index)
        outs.append((depth, index))
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    np.testing.assert_array_equal(outs[0][1], outs[1][1])


def test_backend_selected():
    assert kernels.BACKEND in backends
