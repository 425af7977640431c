"""Nearest-neighbor search, cloud metrics, and voxel utilities."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reconbench.errors import InvalidInputError
from reconbench.geometry import (
    PointCloud,
    RigidTransform,
    reorthonormalize,
    transform_points,
)
from reconbench.metrics import (
    KdTree,
    VoxelFilterConfig,
    chamfer,
    chamfer_hausdorff,
    hausdorff,
    nearest,
    nearest_distances,
    voxel_downsample,
    voxel_filter,
)


def brute_nearest(query: np.ndarray, reference: np.ndarray) -> tuple[int, float]:
    """Linear-scan oracle; np.argmin picks the lowest index on ties."""
    d = np.linalg.norm(reference - query, axis=1)
    idx = int(np.argmin(d))
    return idx, float(d[idx])


class TestKdTree:
    def test_matches_linear_scan_on_random_clouds(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 200))
            ref = rng.uniform(-1, 1, size=(n, 3))
            tree = KdTree(ref)
            for q in rng.uniform(-1.2, 1.2, size=(5, 3)):
                idx, dist = tree.nearest(q)
                bidx, bdist = brute_nearest(q, ref)
                assert idx == bidx
                assert dist == pytest.approx(bdist, abs=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        ref = np.array([[1.0, 0, 0], [-1.0, 0, 0], [1.0, 0, 0]])
        tree = KdTree(ref)
        idx, dist = tree.nearest(np.zeros(3))
        assert idx == 0
        assert dist == 1.0

    def test_ties_among_duplicates(self, rng):
        base = rng.uniform(-1, 1, size=(5, 3))
        ref = np.repeat(base, 40, axis=0)
        perm = rng.permutation(ref.shape[0])
        ref = ref[perm]
        tree = KdTree(ref)
        for q in base:
            idx, dist = tree.nearest(q)
            assert dist == 0.0
            assert idx == brute_nearest(q, ref)[0]

    def test_single_point_tree(self):
        tree = KdTree(np.array([[1.0, 2.0, 3.0]]))
        idx, dist = tree.nearest(np.array([1.0, 2.0, 7.0]))
        assert (idx, dist) == (0, 4.0)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            KdTree(np.zeros((0, 3)))

    def test_nearest_many_matches_single(self, rng):
        ref = rng.normal(size=(300, 3))
        tree = KdTree(ref)
        queries = rng.normal(size=(40, 3))
        idx, dist = tree.nearest_many(queries)
        for k, q in enumerate(queries):
            si, sd = tree.nearest(q)
            assert idx[k] == si
            assert dist[k] == sd

    def test_module_level_helper(self, rng):
        ref = rng.normal(size=(20, 3))
        tree = KdTree(ref)
        q = rng.normal(size=3)
        assert nearest(tree, q) == tree.nearest(q)


class TestNearestDistances:
    def test_accepts_point_clouds(self, rng):
        a = PointCloud.from_points(rng.normal(size=(10, 3)))
        b = PointCloud.from_points(rng.normal(size=(15, 3)))
        d = nearest_distances(a, b)
        assert d.shape == (10,)

    def test_empty_raises(self):
        with pytest.raises(InvalidInputError):
            nearest_distances(np.zeros((0, 3)), np.ones((5, 3)))

    def test_brute_and_tree_agree_on_large_inputs(self, rng):
        # big enough to leave the cancellation-free path
        a = rng.uniform(-1, 1, size=(3000, 3))
        b = rng.uniform(-1, 1, size=(2000, 3))
        fast = nearest_distances(a, b)
        _, tree_d = KdTree(b).nearest_many(a)
        assert np.allclose(fast, tree_d, atol=1e-9)

    def test_self_distance_is_zero(self, rng):
        pts = rng.normal(size=(100, 3))
        assert np.array_equal(nearest_distances(pts, pts), np.zeros(100))


class TestChamferHausdorff:
    def test_hand_computed_values(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        # directed means: a->b is 1, b->a is (1+3)/2 = 2
        assert chamfer(a, b) == pytest.approx(1.5, abs=1e-12)
        assert hausdorff(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_matches_quadratic_reference(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 200))
            m = int(rng.integers(1, 200))
            a = rng.uniform(-1, 1, size=(n, 3))
            b = rng.uniform(-1, 1, size=(m, 3))
            d_ab = np.linalg.norm(a[:, None] - b[None, :], axis=-1).min(axis=1)
            d_ba = np.linalg.norm(b[:, None] - a[None, :], axis=-1).min(axis=1)
            ref_c = 0.5 * (d_ab.mean() + d_ba.mean())
            ref_h = max(d_ab.max(), d_ba.max())
            got_c, got_h = chamfer_hausdorff(a, b)
            assert got_c == pytest.approx(ref_c, abs=1e-12)
            assert got_h == pytest.approx(ref_h, abs=1e-12)

    def test_identity_is_zero(self, rng):
        pts = rng.normal(size=(200, 3))
        assert chamfer(pts, pts) == 0.0
        assert hausdorff(pts, pts) == 0.0

    def test_symmetry(self, rng):
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(70, 3))
        assert chamfer(a, b) == chamfer(b, a)
        assert hausdorff(a, b) == hausdorff(b, a)

    def test_hausdorff_dominates_chamfer(self, rng):
        for _ in range(200):
            a = rng.normal(size=(int(rng.integers(1, 50)), 3))
            b = rng.normal(size=(int(rng.integers(1, 50)), 3))
            d_c, d_h = chamfer_hausdorff(a, b)
            assert d_c <= d_h

    @settings(deadline=None, max_examples=30)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_rigid_motion_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(30, 3))
        b = rng.normal(size=(40, 3))
        t = RigidTransform(
            reorthonormalize(rng.normal(size=(3, 3))), rng.normal(size=3)
        )
        before = chamfer_hausdorff(a, b)
        after = chamfer_hausdorff(transform_points(t, a), transform_points(t, b))
        assert np.allclose(before, after, atol=1e-9)


class TestVoxelFilter:
    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            VoxelFilterConfig(voxel_size=0.0, min_points_per_voxel=1)
        with pytest.raises(InvalidInputError):
            VoxelFilterConfig(voxel_size=0.1, min_points_per_voxel=0)

    def test_lonely_points_dropped(self):
        cloud = PointCloud.from_points(
            [[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [5.0, 5.0, 5.0]]
        )
        out = voxel_filter(cloud, VoxelFilterConfig(1.0, 2))
        assert np.allclose(out.points, cloud.points[:2])

    def test_order_and_tags_preserved(self, rng):
        pts = np.vstack([rng.uniform(0, 1, size=(30, 3)), [[9.0, 9.0, 9.0]]])
        tags = np.array(["observed", "generated"] * 15 + ["observed"])
        cloud = PointCloud(pts, tags)
        out = voxel_filter(cloud, VoxelFilterConfig(2.0, 2))
        assert np.array_equal(out.points, pts[:30])
        assert np.array_equal(out.tags, tags[:30])

    def test_min_one_passes_everything(self, rng):
        cloud = PointCloud.from_points(rng.normal(size=(40, 3)))
        out = voxel_filter(cloud, VoxelFilterConfig(0.1, 1))
        assert np.array_equal(out.points, cloud.points)

    def test_negative_coordinates_bin_separately(self):
        cloud = PointCloud.from_points([[-0.05, 0, 0], [0.05, 0, 0]])
        out = voxel_filter(cloud, VoxelFilterConfig(1.0, 2))
        # floor puts them in voxels -1 and 0: both lonely
        assert len(out) == 0

    def test_empty_cloud(self):
        out = voxel_filter(PointCloud.empty(), VoxelFilterConfig(1.0, 2))
        assert len(out) == 0


class TestVoxelDownsample:
    def test_centroid_per_voxel(self):
        cloud = PointCloud.from_points([[0.2, 0, 0], [0.4, 0, 0], [3.5, 0, 0]])
        out = voxel_downsample(cloud, 1.0)
        assert np.allclose(out.points, [[0.3, 0.0, 0.0], [3.5, 0.0, 0.0]])

    def test_first_occurrence_order_and_tag(self):
        pts = [[2.5, 0, 0], [0.5, 0, 0], [2.6, 0, 0]]
        cloud = PointCloud(
            np.asarray(pts), np.array(["generated", "observed", "observed"])
        )
        out = voxel_downsample(cloud, 1.0)
        # voxel of the first point comes first and keeps its tag
        assert np.allclose(out.points[0], [2.55, 0, 0])
        assert out.tags.tolist() == ["generated", "observed"]

    def test_idempotent(self, rng):
        cloud = PointCloud.from_points(rng.uniform(-2, 2, size=(500, 3)))
        once = voxel_downsample(cloud, 0.3)
        twice = voxel_downsample(once, 0.3)
        assert np.array_equal(once.points, twice.points)
        assert np.array_equal(once.tags, twice.tags)

    def test_invalid_size(self, rng):
        with pytest.raises(InvalidInputError):
            voxel_downsample(PointCloud.from_points(rng.normal(size=(3, 3))), 0.0)
