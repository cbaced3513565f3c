import numpy as np
import pytest

from protostream import _kernels
from protostream._kernels import _py
from protostream.clustering import NOISE, ClusterConfig, cluster_features, dbscan, pairwise_distance
from tests.oracles import closure_dbscan


class TestPairwiseDistance:
    def test_identical_features_zero(self):
        f = np.ones((3, 4))
        d = pairwise_distance(f, "euclidean")
        np.testing.assert_allclose(d, 0.0, atol=1e-12)

    def test_orthogonal_unit_vectors_cosine(self):
        f = np.array([[1.0, 0.0], [0.0, 1.0]])
        d = pairwise_distance(f, "cosine")
        assert d[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert d[0, 0] == 0.0

    def test_three_four_five(self):
        d = pairwise_distance(np.array([[0.0, 0.0], [3.0, 4.0]]), "euclidean")
        assert d[0, 1] == pytest.approx(5.0, abs=1e-12)

    def test_zero_vector_cosine_guarded(self):
        d = pairwise_distance(np.array([[0.0, 0.0], [1.0, 0.0]]), "cosine")
        assert np.all(np.isfinite(d))

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(3)
        f = rng.normal(size=(10, 5))
        for metric in ("euclidean", "cosine"):
            d = pairwise_distance(f, metric)
            np.testing.assert_allclose(d, d.T)
            np.testing.assert_allclose(np.diag(d), 0.0, atol=1e-15)

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            pairwise_distance(np.ones((2, 2)), "manhattan")


class TestDbscan:
    def test_min_pts_above_n_all_noise(self):
        d = pairwise_distance(np.random.default_rng(0).normal(size=(5, 2)), "euclidean")
        out = dbscan(d, eps=10.0, min_pts=6)
        assert out.cluster_count == 0
        assert np.all(out.labels == NOISE)

    def test_huge_eps_single_cluster(self):
        d = pairwise_distance(np.random.default_rng(1).normal(size=(7, 2)), "euclidean")
        out = dbscan(d, eps=d.max() + 1.0, min_pts=2)
        assert out.cluster_count == 1
        assert np.all(out.labels == 0)

    def test_two_groups_and_outlier(self):
        pts = np.array([[0.0], [0.1], [0.2], [10.0], [10.1], [10.2], [5.0]])
        d = pairwise_distance(pts, "euclidean")
        out = dbscan(d, eps=0.3, min_pts=2)
        assert out.cluster_count == 2
        assert out.labels[6] == NOISE
        assert set(out.labels[:3]) == {0}
        assert set(out.labels[3:6]) == {1}

    def test_ids_follow_first_member_order(self):
        # index 0 is a border of the group seeded later; it must still pull id 0
        pts = np.array([[1.25], [2.0], [2.1], [2.2], [1.0], [1.05], [1.1]])
        d = pairwise_distance(pts, "euclidean")
        out = dbscan(d, eps=0.2, min_pts=2)
        assert out.cluster_count == 2
        first_member = {}
        for idx, lab in enumerate(out.labels):
            if lab != NOISE and lab not in first_member:
                first_member[int(lab)] = idx
        assert sorted(first_member) == list(first_member)
        assert first_member[0] < first_member[1]

    def test_non_noise_near_core(self):
        rng = np.random.default_rng(11)
        f = rng.normal(size=(40, 3))
        d = pairwise_distance(f, "euclidean")
        eps = 1.2
        out = dbscan(d, eps=eps, min_pts=4)
        core = (d <= eps).sum(axis=1) >= 4
        for i in np.nonzero(out.labels != NOISE)[0]:
            same = out.labels == out.labels[i]
            assert np.any(core & same & (d[i] <= eps))

    def test_invalid_args(self):
        d = np.zeros((3, 3))
        with pytest.raises(ValueError):
            dbscan(d, eps=0.0, min_pts=1)
        with pytest.raises(ValueError):
            dbscan(d, eps=1.0, min_pts=0)
        with pytest.raises(ValueError):
            dbscan(np.zeros((2, 3)), eps=1.0, min_pts=1)


class TestDbscanAgainstClosureOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 61))
        f = rng.normal(size=(n, int(rng.integers(1, 4))))
        d = pairwise_distance(f, "euclidean")
        eps = float(rng.uniform(0.2, 1.5))
        min_pts = int(rng.integers(1, 6))
        got = dbscan(d, eps, min_pts)
        expected = closure_dbscan(d, eps, min_pts)
        assert got.cluster_count == len(expected)
        got_sets = [set(np.nonzero(got.labels == c)[0].tolist()) for c in range(got.cluster_count)]
        # same partition and same discovery-order tie-breaking for borders
        assert set(map(frozenset, got_sets)) == set(map(frozenset, expected))
        clustered = set().union(*got_sets) if got_sets else set()
        assert set(np.nonzero(got.labels == NOISE)[0].tolist()) == set(range(n)) - clustered


class TestKernelLaneParity:
    @pytest.mark.skipif(_kernels.BACKEND != "native", reason="native kernels not built")
    def test_pairwise_and_dbscan_agree(self):
        from protostream._kernels import _native

        rng = np.random.default_rng(42)
        for _ in range(10):
            n = int(rng.integers(4, 80))
            f = np.ascontiguousarray(rng.normal(size=(n, 6)))
            d_nat = np.asarray(_native.pairwise_sqeuclidean(f))
            d_py = _py.pairwise_sqeuclidean(f)
            np.testing.assert_allclose(d_nat, d_py, atol=1e-10)
            eps = float(rng.uniform(0.5, 3.0))
            min_pts = int(rng.integers(1, 6))
            lab_nat, count_nat = _native.dbscan_from_dist(np.sqrt(d_nat), eps, min_pts)
            lab_py, count_py = _py.dbscan_from_dist(np.sqrt(d_py), eps, min_pts)
            assert count_nat == count_py
            np.testing.assert_array_equal(np.asarray(lab_nat), lab_py)


def test_cluster_features_convenience():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(10, 4)) * 0.05 + np.array([5, 0, 0, 0])
    b = rng.normal(size=(10, 4)) * 0.05 + np.array([0, 5, 0, 0])
    out = cluster_features(np.vstack([a, b]), ClusterConfig(metric="cosine", eps=0.3, min_pts=3))
    assert out.cluster_count == 2
