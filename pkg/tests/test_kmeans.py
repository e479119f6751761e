import numpy as np
import pytest
from sklearn.cluster import KMeans

from macroregimes.kmeans import _lloyd, kmeans, relabel_by_first_occurrence
from macroregimes.signed import ari


def blobs(seed=0, n=40):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.1, (n, 2))
    b = rng.normal(5.0, 0.1, (n, 2))
    return np.vstack([a, b]), np.repeat([0, 1], n)


class TestKMeans:
    def test_separable_blobs(self):
        X, y = blobs()
        res = kmeans(X, 2, seed=3)
        assert ari(res.labels, y) == 1.0

    def test_deterministic_given_seed(self):
        X = np.random.default_rng(1).standard_normal((60, 3))
        a, b = kmeans(X, 4, seed=7), kmeans(X, 4, seed=7)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.inertia == b.inertia

    def test_k_equals_n_gives_zero_inertia(self):
        X = np.random.default_rng(2).standard_normal((12, 2))
        assert kmeans(X, 12).inertia == pytest.approx(0.0, abs=1e-20)

    def test_k_one_is_total_sum_of_squares(self):
        X = np.random.default_rng(2).standard_normal((30, 2))
        assert kmeans(X, 1).inertia == pytest.approx(((X - X.mean(0)) ** 2).sum())

    def test_inertia_close_to_sklearn(self):
        X = np.random.default_rng(4).standard_normal((200, 4))
        ours = kmeans(X, 5, seed=0, n_init=10).inertia
        ref = KMeans(5, n_init=10, random_state=0).fit(X).inertia_
        assert ours <= ref * 1.02

    def test_empty_cluster_reseeded(self):
        X = np.array([[0.0], [0.1], [0.2], [10.0]])
        centers = np.array([[0.1], [100.0], [10.0]])
        labels, c, inertia, _ = _lloyd(X, centers, 300, 1e-8)
        assert len(np.unique(labels)) == 3

    def test_bad_k(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 1)), 4)


class TestRelabel:
    def test_first_occurrence(self):
        np.testing.assert_array_equal(relabel_by_first_occurrence([5, 5, 2, 9, 2]), [0, 0, 1, 2, 1])
