import itertools

import numpy as np
import pytest

from fogtype.data import Domain, build_corpus, harmonize_units
from fogtype.errors import UndefinedMetricError, ValidationError
from fogtype.features import file_summary_vector
from fogtype.stats import (
    cluster_subjects,
    kmeans,
    pca_fit_transform,
    pearson_correlation,
    silhouette_score,
    within_cluster_ss,
)


class TestPca:
    def test_rank_one_line(self):
        x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        data = np.column_stack([x, 2 * x])
        model, scores = pca_fit_transform(data, p=2)
        np.testing.assert_allclose(model.components[:, 0], [1 / np.sqrt(5), 2 / np.sqrt(5)])
        assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-12)

    def test_centered_data_zero_mean(self):
        data = np.array([[1.0, -2.0], [-1.0, 2.0]])
        model, _ = pca_fit_transform(data, p=1)
        np.testing.assert_allclose(model.mean, [0.0, 0.0])

    def test_trace_preservation(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(6, 4))
        model, _ = pca_fit_transform(data, p=4)
        total = data.var(axis=0, ddof=1).sum()
        assert model.explained_variance.sum() == pytest.approx(total, abs=1e-9)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(1)
        model, _ = pca_fit_transform(rng.normal(size=(10, 5)), p=5)
        gram = model.components.T @ model.components
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-9)

    def test_scores_have_diagonal_covariance(self):
        rng = np.random.default_rng(2)
        _, scores = pca_fit_transform(rng.normal(size=(40, 6)), p=6)
        cov = np.cov(scores, rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 1e-9 * cov.max()

    def test_full_reconstruction(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(8, 3))
        model, scores = pca_fit_transform(data, p=3)
        np.testing.assert_allclose(model.inverse_transform(scores), data, atol=1e-9)

    def test_sign_convention_reproducible(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(12, 4))
        model, _ = pca_fit_transform(data, p=4)
        for j in range(4):
            col = model.components[:, j]
            assert col[np.argmax(np.abs(col))] > 0

    def test_explained_variance_non_increasing(self):
        rng = np.random.default_rng(5)
        model, _ = pca_fit_transform(rng.normal(size=(15, 6)), p=6)
        assert (np.diff(model.explained_variance) <= 1e-12).all()

    def test_p_out_of_range(self):
        with pytest.raises(ValidationError):
            pca_fit_transform(np.zeros((4, 3)), p=4)
        with pytest.raises(ValidationError):
            pca_fit_transform(np.zeros((4, 3)), p=0)


def brute_force_best_two_partition(data):
    """Minimal within-cluster SSE over all nonempty 2-partitions."""
    n = data.shape[0]
    best, best_mask = np.inf, None
    for bits in range(1, 2 ** (n - 1)):
        mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        sse = 0.0
        for part in (data[mask], data[~mask]):
            if len(part):
                sse += ((part - part.mean(axis=0)) ** 2).sum()
        if sse < best:
            best, best_mask = sse, mask
    return best_mask


class TestKmeans:
    def test_single_cluster_centroid_is_mean(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(9, 3))
        clustering = kmeans(data, k=1, seed=0)
        np.testing.assert_allclose(clustering.centroids[0], data.mean(axis=0))

    def test_two_blobs_recovered(self):
        rng = np.random.default_rng(1)
        blob_a = rng.normal(size=(4, 2))
        blob_b = rng.normal(size=(4, 2)) + 100.0
        data = np.vstack([blob_a, blob_b])
        clustering = kmeans(data, k=2, seed=5)
        expected = brute_force_best_two_partition(data)
        got = clustering.assignments == clustering.assignments[0]
        assert np.array_equal(got, expected) or np.array_equal(got, ~expected)

    def test_identical_points_converge(self):
        data = np.ones((5, 2))
        clustering = kmeans(data, k=2, seed=0)
        assert set(np.unique(clustering.assignments)) <= {0, 1}

    def test_k_out_of_range(self):
        with pytest.raises(ValidationError):
            kmeans(np.zeros((3, 2)), k=4, seed=0)

    def test_deterministic_in_seed(self):
        rng = np.random.default_rng(2)
        data = rng.normal(size=(20, 3))
        a = kmeans(data, k=3, seed=11)
        b = kmeans(data, k=3, seed=11)
        np.testing.assert_array_equal(a.assignments, b.assignments)

    def test_wss_non_increasing_in_iterations(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(30, 2)) * np.array([3.0, 1.0])
        wss = [
            within_cluster_ss(data, kmeans(data, k=3, seed=4, max_iter=i)) for i in range(1, 8)
        ]
        assert all(b <= a + 1e-9 for a, b in zip(wss, wss[1:]))

    def test_centroids_are_cluster_means_at_convergence(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(25, 2))
        clustering = kmeans(data, k=3, seed=9)
        for j in range(3):
            members = clustering.assignments == j
            if members.any():
                np.testing.assert_allclose(
                    clustering.centroids[j], data[members].mean(axis=0), atol=1e-9
                )


class TestSilhouette:
    def test_two_far_singletons_score_zero(self):
        data = np.array([[0.0, 0.0], [100.0, 100.0]])
        assert silhouette_score(data, np.array([0, 1])) == 0.0

    def test_hand_computed_two_pairs(self):
        data = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])
        labels = np.array([0, 0, 1, 1])
        # per point: a = 1 (to its pair); b = mean distance to the far pair
        expected = []
        for i in range(4):
            partner = {0: 1, 1: 0, 2: 3, 3: 2}[i]
            a = np.linalg.norm(data[i] - data[partner])
            others = [j for j in range(4) if labels[j] != labels[i]]
            b = np.mean([np.linalg.norm(data[i] - data[j]) for j in others])
            expected.append((b - a) / max(a, b))
        score = silhouette_score(data, labels)
        assert score == pytest.approx(np.mean(expected), abs=1e-12)
        assert score > 0.85

    def test_random_labels_on_tight_blob_near_zero(self):
        rng = np.random.default_rng(42)
        data = rng.normal(size=(50, 2))
        labels = rng.integers(0, 2, size=50)
        assert abs(silhouette_score(data, labels)) < 0.2

    def test_single_cluster_undefined(self):
        with pytest.raises(UndefinedMetricError):
            silhouette_score(np.zeros((4, 2)), np.zeros(4, dtype=int))

    def test_score_in_range(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            data = rng.normal(size=(12, 3))
            labels = rng.integers(0, 3, size=12)
            if np.unique(labels).size < 2:
                continue
            assert -1.0 <= silhouette_score(data, labels) <= 1.0


class TestPearson:
    def test_perfect_positive(self):
        assert pearson_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_perfect_negative(self):
        assert pearson_correlation([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_computed(self):
        assert pearson_correlation([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_constant_input_undefined(self):
        with pytest.raises(UndefinedMetricError):
            pearson_correlation([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_affine_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=30)
        y = rng.normal(size=30)
        base = pearson_correlation(x, y)
        assert pearson_correlation(3.5 * x + 2.0, y) == pytest.approx(base, abs=1e-12)
        assert pearson_correlation(x, 0.25 * y - 7.0) == pytest.approx(base, abs=1e-12)


class TestSubjectClustering:
    def test_covers_all_subjects(self):
        ds = build_corpus(seed=0, n_defog=1, n_tdcsfog=1, n_subjects=7, duration_s=1.0)
        cluster_map = cluster_subjects(ds.subjects, k=3, seed=0)
        assert set(cluster_map) == set(ds.subjects)
        assert all(0 <= c < 3 for c in cluster_map.values())

    def test_deterministic(self):
        ds = build_corpus(seed=0, n_defog=1, n_tdcsfog=1, n_subjects=6, duration_s=1.0)
        assert cluster_subjects(ds.subjects, 3, 5) == cluster_subjects(ds.subjects, 3, 5)


class TestDomainSeparationPipeline:
    def test_two_regime_silhouette_exceeds_threshold(self):
        ds = build_corpus(seed=6, n_defog=8, n_tdcsfog=8, duration_s=4.0)
        trials = sorted(ds.series.values(), key=lambda s: s.trial_id)
        summaries = np.array([file_summary_vector(harmonize_units(s)).values for s in trials])
        std = summaries.std(axis=0)
        std[std == 0] = 1.0
        scaled = (summaries - summaries.mean(axis=0)) / std
        _, scores = pca_fit_transform(scaled, p=2)
        labels = np.array([0 if s.domain is Domain.DEFOG else 1 for s in trials])
        assert silhouette_score(scores, labels) > 0.7
