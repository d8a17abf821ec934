"""PCA, k-means, silhouette score, and Pearson correlation.

Backs the Defog/Tdcsfog separation analysis (summary vectors -> PCA(2) ->
silhouette over domain labels) and set G's subject clustering. Euclidean
distance throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Subject
from .errors import UndefinedMetricError, ValidationError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (D, p), orthonormal columns
    explained_variance: np.ndarray  # (p,), non-increasing

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return scores @ self.components.T + self.mean


@dataclass(frozen=True)
class Clustering:
    k: int
    assignments: np.ndarray  # (N,) ints in [0, k)
    centroids: np.ndarray  # (k, D)


def pca_fit_transform(data: np.ndarray, p: int) -> tuple[PcaModel, np.ndarray]:
    """Fit PCA on centered data via eigendecomposition of the covariance
    (N-1 normalization) and return the model plus the N x p scores.

    Component signs are fixed so each component's largest-magnitude entry
    is positive, making results reproducible across runs.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValidationError(f"expected an N x D matrix, got shape {data.shape}")
    n, d = data.shape
    if n < 2:
        raise ValidationError("PCA needs at least 2 rows")
    if not 1 <= p <= min(n, d):
        raise ValidationError(f"target dims p={p} outside [1, {min(n, d)}]")

    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:p]
    components = eigvecs[:, order]
    explained = np.clip(eigvals[order], 0.0, None)
    for j in range(components.shape[1]):
        col = components[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            components[:, j] = -col
    model = PcaModel(mean=mean, components=components, explained_variance=explained)
    return model, centered @ components


def kmeans(data: np.ndarray, k: int, seed: int, max_iter: int = 100) -> Clustering:
    """Lloyd's algorithm from k-means++-style seeding, deterministic in
    `seed`. An emptied cluster is re-seeded at the point farthest from its
    current centroid.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    for j in range(1, k):
        d2 = np.min(
            ((data[:, None, :] - centroids[None, :j, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total == 0.0:
            centroids[j] = data[rng.integers(n)]
        else:
            centroids[j] = data[rng.choice(n, p=d2 / total)]

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = dists.argmin(axis=1)
        for j in range(k):
            members = new_assignments == j
            if members.any():
                centroids[j] = data[members].mean(axis=0)
            else:
                per_point = dists[np.arange(n), new_assignments]
                farthest = int(per_point.argmax())
                centroids[j] = data[farthest]
                new_assignments[farthest] = j
        if (new_assignments == assignments).all():
            break
        assignments = new_assignments
    return Clustering(k=k, assignments=assignments, centroids=centroids)


def within_cluster_ss(data: np.ndarray, clustering: Clustering) -> float:
    """Total within-cluster sum of squared distances to centroids."""
    diffs = data - clustering.centroids[clustering.assignments]
    return float((diffs**2).sum())


def silhouette_score(data: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette (b - a) / max(a, b); singleton clusters contribute 0.

    Requires at least two non-empty clusters, otherwise the score is
    undefined and UndefinedMetricError is raised.
    """
    data = np.asarray(data, dtype=np.float64)
    assignments = np.asarray(assignments)
    n = data.shape[0]
    if n < 2:
        raise UndefinedMetricError("silhouette needs at least 2 points")
    labels = np.unique(assignments)
    if labels.size < 2:
        raise UndefinedMetricError("silhouette undefined for a single cluster")

    dists = np.sqrt(((data[:, None, :] - data[None, :, :]) ** 2).sum(axis=2))
    scores = np.empty(n)
    for i in range(n):
        own = assignments == assignments[i]
        n_own = own.sum()
        if n_own == 1:
            scores[i] = 0.0
            continue
        a = dists[i, own].sum() / (n_own - 1)
        b = min(dists[i, assignments == lab].mean() for lab in labels if lab != assignments[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def pearson_correlation(x, y) -> float:
    """Product-moment correlation; constant input is undefined."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"expected equal-length 1-D sequences, got {x.shape}, {y.shape}")
    if x.size < 2:
        raise ValidationError("correlation needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise UndefinedMetricError("correlation undefined for constant input")
    return float((dx * dy).sum() / (sx * sy))


SUBJECT_CLUSTER_FEATURES = ("age", "years_since_dx", "updrs_on", "updrs_off", "nfogq")


def cluster_subjects(
    subjects: Mapping[str, Subject], k: int = 3, seed: int = 0
) -> dict[str, int]:
    """K-means over standardized clinical attributes; returns subject_id ->
    cluster index. Feeds feature set G's one-hot block."""
    ids = sorted(subjects)
    if not ids:
        raise ValidationError("no subjects to cluster")
    rows = np.array(
        [[getattr(subjects[sid], f) for f in SUBJECT_CLUSTER_FEATURES] for sid in ids]
    )
    std = rows.std(axis=0)
    std[std == 0.0] = 1.0
    scaled = (rows - rows.mean(axis=0)) / std
    clustering = kmeans(scaled, k=k, seed=seed)
    return {sid: int(c) for sid, c in zip(ids, clustering.assignments)}
