"""Partitioning of functional datasets.

Three routes are provided: k-means on finite-dimensional feature
vectors extracted from the curves (raw basis coefficients or leading
component scores), agglomerative clustering under a truncated
component-score distance, and (in `flm`) a model-based mixture.  All
procedures are deterministic given their seed and break ties by fixed
rules, so repeated runs agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .fpca import fit_fpca

_LINKAGES = ("ward", "complete", "average")


@dataclass(frozen=True)
class Partition:
    """Result of a clustering run.

    Labels are integers 1..n_clusters, renumbered in order of first
    appearance so that label 1 belongs to the earliest row.  `objective`
    is the k-means within-cluster sum of squares, or the height of the
    last merge for hierarchical runs.
    """

    labels: np.ndarray
    n_clusters: int
    sizes: tuple
    objective: float

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if labels.ndim != 1 or labels.size == 0:
            raise ConfigError("labels must be a non-empty vector")
        if labels.min() < 1 or labels.max() > self.n_clusters:
            raise ConfigError("labels must lie in 1..n_clusters")
        if len(self.sizes) != self.n_clusters or any(s < 1 for s in self.sizes):
            raise ConfigError("every cluster must be non-empty")

    def __len__(self):
        return self.labels.shape[0]

    def members(self, label):
        """Row indices assigned to one 1-based label."""
        return np.flatnonzero(self.labels == label)


def _first_appearance_relabel(raw_labels):
    """Map arbitrary integer labels to 1..K by order of first appearance."""
    mapping = {}
    out = np.empty(raw_labels.shape[0], dtype=np.int64)
    for i, lab in enumerate(raw_labels):
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out, len(mapping)


def _squared_distances(points, centers):
    d2 = (points ** 2).sum(axis=1)[:, None] + (centers ** 2).sum(axis=1)[None, :]
    d2 -= 2.0 * points @ centers.T
    np.clip(d2, 0.0, None, out=d2)
    return d2


def _plusplus_centers(points, n_clusters, rng):
    n = points.shape[0]
    first = int(rng.integers(n))
    centers = np.empty((n_clusters, points.shape[1]))
    centers[0] = points[first]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for k in range(1, n_clusters):
        total = closest.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centers[k] = points[idx]
        np.minimum(closest, ((points - centers[k]) ** 2).sum(axis=1), out=closest)
    return centers


def _lloyd(points, centers, max_iter, tol):
    """Run Lloyd iterations; returns (labels, inertia, inertia_history)."""
    n, n_clusters = points.shape[0], centers.shape[0]
    prev_labels = None
    prev_inertia = np.inf
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = _squared_distances(points, centers)
        labels = np.argmin(d2, axis=1)
        # Re-seed empty clusters from the point farthest from its center.
        counts = np.bincount(labels, minlength=n_clusters)
        if (counts == 0).any():
            current = d2[np.arange(n), labels].copy()
            for k in np.flatnonzero(counts == 0):
                far = int(np.argmax(current))
                labels[far] = k
                current[far] = -np.inf
            counts = np.bincount(labels, minlength=n_clusters)
        for k in range(n_clusters):
            centers[k] = points[labels == k].mean(axis=0)
        inertia = float(
            ((points - centers[labels]) ** 2).sum())
        history.append(inertia)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        if np.isfinite(prev_inertia) and \
                prev_inertia - inertia <= tol * max(prev_inertia, 1e-300):
            break
        prev_labels = labels.copy()
        prev_inertia = inertia
    return labels, history[-1], history


def kmeans(points, n_clusters, seed=0, restarts=50, max_iter=300, tol=1e-9):
    """K-means with greedy seeding and multiple restarts.

    Runs `restarts` independent starts from one seeded random generator
    and keeps the lowest within-cluster sum of squares; exact objective
    ties keep the earlier restart.  Labels are renumbered by first
    appearance.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ConfigError("points must be a non-empty 2-d array")
    if not np.all(np.isfinite(points)):
        raise DataError("points must be finite")
    n = points.shape[0]
    n_clusters = int(n_clusters)
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"n_clusters must be in 1..{n}, got {n_clusters}")
    if restarts < 1 or max_iter < 1:
        raise ConfigError("restarts and max_iter must be >= 1")

    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        centers = _plusplus_centers(points, n_clusters, rng)
        labels, inertia, _ = _lloyd(points, centers.copy(), max_iter, tol)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    labels, found = _first_appearance_relabel(best_labels)
    sizes = tuple(int((labels == k).sum()) for k in range(1, found + 1))
    return Partition(labels, found, sizes, best_inertia)


def two_stage(dataset, n_clusters, feature="coefficients", n_components=None,
              decomposition=None, seed=0, **kmeans_options):
    """Smooth-then-cluster: k-means on per-curve feature vectors.

    Parameters
    ----------
    dataset : FunctionalDataset
    n_clusters : int
    feature : str
        "coefficients" clusters the raw basis coefficients; "scores"
        clusters the first `n_components` principal component scores.
    n_components : int, optional
        Number of scores kept (defaults to all of them).
    decomposition : FpcaResult, optional
        Reuse an existing fit instead of decomposing again.
    seed : int
        Seeding for the k-means restarts.
    """
    if feature == "coefficients":
        points = dataset.coefficients
    elif feature == "scores":
        result = decomposition if decomposition is not None else fit_fpca(dataset)
        q = result.dimension if n_components is None else int(n_components)
        points = result.truncated_scores(q)
    else:
        raise ConfigError(f"unknown feature {feature!r}")
    return kmeans(points, n_clusters, seed=seed, **kmeans_options)


def score_distance(dataset, i, j, n_components, decomposition=None):
    """Distance between two curves through leading component scores.

    The root of the summed squared differences of the first
    `n_components` scores.  With all components kept this equals the
    function-space distance between the curves.
    """
    result = decomposition if decomposition is not None else fit_fpca(dataset)
    scores = result.truncated_scores(n_components)
    diff = scores[int(i)] - scores[int(j)]
    return float(np.sqrt((diff ** 2).sum()))


def score_distance_matrix(dataset, n_components, decomposition=None):
    """All pairwise curve distances under the truncated score metric."""
    result = decomposition if decomposition is not None else fit_fpca(dataset)
    scores = result.truncated_scores(n_components)
    d2 = _squared_distances(scores, scores)
    matrix = np.sqrt(d2)
    np.fill_diagonal(matrix, 0.0)
    return (matrix + matrix.T) / 2.0


def hierarchical(distances, n_clusters, linkage="ward"):
    """Agglomerative clustering of a precomputed distance matrix.

    Supports "ward" (squared-distance updates, merge heights reported
    on the distance scale), "complete", and "average" linkage.  Ties on
    the smallest pair distance are broken toward the smallest row, then
    column, index.  Final labels are numbered by each cluster's smallest
    member index.
    """
    D = np.asarray(distances, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ConfigError("distances must be a square matrix")
    n = D.shape[0]
    if n == 0:
        raise ConfigError("distances must be non-empty")
    if not np.all(np.isfinite(D)):
        raise DataError("distances must be finite")
    if not np.allclose(D, D.T, rtol=0.0, atol=1e-8):
        raise ConfigError("distances must be symmetric")
    if np.abs(np.diag(D)).max() > 1e-8:
        raise ConfigError("distance diagonal must be zero")
    if D.min() < 0.0:
        raise ConfigError("distances must be non-negative")
    if linkage not in _LINKAGES:
        raise ConfigError(f"unknown linkage {linkage!r}")
    n_clusters = int(n_clusters)
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"n_clusters must be in 1..{n}, got {n_clusters}")

    work = D.astype(np.float64) ** 2 if linkage == "ward" else D.astype(np.float64)
    work = (work + work.T) / 2.0
    big = np.inf
    idx = np.arange(n)
    work[idx, idx] = big
    work[np.tril_indices(n, -1)] = big

    sizes = np.ones(n)
    members = [[i] for i in range(n)]
    active = np.ones(n, dtype=bool)
    height = 0.0

    for _ in range(n - n_clusters):
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        merged = work[i, j]
        height = float(np.sqrt(merged)) if linkage == "ward" else float(merged)

        ks = np.flatnonzero(active)
        ks = ks[(ks != i) & (ks != j)]
        d_ik = np.where(ks < i, work[ks, i], work[i, ks])
        d_jk = np.where(ks < j, work[ks, j], work[j, ks])
        if linkage == "ward":
            si, sj, sk = sizes[i], sizes[j], sizes[ks]
            new = ((si + sk) * d_ik + (sj + sk) * d_jk - sk * merged) / (si + sj + sk)
        elif linkage == "complete":
            new = np.maximum(d_ik, d_jk)
        else:
            new = (sizes[i] * d_ik + sizes[j] * d_jk) / (sizes[i] + sizes[j])

        lo = np.minimum(ks, i)
        hi = np.maximum(ks, i)
        work[lo, hi] = new
        work[j, :] = big
        work[:, j] = big
        sizes[i] += sizes[j]
        members[i].extend(members[j])
        active[j] = False

    groups = sorted((min(members[i]), members[i]) for i in np.flatnonzero(active))
    labels = np.empty(n, dtype=np.int64)
    for label, (_, group) in enumerate(groups, start=1):
        labels[np.asarray(group)] = label
    sizes_out = tuple(len(group) for _, group in groups)
    return Partition(labels, len(groups), sizes_out, height)


def adjusted_rand_index(labels_a, labels_b):
    """Chance-corrected agreement between two partitions of the same rows.

    1 for identical partitions (up to renaming), about 0 for independent
    ones; can be negative for adversarial disagreement.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ConfigError("partitions must be equal-length and non-empty")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    total = comb2(float(n))
    if total == 0.0:
        return 1.0
    expected = sum_rows * sum_cols / total
    top = (sum_rows + sum_cols) / 2.0
    if top == expected:
        return 1.0
    return float((sum_cells - expected) / (top - expected))
