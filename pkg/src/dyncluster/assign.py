"""Latent-space assignment machinery: K-Means, the Student's-t soft
assignment kernel, conflict detection thresholds, and nearest-image
centroid substitution."""

import numpy as np


def squared_distances(a, b):
    """Pairwise squared Euclidean distances, rows of a against rows of b."""
    aa = np.sum(a * a, axis=1, dtype=np.float64)[:, None]
    bb = np.sum(b * b, axis=1, dtype=np.float64)[None, :]
    d2 = aa + bb - 2.0 * (a.astype(np.float64) @ b.T.astype(np.float64))
    return np.maximum(d2, 0.0)


def _kmeanspp_seed(z, k, rng):
    n = z.shape[0]
    centroids = np.empty((k, z.shape[1]), dtype=np.float64)
    first = rng.integers(n)
    centroids[0] = z[first]
    d2 = squared_distances(z, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = z[idx]
        d2 = np.minimum(d2, squared_distances(z, centroids[j:j + 1]).ravel())
    return centroids


def _repair_empty(labels, d2, k):
    """Give each empty cluster the point currently farthest from its centroid."""
    own = d2[np.arange(labels.shape[0]), labels].copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        idx = int(np.argmax(own))
        labels[idx] = j
        own[idx] = -np.inf
    return labels


def kmeans(z, k, rng, warm_start=None, max_rounds=300, warm_rounds=20):
    """Lloyd's algorithm to an assignment fixpoint.

    Cold starts use k-means++ seeding; a supplied warm-start centroid
    matrix caps the refinement at ``warm_rounds`` rounds. Returns
    (centroids, labels, inertia).
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if warm_start is None:
        centroids = _kmeanspp_seed(z, k, rng)
        rounds = max_rounds
    else:
        centroids = np.asarray(warm_start, dtype=np.float64).copy()
        if centroids.shape != (k, z.shape[1]):
            raise ValueError("warm-start centroids have the wrong shape")
        rounds = warm_rounds
    labels = None
    for _ in range(rounds):
        d2 = squared_distances(z, centroids)
        new_labels = np.argmin(d2, axis=1)
        new_labels = _repair_empty(new_labels, d2, k)
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = z[labels == j].mean(axis=0)
    d2 = squared_distances(z, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return centroids, labels, inertia


def soft_assign(z, centroids, kernel_dof=1.0):
    """Row-stochastic Student's-t similarities between points and centroids.

    q_ij is proportional to (1 + ||z_i - mu_j||^2 / dof)^(-(dof+1)/2).
    """
    if kernel_dof <= 0:
        raise ValueError("kernel_dof must be positive")
    d2 = squared_distances(np.asarray(z), np.asarray(centroids))
    q = np.power(1.0 + d2 / kernel_dof, -(kernel_dof + 1.0) / 2.0)
    return q / q.sum(axis=1, keepdims=True)


def top_two(q_row):
    """Largest and second-largest entries plus the argmax index.

    The runner-up is the largest entry strictly below the maximum; when
    every entry equals the maximum, it is the maximum itself. Argmax ties
    break toward the lowest index.
    """
    q_row = np.asarray(q_row, dtype=np.float64)
    if q_row.ndim != 1 or q_row.shape[0] < 2:
        raise ValueError("need a 1-D row with at least 2 entries")
    best = int(np.argmax(q_row))
    h1 = float(q_row[best])
    below = q_row[q_row < h1]
    h2 = float(below.max()) if below.size else h1
    return h1, h2, best


def ordered_maxima(q):
    """Vectorized top_two over the rows of an assignment matrix."""
    q = np.asarray(q, dtype=np.float64)
    h1 = q.max(axis=1)
    masked = np.where(q < h1[:, None], q, -np.inf)
    h2 = masked.max(axis=1)
    h2 = np.where(np.isfinite(h2), h2, h1)
    return h1, h2, q.argmax(axis=1)


def conflict_mask(q, beta1, beta2):
    """True for rows whose assignment is conflicted.

    A row is conflicted when its top assignment falls below beta1 or the
    gap between its top two assignments falls below beta2 (both strict).
    """
    h1, h2, _ = ordered_maxima(q)
    return (h1 < beta1) | ((h1 - h2) < beta2)


def thresholds(kappa, k):
    """Confidence thresholds (beta1, beta2) = (kappa/K, kappa/(2K))."""
    if k < 2:
        raise ValueError("need at least 2 clusters")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    beta1 = kappa / k
    return beta1, beta1 / 2.0


def centroid_images(centroids, z_all, x_all):
    """Substitute each centroid with its nearest embedded dataset image.

    Row k is the dataset row whose embedding is closest (squared L2) to
    centroid k; ties break toward the lowest index.
    """
    d2 = squared_distances(np.asarray(centroids), np.asarray(z_all))
    nn = np.argmin(d2, axis=1)
    return np.asarray(x_all)[nn].copy()
