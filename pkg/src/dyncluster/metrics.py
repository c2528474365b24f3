"""Clustering evaluation (accuracy, NMI) and gradient-direction diagnostics.

The two diagnostic cosines compare parameter-gradient directions:

* label-faithfulness: gradient of the pseudo-supervised objective versus
  the same objective with each sample's target swapped for the centroid
  of its true class under the current cluster/class matching;
* objective competition: gradient of the reconstruction part of the loss
  (conflicted rows) versus the construction-plus-attraction part
  (unconflicted rows).

Gradient snapshots are flat vectors in a fixed order: encoder layers then
decoder layers, weights before bias within each layer.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .linalg import grads_to_vector, mlp_backward, mlp_forward
from .validation import as_label_vector, check_consistent_length


class DiagnosticUnavailable(RuntimeError):
    """The requested diagnostic is undefined for the given inputs."""


def hungarian(cost):
    """Minimum-cost assignment; ties resolve to the lexicographically
    smallest optimal permutation.

    Returns perm with perm[i] = column assigned to row i.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    n = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    best = float(cost[rows, cols].sum())
    tol = 1e-9 * max(1.0, np.abs(cost).sum())

    perm = np.empty(n, dtype=np.int64)
    free = list(range(n))
    fixed = 0.0
    for i in range(n):
        for j in free:
            rest_cols = [c for c in free if c != j]
            if rest_cols:
                sub = cost[np.ix_(range(i + 1, n), rest_cols)]
                r2, c2 = linear_sum_assignment(sub)
                completion = float(sub[r2, c2].sum())
            else:
                completion = 0.0
            if fixed + cost[i, j] + completion <= best + tol:
                perm[i] = j
                fixed += cost[i, j]
                free.remove(j)
                break
        else:
            raise AssertionError("no consistent assignment found")
    return perm


def contingency(y_true, y_pred):
    y_true = as_label_vector(y_true, name="y_true")
    y_pred = as_label_vector(y_pred, name="y_pred")
    check_consistent_length(y_true, y_pred, "y_true", "y_pred")
    n_classes = int(y_true.max()) + 1 if y_true.size else 0
    n_clusters = int(y_pred.max()) + 1 if y_pred.size else 0
    table = np.zeros((n_classes, n_clusters), dtype=np.int64)
    np.add.at(table, (y_true, y_pred), 1)
    return table


def cluster_to_class_map(y_true, y_pred):
    """Best one-to-one cluster->class matching on a square-padded table.

    Returns (mapping, n_matched) where mapping[j] is the class matched to
    cluster j (may exceed the real class count for padded clusters).
    """
    table = contingency(y_true, y_pred)
    n = max(table.shape)
    padded = np.zeros((n, n), dtype=np.int64)
    padded[:table.shape[0], :table.shape[1]] = table
    perm = hungarian(-padded.astype(np.float64).T)
    matched = int(padded.T[np.arange(n), perm].sum())
    return perm, matched


def acc(y_true, y_pred):
    """Clustering accuracy under the best one-to-one cluster/class map."""
    y_true = as_label_vector(y_true, name="y_true")
    check_consistent_length(y_true, y_pred, "y_true", "y_pred")
    _, matched = cluster_to_class_map(y_true, y_pred)
    return matched / y_true.shape[0]


def nmi(y_true, y_pred):
    """Mutual information normalized by the mean of the two entropies.

    Natural logarithms internally (the ratio is base-invariant). Returns
    0.0 when either partition is constant.
    """
    table = contingency(y_true, y_pred).astype(np.float64)
    n = table.sum()
    p = table / n
    pi = p.sum(axis=1)
    pj = p.sum(axis=0)
    nz = p > 0
    outer = pi[:, None] * pj[None, :]
    mi = float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))
    h_true = float(-np.sum(pi[pi > 0] * np.log(pi[pi > 0])))
    h_pred = float(-np.sum(pj[pj > 0] * np.log(pj[pj > 0])))
    denom = 0.5 * (h_true + h_pred)
    if denom == 0.0:
        return 0.0
    return mi / denom


def grad_cosine(g1, g2):
    """Cosine of the angle between two flat gradient vectors."""
    g1 = np.asarray(g1, dtype=np.float64).ravel()
    g2 = np.asarray(g2, dtype=np.float64).ravel()
    if g1.shape != g2.shape:
        raise ValueError(f"length mismatch: {g1.shape} vs {g2.shape}")
    n1 = np.linalg.norm(g1)
    n2 = np.linalg.norm(g2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("gradient cosine is undefined for a zero vector")
    return float(np.dot(g1, g2) / (n1 * n2))


def gradient_snapshot(enc_grads, dec_grads):
    """Flatten autoencoder gradients in the documented fixed order."""
    return np.concatenate([grads_to_vector(enc_grads),
                           grads_to_vector(dec_grads)])


def _construction_snapshot(ae, x_rows, image_targets, latent_targets, n_norm):
    """Gradient of (1/n)[sum ||xhat-img||^2 + sum ||z-lat||^2] over rows."""
    z, enc_cache = mlp_forward(ae.encoder, x_rows)
    xhat, dec_cache = mlp_forward(ae.decoder, z)
    dxhat = (2.0 / n_norm) * (xhat - image_targets)
    dec_grads, dz = mlp_backward(ae.decoder, dec_cache, dxhat)
    if latent_targets is not None:
        dz = dz + (2.0 / n_norm) * (z - latent_targets)
    enc_grads, _ = mlp_backward(ae.encoder, enc_cache, dz)
    return gradient_snapshot(enc_grads, dec_grads)


def _label_target_snapshots(ae, x, y, batch_mask, batch_assign, state,
                            cluster_to_class):
    """(pseudo, true-class) gradient snapshots over unconflicted rows,
    plus whether the two target index arrays coincide."""
    y = as_label_vector(y, n=x.shape[0])
    unconf = ~np.asarray(batch_mask, dtype=bool)
    if not unconf.any():
        raise DiagnosticUnavailable("no unconflicted rows in the batch")
    x_u = np.asarray(x, dtype=ae.dtype)[unconf]
    y_u = y[unconf]
    n_norm = x.shape[0]
    assign = np.asarray(batch_assign)[unconf]

    class_to_cluster = np.full(int(cluster_to_class.max()) + 1, -1,
                               dtype=np.int64)
    for j, c in enumerate(cluster_to_class):
        class_to_cluster[c] = j
    true_cluster = class_to_cluster[y_u]
    k = state.centroids.shape[0]
    if (true_cluster < 0).any() or (true_cluster >= k).any():
        raise DiagnosticUnavailable(
            "some true classes have no matched cluster"
        )
    g_pseudo = _construction_snapshot(
        ae, x_u, state.centroid_images[assign].astype(ae.dtype),
        state.centroids[assign].astype(ae.dtype), n_norm)
    g_true = _construction_snapshot(
        ae, x_u, state.centroid_images[true_cluster].astype(ae.dtype),
        state.centroids[true_cluster].astype(ae.dtype), n_norm)
    return g_pseudo, g_true, np.array_equal(assign, true_cluster)


def _objective_side_snapshots(ae, x, batch_mask, batch_assign, state):
    """(construction-side, reconstruction-side) gradient snapshots."""
    mask = np.asarray(batch_mask, dtype=bool)
    if not mask.any() or mask.all():
        raise DiagnosticUnavailable(
            "need both conflicted and unconflicted rows"
        )
    x = np.asarray(x, dtype=ae.dtype)
    n_norm = x.shape[0]

    x_c = x[mask]
    g_self = _construction_snapshot(ae, x_c, x_c, None, n_norm)

    x_u = x[~mask]
    assign = np.asarray(batch_assign)[~mask]
    g_pseudo = _construction_snapshot(
        ae, x_u, state.centroid_images[assign].astype(ae.dtype),
        state.centroids[assign].astype(ae.dtype), n_norm)
    return g_pseudo, g_self


def delta_fr(ae, x, y, batch_mask, batch_assign, state, cluster_to_class):
    """Cosine between pseudo-target and true-class-target gradients.

    Both gradients use the construction+attraction form on the batch's
    unconflicted rows; inputs are clean (no augmentation). Requires true
    labels, the window's per-sample assignments, and the current
    cluster->class matching. Exactly 1.0 whenever the pseudo targets
    coincide with the true-class targets.
    """
    g_pseudo, g_true, coincide = _label_target_snapshots(
        ae, x, y, batch_mask, batch_assign, state, cluster_to_class)
    if coincide:
        return 1.0
    return grad_cosine(g_pseudo, g_true)


def delta_fd(ae, x, batch_mask, batch_assign, state):
    """Cosine between the reconstruction-side and construction-side
    gradients of the dynamic objective on one batch of clean inputs.

    Undefined unless the batch holds at least one conflicted and one
    unconflicted row.
    """
    g_pseudo, g_self = _objective_side_snapshots(ae, x, batch_mask,
                                                 batch_assign, state)
    return grad_cosine(g_pseudo, g_self)


def diagnostic_snapshots(ae, x, batch_mask, batch_assign, state, y=None,
                         cluster_to_class=None):
    """Named gradient snapshots behind the two diagnostics, for export.

    Always contains the construction/reconstruction pair when both sides
    are present; adds the pseudo/true-class pair when labels and a
    matching are supplied. Missing diagnostics are silently omitted.
    """
    out = {}
    try:
        g_p, g_s = _objective_side_snapshots(ae, x, batch_mask,
                                             batch_assign, state)
        out["construction_side"] = g_p
        out["reconstruction_side"] = g_s
    except DiagnosticUnavailable:
        pass
    if y is not None and cluster_to_class is not None:
        try:
            g_pseudo, g_true, _ = _label_target_snapshots(
                ae, x, y, batch_mask, batch_assign, state, cluster_to_class)
            out["pseudo_label_targets"] = g_pseudo
            out["true_class_targets"] = g_true
        except DiagnosticUnavailable:
            pass
    return out


def pca2d(z):
    """Project onto the top-2 eigenvectors of the column covariance.

    Columns are centered first; each eigenvector's sign is fixed so its
    largest-magnitude component is positive.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError("need an N x p matrix with p >= 2")
    centered = z - z.mean(axis=0)
    cov = centered.T @ centered / max(z.shape[0] - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 1e-12 * max(1.0, abs(evals).max()):
        raise ValueError("data has no variance to project")
    top = evecs[:, [-1, -2]]
    for col in range(2):
        lead = np.argmax(np.abs(top[:, col]))
        if top[lead, col] < 0:
            top[:, col] = -top[:, col]
    return centered @ top
