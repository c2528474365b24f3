"""Dynamic clustering phase: per-sample reconstruction gives way to
centroid-image construction plus latent attraction as assignment
confidence grows.

The driver alternates mini-batch SGD steps on the dynamic objective with
periodic full-dataset evaluations. Whenever the conflicted count stops
shrinking, centroids are refreshed by warm-started K-Means and the
confidence thresholds drop, which unlocks further progress.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assign import (centroid_images, conflict_mask, kmeans, soft_assign,
                     thresholds)
from .data import AugmentConfig, augment
from .linalg import NumericError, mlp_backward, mlp_forward
from .metrics import (DiagnosticUnavailable, acc, cluster_to_class_map,
                      delta_fd, delta_fr, nmi)
from .optim import SgdMomentum


@dataclass
class ClusterConfig:
    n_clusters: int = 10
    tol: float = 0.01
    max_iter: int = 100_000
    kappa_init_factor: float = 0.3
    kappa_drop_factor: float = 0.3
    sgd_lr: float = 0.001
    momentum: float = 0.9
    batch_size: int = 256
    gamma: float | None = None
    conflict_eval_every: int = 100
    kernel_dof: float = 1.0
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    literal_kappa_reset: bool = False
    diag_batch_size: int = 256

    def __post_init__(self):
        if not 0.0 < self.tol <= 1.0:
            raise ValueError("tol must lie in (0, 1]")
        if self.n_clusters < 2:
            raise ValueError("need at least 2 clusters")

    @property
    def kappa_init(self):
        return self.kappa_init_factor * self.n_clusters


@dataclass
class ClusterState:
    """Everything the dynamic objective reads between evaluations.

    The conflict partition and the per-sample hard assignments are frozen
    at each full-dataset evaluation and consumed as constants by the
    mini-batch loss until the next evaluation.
    """

    centroids: np.ndarray        # K x p
    kernel_dof: float
    beta1: float
    beta2: float
    kappa: float
    kappa_drop_factor: float
    conflict_mask: np.ndarray    # bool, length N; True = conflicted
    tau: float
    centroid_images: np.ndarray  # K x d
    prev_conflict_count: int
    assignments: np.ndarray | None = None  # int, length N

    @property
    def n_clusters(self):
        return self.centroids.shape[0]

    def refresh_mask(self, z_all):
        """Recompute the conflict partition from full-dataset embeddings."""
        q = soft_assign(z_all, self.centroids, self.kernel_dof)
        self.conflict_mask = conflict_mask(q, self.beta1, self.beta2)
        self.tau = float(self.conflict_mask.mean())
        self.assignments = q.argmax(axis=1)
        return q


@dataclass
class DynamicLossResult:
    total: float
    l1: float
    l2: float
    enc_grads: list
    dec_grads: list
    assign: np.ndarray


def init_cluster_state(ae, x_all, cfg, rng):
    """K-Means-initialize centroids and the conflict partition."""
    z_all = ae.encode(x_all)
    centroids, _, _ = kmeans(z_all, cfg.n_clusters, rng)
    beta1, beta2 = thresholds(cfg.kappa_init, cfg.n_clusters)
    state = ClusterState(
        centroids=centroids,
        kernel_dof=cfg.kernel_dof,
        beta1=beta1,
        beta2=beta2,
        kappa=cfg.kappa_init,
        kappa_drop_factor=cfg.kappa_drop_factor,
        conflict_mask=np.zeros(x_all.shape[0], dtype=bool),
        tau=0.0,
        centroid_images=centroid_images(centroids, z_all, x_all),
        prev_conflict_count=x_all.shape[0],
    )
    state.refresh_mask(z_all)
    return state, z_all


def dynamic_loss(ae, idx, x, state, gamma=None):
    """Loss value and autoencoder gradients for one mini-batch.

    Conflicted rows are trained to reconstruct their own (possibly
    augmented) input; the rest are trained to construct their assigned
    centroid's image while their embeddings are pulled toward that
    centroid. Assignments and conflict statuses come from the state's
    last full-dataset evaluation of clean embeddings and are constants
    for the gradient. With ``gamma`` set, the attraction term is scaled
    by it.
    """
    idx = np.asarray(idx)
    if state.assignments is None:
        raise ValueError("cluster state holds no assignments; evaluate first")
    if state.conflict_mask.shape[0] <= int(idx.max()):
        raise ValueError(
            f"conflict mask holds {state.conflict_mask.shape[0]} samples "
            f"but batch indexes up to {int(idx.max())}"
        )
    x = np.asarray(x, dtype=ae.dtype)
    n = x.shape[0]
    conflicted = state.conflict_mask[idx]
    unconf = ~conflicted
    assign = state.assignments[idx]

    targets = np.where(conflicted[:, None], x,
                       state.centroid_images[assign].astype(ae.dtype))

    z, enc_cache = mlp_forward(ae.encoder, x)
    xhat, dec_cache = mlp_forward(ae.decoder, z)

    r = xhat - targets
    l1 = float(np.sum(r * r, dtype=np.float64) / n)

    g = 1.0 if gamma is None else float(gamma)
    lat_diff = z[unconf] - state.centroids[assign[unconf]].astype(ae.dtype)
    l2 = float(np.sum(lat_diff * lat_diff, dtype=np.float64) / n)
    total = l1 + g * l2

    dec_grads, dz = mlp_backward(ae.decoder, dec_cache, (2.0 / n) * r)
    dz[unconf] += (g * 2.0 / n) * lat_diff
    enc_grads, _ = mlp_backward(ae.encoder, enc_cache, dz)
    return DynamicLossResult(total, l1, l2, enc_grads, dec_grads, assign)


def escape_update(state, z_all, x_all, rng, literal_kappa_reset=False):
    """Break a conflicted-count plateau.

    Warm-restarts K-Means from the current centroids, lowers both
    thresholds by drop/K (clamped at 0), decays kappa by its drop rate,
    and refreshes the nearest-image substitutes. Returns the state.
    """
    k = state.n_clusters
    drop = state.kappa_drop_factor * state.kappa
    state.centroids, _, _ = kmeans(z_all, k, rng, warm_start=state.centroids)
    state.beta1 = max(0.0, state.beta1 - drop / k)
    state.beta2 = max(0.0, state.beta2 - drop / k)
    state.kappa = drop if literal_kappa_reset else state.kappa - drop
    state.centroid_images = centroid_images(state.centroids, z_all, x_all)
    return state


class _EpochBatcher:
    """Shuffled epoch batches with an exactly restorable position."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.perm = rng.permutation(n)
        self.pos = 0

    def next(self):
        if self.pos >= self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx

    def snapshot(self):
        return {"perm": self.perm.copy(), "pos": self.pos,
                "rng": self.rng.bit_generator.state}

    def restore(self, snap):
        self.perm = np.asarray(snap["perm"])
        self.pos = int(snap["pos"])
        self.rng.bit_generator.state = snap["rng"]


CURVE_HEADER = ("iter,tau,l1,l2,total,acc_all,nmi_all,acc_unconf,"
                "nmi_unconf,acc_conf,nmi_conf,seconds")
EVENT_HEADER = "iter,kappa,beta1,beta2"
DIAG_HEADER = "iter,delta_fr,delta_fd"


def _subset_scores(y_true, y_pred, rows):
    if rows.sum() == 0:
        return math.nan, math.nan
    return acc(y_true[rows], y_pred[rows]), nmi(y_true[rows], y_pred[rows])


@dataclass
class ClusterRunResult:
    state: ClusterState
    assignments: np.ndarray
    iterations: int
    history: list
    escapes: list
    initial_tau: float
    final_tau: float


def run_clustering(ds, ae, cfg, log_file=None, event_file=None,
                   diag_file=None, on_abort_checkpoint=None):
    """Algorithm driver for the dynamic clustering phase.

    Writes the learning-curve CSV (and escape/diagnostic CSVs) through the
    supplied line-buffered file objects when given. Returns the final
    state plus hard assignments for every sample.
    """
    root = np.random.SeedSequence(cfg.seed)
    km_seq, batch_seq, aug_seq, diag_seq = root.spawn(4)
    km_rng = np.random.default_rng(km_seq)
    batch_rng = np.random.default_rng(batch_seq)
    aug_rng = np.random.default_rng(aug_seq)

    x_all = np.asarray(ds.X, dtype=ae.dtype)
    n = x_all.shape[0]
    state, z_all = init_cluster_state(ae, x_all, cfg, km_rng)
    initial_tau = state.tau

    # The stated learning rate assumes per-element-mean gradients (the
    # mainstream framework convention); the loss here uses per-row squared
    # norms, a factor of d larger on the image terms and p on the latent
    # term. Scale the step by 1/d and the attraction weight by d/p so the
    # update equals the framework-convention one at the configured rate.
    d = x_all.shape[1]
    p = ae.latent_dim
    effective_gamma = (1.0 if cfg.gamma is None else cfg.gamma) * d / p
    opt = SgdMomentum(cfg.sgd_lr / d, cfg.momentum)
    params = ae.parameters()
    batcher = _EpochBatcher(n, cfg.batch_size, batch_rng)

    diag_idx = None
    mapping_cache = None
    if ds.labels is not None:
        diag_rng = np.random.default_rng(diag_seq)
        diag_idx = diag_rng.choice(n, size=min(cfg.diag_batch_size, n),
                                   replace=False)

    def write(fh, line):
        if fh is not None:
            fh.write(line + "\n")
            fh.flush()

    write(log_file, CURVE_HEADER)
    write(event_file, EVENT_HEADER)
    write(diag_file, DIAG_HEADER)

    t0 = time.perf_counter()
    history = []
    escapes = []
    last_losses = {"l1": math.nan, "l2": math.nan, "total": math.nan}

    def evaluate(iteration):
        """Full-dataset measurement, stability test, and logging.

        Returns True when the run should terminate.
        """
        nonlocal z_all, mapping_cache
        z_all = ae.encode(x_all)
        q = state.refresh_mask(z_all)
        nb_conf = int(state.conflict_mask.sum())
        tau_pre = state.tau
        hard = q.argmax(axis=1)

        row = [str(iteration), f"{tau_pre:.6f}",
               f"{last_losses['l1']:.6f}", f"{last_losses['l2']:.6f}",
               f"{last_losses['total']:.6f}"]
        scores = {}
        if ds.labels is not None:
            scores["acc_all"] = acc(ds.labels, hard)
            scores["nmi_all"] = nmi(ds.labels, hard)
            a_u, n_u = _subset_scores(ds.labels, hard, ~state.conflict_mask)
            a_c, n_c = _subset_scores(ds.labels, hard, state.conflict_mask)
            scores.update(acc_unconf=a_u, nmi_unconf=n_u,
                          acc_conf=a_c, nmi_conf=n_c)
            mapping_cache, _ = cluster_to_class_map(ds.labels, hard)
            row += [f"{scores[k]:.6f}" for k in
                    ("acc_all", "nmi_all", "acc_unconf", "nmi_unconf",
                     "acc_conf", "nmi_conf")]
            if diag_file is not None:
                try:
                    dfr = delta_fr(ae, x_all[diag_idx], ds.labels[diag_idx],
                                   state.conflict_mask[diag_idx],
                                   state.assignments[diag_idx], state,
                                   mapping_cache)
                except DiagnosticUnavailable:
                    dfr = math.nan
                try:
                    dfd = delta_fd(ae, x_all[diag_idx],
                                   state.conflict_mask[diag_idx],
                                   state.assignments[diag_idx], state)
                except DiagnosticUnavailable:
                    dfd = math.nan
                write(diag_file, f"{iteration},{dfr:.6f},{dfd:.6f}")
        else:
            row += ["nan"] * 6
        row.append(f"{time.perf_counter() - t0:.3f}")
        write(log_file, ",".join(row))
        history.append({"iter": iteration, "tau": tau_pre,
                        "nb_conf": nb_conf, **last_losses, **scores})

        if nb_conf >= state.prev_conflict_count:
            escape_update(state, z_all, x_all, km_rng,
                          literal_kappa_reset=cfg.literal_kappa_reset)
            state.refresh_mask(z_all)
            escapes.append({"iter": iteration, "kappa": state.kappa,
                            "beta1": state.beta1, "beta2": state.beta2})
            write(event_file,
                  f"{iteration},{state.kappa:.9f},{state.beta1:.9f},"
                  f"{state.beta2:.9f}")
        state.prev_conflict_count = nb_conf
        return tau_pre < cfg.tol

    stop = evaluate(0)
    iteration = 0
    while not stop and iteration < cfg.max_iter:
        iteration += 1
        idx = batcher.next()
        x_batch = augment(x_all[idx], ds.image_shape, cfg.augment, aug_rng)
        res = dynamic_loss(ae, idx, x_batch, state, gamma=effective_gamma)
        if not math.isfinite(res.total):
            if on_abort_checkpoint is not None:
                on_abort_checkpoint(ae, state, iteration)
            raise NumericError(
                f"non-finite clustering loss at iteration {iteration}"
            )
        opt.step(params, [g for pair in res.enc_grads + res.dec_grads
                          for g in pair])
        last_losses.update(l1=res.l1, l2=res.l2, total=res.total)
        if iteration % cfg.conflict_eval_every == 0:
            stop = evaluate(iteration)

    z_all = ae.encode(x_all)
    q = soft_assign(z_all, state.centroids, state.kernel_dof)
    assignments = q.argmax(axis=1)
    return ClusterRunResult(state, assignments, iteration, history, escapes,
                            initial_tau, state.tau)
