"""Scikit-learn style front ends over the training engine.

Both estimators accept a flattened sample matrix with entries in [0, 1]
(one image per row) and follow the usual conventions: parameters are
stored verbatim in ``__init__``, all work happens in ``fit``, and fitted
attributes carry a trailing underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from .assign import soft_assign
from .clustering import run_clustering
from .data import AugmentConfig, Dataset
from .pretrain import PretrainConfig, run_pretraining
from .validation import as_matrix, check_unit_range


def _image_shape_for(d, image_shape, need_augment):
    if image_shape is not None:
        h, w = image_shape
        if h * w != d:
            raise ValueError(f"image_shape {image_shape} does not match d={d}")
        return (h, w)
    side = int(round(np.sqrt(d)))
    if side * side == d:
        return (side, side)
    if need_augment:
        raise ValueError(
            f"d={d} is not a square image; pass image_shape or disable "
            "augmentation"
        )
    return (1, d)


def _as_dataset(X, image_shape, need_augment, name):
    X = as_matrix(X)
    check_unit_range(X)
    shape = _image_shape_for(X.shape[1], image_shape, need_augment)
    return Dataset(X, None, shape, name)


class InterpolationAutoencoder(TransformerMixin, BaseEstimator):
    """Autoencoder pretrained with an adversarial interpolation critic.

    ``transform`` maps samples to the latent space; ``inverse_transform``
    decodes latents back to inputs.
    """

    def __init__(self, hidden_dims=(500, 500, 2000), latent_dim=10,
                 iterations=10_000, learning_rate=1e-4, batch_size=256,
                 interp_weight=0.5, alpha_half=False, augment=True,
                 shift_fraction=0.1, rotation_degrees=10.0, image_shape=None,
                 precision="f64", random_state=0):
        self.hidden_dims = hidden_dims
        self.latent_dim = latent_dim
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.interp_weight = interp_weight
        self.alpha_half = alpha_half
        self.augment = augment
        self.shift_fraction = shift_fraction
        self.rotation_degrees = rotation_degrees
        self.image_shape = image_shape
        self.precision = precision
        self.random_state = random_state

    def _pretrain_config(self):
        return PretrainConfig(
            iterations=self.iterations,
            adam_lr=self.learning_rate,
            batch_size=self.batch_size,
            interp_weight=self.interp_weight,
            alpha_half=self.alpha_half,
            augment=AugmentConfig(self.shift_fraction,
                                  self.rotation_degrees, self.augment),
            hidden_dims=tuple(self.hidden_dims),
            latent_dim=self.latent_dim,
            seed=self.random_state,
            checkpoint_every=0,
            precision=self.precision,
        )

    def fit(self, X, y=None):
        ds = _as_dataset(X, self.image_shape, self.augment, "fit")
        result = run_pretraining(ds, self._pretrain_config())
        self.autoencoder_ = result.ae
        self.critic_ = result.critic
        self.n_features_in_ = ds.d
        return self

    def transform(self, X):
        X = as_matrix(X, dtype=self.autoencoder_.dtype)
        return self.autoencoder_.encode(X)

    def inverse_transform(self, Z):
        Z = as_matrix(Z, "Z", dtype=self.autoencoder_.dtype)
        return self.autoencoder_.decode(Z)

    def score(self, X, y=None):
        """Negative mean squared reconstruction error (higher is better)."""
        X = as_matrix(X, dtype=self.autoencoder_.dtype)
        r = self.autoencoder_.reconstruct(X) - X
        return -float(np.sum(r * r, dtype=np.float64) / X.shape[0])


class DynamicAutoencoderClustering(ClusterMixin, TransformerMixin,
                                   BaseEstimator):
    """Two-phase deep clustering estimator.

    ``fit`` pretrains the autoencoder (unless a fitted
    ``InterpolationAutoencoder`` is supplied) and then runs the dynamic
    clustering phase. ``labels_`` holds the final hard assignments;
    ``predict`` assigns new samples to the learned latent centroids.
    """

    def __init__(self, n_clusters=10, hidden_dims=(500, 500, 2000),
                 latent_dim=10, pretrain_iterations=10_000,
                 pretrain_lr=1e-4, interp_weight=0.5, alpha_half=False,
                 cluster_lr=1e-3, momentum=0.9, batch_size=256, tol=0.01,
                 max_iter=20_000, kappa_init_factor=0.3,
                 kappa_drop_factor=0.3, conflict_eval_every=100,
                 kernel_dof=1.0, gamma=None, augment=True,
                 shift_fraction=0.1, rotation_degrees=10.0, image_shape=None,
                 pretrained=None, precision="f64", random_state=0):
        self.n_clusters = n_clusters
        self.hidden_dims = hidden_dims
        self.latent_dim = latent_dim
        self.pretrain_iterations = pretrain_iterations
        self.pretrain_lr = pretrain_lr
        self.interp_weight = interp_weight
        self.alpha_half = alpha_half
        self.cluster_lr = cluster_lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.tol = tol
        self.max_iter = max_iter
        self.kappa_init_factor = kappa_init_factor
        self.kappa_drop_factor = kappa_drop_factor
        self.conflict_eval_every = conflict_eval_every
        self.kernel_dof = kernel_dof
        self.gamma = gamma
        self.augment = augment
        self.shift_fraction = shift_fraction
        self.rotation_degrees = rotation_degrees
        self.image_shape = image_shape
        self.pretrained = pretrained
        self.precision = precision
        self.random_state = random_state

    def fit(self, X, y=None):
        from .clustering import ClusterConfig

        ds = _as_dataset(X, self.image_shape, self.augment, "fit")
        if self.pretrained is not None:
            ae = getattr(self.pretrained, "autoencoder_", self.pretrained)
            if ae.d != ds.d:
                raise ValueError(
                    f"pretrained model expects d={ae.d}, data has d={ds.d}"
                )
        else:
            pcfg = PretrainConfig(
                iterations=self.pretrain_iterations,
                adam_lr=self.pretrain_lr,
                batch_size=self.batch_size,
                interp_weight=self.interp_weight,
                alpha_half=self.alpha_half,
                augment=AugmentConfig(self.shift_fraction,
                                      self.rotation_degrees, self.augment),
                hidden_dims=tuple(self.hidden_dims),
                latent_dim=self.latent_dim,
                seed=self.random_state,
                checkpoint_every=0,
                precision=self.precision,
            )
            ae = run_pretraining(ds, pcfg).ae

        ccfg = ClusterConfig(
            n_clusters=self.n_clusters,
            tol=self.tol,
            max_iter=self.max_iter,
            kappa_init_factor=self.kappa_init_factor,
            kappa_drop_factor=self.kappa_drop_factor,
            sgd_lr=self.cluster_lr,
            momentum=self.momentum,
            batch_size=self.batch_size,
            gamma=self.gamma,
            conflict_eval_every=self.conflict_eval_every,
            kernel_dof=self.kernel_dof,
            seed=self.random_state,
            augment=AugmentConfig(self.shift_fraction,
                                  self.rotation_degrees, self.augment),
        )
        result = run_clustering(ds, ae, ccfg)
        self.autoencoder_ = ae
        self.state_ = result.state
        self.labels_ = result.assignments
        self.cluster_centers_ = result.state.centroids
        self.tau_ = result.final_tau
        self.n_iter_ = result.iterations
        self.n_features_in_ = ds.d
        return self

    def transform(self, X):
        X = as_matrix(X, dtype=self.autoencoder_.dtype)
        return self.autoencoder_.encode(X)

    def predict(self, X):
        z = self.transform(X)
        q = soft_assign(z, self.cluster_centers_, self.kernel_dof)
        return q.argmax(axis=1)
