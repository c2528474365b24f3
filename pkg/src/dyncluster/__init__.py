"""Deep clustering with an adversarially pretrained autoencoder and a
dynamic objective that trades per-sample reconstruction for centroid-image
construction as assignment confidence grows."""

from .assign import (centroid_images, conflict_mask, kmeans, soft_assign,
                     thresholds, top_two)
from .clustering import (ClusterConfig, ClusterState, dynamic_loss,
                         escape_update, init_cluster_state, run_clustering)
from .data import AugmentConfig, Dataset, augment, batch_iter, load_idx, \
    load_usps, save_usps
from .estimators import DynamicAutoencoderClustering, InterpolationAutoencoder
from .linalg import (DenseLayer, NumericError, finite_diff_gradient, matmul,
                     mlp_backward, mlp_forward, mse_loss)
from .losses import acai_autoencoder_loss, acai_critic_loss, interpolate_latent
from .metrics import (acc, delta_fd, delta_fr, grad_cosine, hungarian, nmi,
                      pca2d)
from .models import Autoencoder, Critic, load_checkpoint, save_checkpoint
from .optim import Adam, SgdMomentum
from .pretrain import PretrainConfig, pretrain_step, run_pretraining

__version__ = "0.1.0"

__all__ = [
    "Adam", "AugmentConfig", "Autoencoder", "ClusterConfig", "ClusterState",
    "Critic", "Dataset", "DenseLayer", "DynamicAutoencoderClustering",
    "InterpolationAutoencoder", "NumericError", "PretrainConfig",
    "SgdMomentum", "acai_autoencoder_loss", "acai_critic_loss", "acc",
    "augment", "batch_iter", "centroid_images", "conflict_mask", "delta_fd",
    "delta_fr", "dynamic_loss", "escape_update", "finite_diff_gradient",
    "grad_cosine", "hungarian", "init_cluster_state", "interpolate_latent",
    "kmeans", "load_checkpoint", "load_idx", "load_usps", "matmul",
    "mlp_backward", "mlp_forward", "mse_loss", "nmi", "pca2d",
    "pretrain_step", "run_clustering", "run_pretraining", "save_checkpoint",
    "save_usps", "soft_assign", "thresholds", "top_two",
]
