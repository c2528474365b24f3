import numpy as np
import pytest

from dyncluster.linalg import (finite_diff_gradient, layers_to_vector,
                               set_layers_from_vector)
from dyncluster.models import Autoencoder, Critic


def _jitter_biases(layers, rng):
    # zero biases put dead-ReLU rows exactly on the activation kink,
    # where finite differences legitimately disagree with subgradients
    for layer in layers:
        layer.bias[:] = rng.uniform(0.01, 0.2, size=layer.bias.shape)


def tiny_autoencoder(seed=0, d=6, hidden=(5, 4), latent=3):
    rng = np.random.default_rng(seed)
    ae = Autoencoder.build(rng, d, hidden, latent)
    _jitter_biases(ae.encoder, rng)
    _jitter_biases(ae.decoder, rng)
    return ae


def tiny_critic(seed=1, d=6, hidden=(5, 4)):
    rng = np.random.default_rng(seed)
    critic = Critic.build(rng, d, hidden)
    _jitter_biases(critic.layers, rng)
    return critic


def ae_params_vector(ae):
    return np.concatenate([layers_to_vector(ae.encoder),
                           layers_to_vector(ae.decoder)])


def set_ae_params(ae, vec):
    n_enc = layers_to_vector(ae.encoder).size
    set_layers_from_vector(ae.encoder, vec[:n_enc])
    set_layers_from_vector(ae.decoder, vec[n_enc:])


def assert_grad_close(analytic, numeric, rtol=1e-4, floor=1e-8):
    """Per-coordinate relative error check with an absolute floor."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    assert analytic.shape == numeric.shape
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / scale
    worst = float(rel.max())
    assert worst < rtol, f"worst relative gradient error {worst:.3e}"


def check_against_finite_differences(loss_of_vector, vec, rtol=1e-4,
                                     step=1e-5):
    """Compare an analytic-gradient producer against central differences.

    loss_of_vector(v) -> (value, grad_vector); the numeric side re-evaluates
    only the value.
    """
    _, analytic = loss_of_vector(vec)
    numeric = finite_diff_gradient(lambda v: loss_of_vector(v)[0], vec, step)
    assert_grad_close(analytic, numeric, rtol=rtol)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
