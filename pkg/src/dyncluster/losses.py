"""Adversarial interpolation losses for autoencoder pretraining.

Two coupled objectives over one batch:

* the autoencoder minimizes reconstruction error plus ``interp_weight``
  times the squared critic score of decoded latent interpolations
  (the critic is held constant);
* the critic regresses the interpolation coefficient from those decoded
  interpolations and is pushed to score 0 on convex input/reconstruction
  mixes (the autoencoder is held constant).

All scalar terms are means over the batch of squared row norms, matching
``mse_loss``.
"""

import numpy as np

from .linalg import add_grads, mlp_backward, mlp_forward, mse_loss


def interpolate_latent(z1, z2, alpha):
    """Convex combination alpha*z1 + (1-alpha)*z2.

    alpha may be a scalar or a per-row column vector; every entry must lie
    in [0, 1].
    """
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if z1.shape != z2.shape:
        raise ValueError(f"shape mismatch: {z1.shape} vs {z2.shape}")
    a = np.asarray(alpha, dtype=z1.dtype)
    if a.ndim not in (0, 2):
        raise ValueError("alpha must be a scalar or a column vector")
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    return a * z1 + (1.0 - a) * z2


def _draw_pairing(rng, n, alpha_half):
    perm = rng.permutation(n)
    upper = 0.5 if alpha_half else 1.0
    alpha = rng.uniform(0.0, upper, size=(n, 1))
    return perm, alpha


def acai_autoencoder_loss(ae, critic, x, rng, interp_weight,
                          alpha_half=False):
    """Loss and (encoder, decoder) gradients for the autoencoder side.

    Pairs are formed by a random in-batch permutation (self-pairs are
    harmless: the interpolation degenerates to a reconstruction). Critic
    parameters receive no gradient.
    """
    x = np.asarray(x, dtype=ae.dtype)
    n = x.shape[0]
    if n < 2:
        raise ValueError("interpolation needs a batch of at least 2")
    perm, alpha = _draw_pairing(rng, n, alpha_half)
    alpha = alpha.astype(ae.dtype)

    z, enc_cache = mlp_forward(ae.encoder, x)
    xhat, dec_cache = mlp_forward(ae.decoder, z)
    value, dxhat = mse_loss(xhat, x)

    dec_grads, dz = mlp_backward(ae.decoder, dec_cache, dxhat)

    if interp_weight != 0.0:
        z_alpha = alpha * z + (1.0 - alpha) * z[perm]
        xhat_alpha, deci_cache = mlp_forward(ae.decoder, z_alpha)
        score, crit_cache = mlp_forward(critic.layers, xhat_alpha)
        term = float(np.sum(score * score, dtype=np.float64) / n)
        value += interp_weight * term

        dscore = (2.0 * interp_weight / n) * score
        _, dxhat_alpha = mlp_backward(critic.layers, crit_cache, dscore)
        deci_grads, dz_alpha = mlp_backward(ae.decoder, deci_cache,
                                            dxhat_alpha)
        add_grads(dec_grads, deci_grads)
        dz = dz + alpha * dz_alpha
        dz[perm] += (1.0 - alpha) * dz_alpha

    enc_grads, _ = mlp_backward(ae.encoder, enc_cache, dz)
    return value, enc_grads, dec_grads


def acai_critic_loss(ae, critic, x, rng, alpha_half=False):
    """Loss and critic gradients; autoencoder parameters held constant."""
    x = np.asarray(x, dtype=ae.dtype)
    n = x.shape[0]
    if n < 2:
        raise ValueError("interpolation needs a batch of at least 2")
    perm, alpha = _draw_pairing(rng, n, alpha_half)
    alpha = alpha.astype(ae.dtype)
    gamma = rng.uniform(0.0, 1.0, size=(n, 1)).astype(ae.dtype)

    z = ae.encode(x)
    xhat = ae.decode(z)
    xhat_alpha = ae.decode(alpha * z + (1.0 - alpha) * z[perm])
    mix = gamma * x + (1.0 - gamma) * xhat

    s1, cache1 = mlp_forward(critic.layers, xhat_alpha)
    s2, cache2 = mlp_forward(critic.layers, mix)
    r1 = s1 - alpha
    value = float(np.sum(r1 * r1, dtype=np.float64) / n
                  + np.sum(s2 * s2, dtype=np.float64) / n)

    grads, _ = mlp_backward(critic.layers, cache1, (2.0 / n) * r1)
    grads2, _ = mlp_backward(critic.layers, cache2, (2.0 / n) * s2)
    add_grads(grads, grads2)
    return value, grads
