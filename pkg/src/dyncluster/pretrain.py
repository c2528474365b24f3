"""Phase-1 driver: adversarial autoencoder/critic pretraining.

Each step augments one batch, updates the autoencoder against the
interpolation-regularized reconstruction loss, then updates the critic
on the same augmented batch (config-selectable to use a fresh batch).
Checkpoints capture models, optimizer buffers, and all RNG streams, so a
resumed run reproduces the uninterrupted trajectory bit for bit in
64-bit mode.
"""

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .data import AugmentConfig, augment
from .linalg import NumericError
from .losses import acai_autoencoder_loss, acai_critic_loss
from .models import (Autoencoder, Critic, load_checkpoint, restore_rng,
                     save_checkpoint)
from .optim import Adam


@dataclass
class PretrainConfig:
    iterations: int = 130_000
    adam_lr: float = 1e-4
    batch_size: int = 256
    interp_weight: float = 0.5
    alpha_half: bool = False
    critic_same_batch: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    hidden_dims: tuple = (500, 500, 2000)
    latent_dim: int = 10
    seed: int = 0
    checkpoint_every: int = 10_000
    log_every: int = 100
    precision: str = "f64"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.adam_lr <= 0:
            raise ValueError("adam_lr must be positive")
        if self.precision not in ("f32", "f64"):
            raise ValueError("precision must be f32 or f64")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


LOG_HEADER = "iter,l_fg,l_c,seconds"


def build_models(cfg, d, rng):
    ae = Autoencoder.build(rng, d, cfg.hidden_dims, cfg.latent_dim, cfg.dtype)
    critic = Critic.build(rng, d, cfg.hidden_dims, cfg.dtype)
    return ae, critic


def pretrain_step(ae, critic, ae_opt, critic_opt, batch, image_shape, cfg,
                  aug_rng, pair_rng, extra_batch=None):
    """One autoencoder update followed by one critic update.

    Returns the two loss values. The autoencoder update strictly precedes
    the critic update; the critic therefore scores interpolations decoded
    by the freshly updated autoencoder.
    """
    x_aug = augment(batch, image_shape, cfg.augment, aug_rng)
    l_fg, enc_grads, dec_grads = acai_autoencoder_loss(
        ae, critic, x_aug, pair_rng, cfg.interp_weight, cfg.alpha_half)
    ae_opt.step(ae.parameters(),
                [g for pair in enc_grads + dec_grads for g in pair])

    x_c = x_aug
    if not cfg.critic_same_batch:
        if extra_batch is None:
            raise ValueError("alternate-batch mode needs a second batch")
        x_c = augment(extra_batch, image_shape, cfg.augment, aug_rng)
    l_c, critic_grads = acai_critic_loss(ae, critic, x_c, pair_rng,
                                         cfg.alpha_half)
    critic_opt.step(critic.parameters(),
                    [g for pair in critic_grads for g in pair])
    return l_fg, l_c


class _Batcher:
    """Epoch-shuffled batches with checkpointable position."""

    def __init__(self, n, batch_size, rng, perm=None, pos=None):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.perm = rng.permutation(n) if perm is None else perm
        self.pos = 0 if pos is None else pos

    def next(self):
        if self.pos >= self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


@dataclass
class PretrainResult:
    ae: Autoencoder
    critic: Critic
    checkpoint_path: str | None
    iterations: int


def run_pretraining(ds, cfg, out_dir=None, resume=None, config_hash=""):
    """Run cfg.iterations adversarial steps, checkpointing periodically.

    With an out_dir, writes ``pretrain.npz`` (atomic) plus a streamed
    ``pretrain_log.csv``; aborts on a non-finite loss with the last
    checkpoint preserved. Returns the trained models.
    """
    x = np.asarray(ds.X, dtype=cfg.dtype)
    n, d = x.shape

    ckpt_path = log_path = None
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_path = os.path.join(out_dir, "pretrain.npz")
        log_path = os.path.join(out_dir, "pretrain_log.csv")

    if resume is not None:
        bundle = load_checkpoint(resume)
        ae, critic = bundle.ae, bundle.critic
        ae_opt = bundle.optimizers["ae"]
        critic_opt = bundle.optimizers["critic"]
        start = bundle.iteration
        aug_rng = restore_rng(bundle.rng_states["augment"])
        pair_rng = restore_rng(bundle.rng_states["pair"])
        batch_rng = restore_rng(bundle.rng_states["batch"])
        batcher = _Batcher(n, cfg.batch_size, batch_rng,
                           perm=bundle.arrays["batch/perm"],
                           pos=int(bundle.meta["batch_pos"]))
        log_fh = open(log_path, "a") if log_path else None
    else:
        root = np.random.SeedSequence(cfg.seed)
        init_seq, aug_seq, pair_seq, batch_seq = root.spawn(4)
        ae, critic = build_models(cfg, d, np.random.default_rng(init_seq))
        aug_rng = np.random.default_rng(aug_seq)
        pair_rng = np.random.default_rng(pair_seq)
        batch_rng = np.random.default_rng(batch_seq)
        ae_opt = Adam(cfg.adam_lr)
        critic_opt = Adam(cfg.adam_lr)
        start = 0
        batcher = _Batcher(n, cfg.batch_size, batch_rng)
        if log_path:
            log_fh = open(log_path, "w")
            log_fh.write(LOG_HEADER + "\n")
            log_fh.flush()

    def save(iteration):
        if ckpt_path is None:
            return None
        return save_checkpoint(
            ckpt_path, ae, critic,
            optimizers={"ae": ae_opt, "critic": critic_opt},
            rng_states={
                "augment": aug_rng.bit_generator.state,
                "pair": pair_rng.bit_generator.state,
                "batch": batcher.rng.bit_generator.state,
            },
            iteration=iteration,
            config_hash=config_hash,
            extra_arrays={"batch/perm": batcher.perm},
            extra_meta={"batch_pos": batcher.pos, "dataset": ds.name},
        )

    t0 = time.perf_counter()
    try:
        for it in range(start + 1, cfg.iterations + 1):
            idx = batcher.next()
            extra = None
            if not cfg.critic_same_batch:
                extra = x[batcher.next()]
            l_fg, l_c = pretrain_step(ae, critic, ae_opt, critic_opt, x[idx],
                                      ds.image_shape, cfg, aug_rng, pair_rng,
                                      extra_batch=extra)
            if not (math.isfinite(l_fg) and math.isfinite(l_c)):
                raise NumericError(
                    f"non-finite pretraining loss at iteration {it}"
                )
            if log_fh and it % cfg.log_every == 0:
                log_fh.write(f"{it},{l_fg:.6f},{l_c:.6f},"
                             f"{time.perf_counter() - t0:.3f}\n")
                log_fh.flush()
            if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                save(it)
        reached = max(start, cfg.iterations)
        path = save(reached)
    finally:
        if log_fh:
            log_fh.close()
    return PretrainResult(ae, critic, path, reached)
