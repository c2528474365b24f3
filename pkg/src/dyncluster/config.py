"""Run configuration: defaults, flat key=value config files, CLI overrides.

Precedence is command-line flags over file values over built-in defaults.
Config files hold one ``key = value`` pair per line; ``#`` starts a
comment. Booleans accept true/false, lists are comma-separated, and
``none`` clears an optional value.
"""

import hashlib
from dataclasses import dataclass, fields

from .data import AugmentConfig
from .clustering import ClusterConfig
from .pretrain import PretrainConfig


@dataclass
class RunConfig:
    # shared
    seed: int = 0
    precision: str = "f64"
    out: str = "runs"
    data: str | None = None
    labels: str | None = None
    checkpoint: str | None = None
    # architecture
    hidden_dims: tuple = (500, 500, 2000)
    latent_dim: int = 10
    # augmentation
    augment_enabled: bool = True
    max_shift_fraction: float = 0.1
    max_rotation_degrees: float = 10.0
    # pretraining
    pretrain_iterations: int = 130_000
    pretrain_lr: float = 1e-4
    batch_size: int = 256
    interp_weight: float = 0.5
    alpha_half: bool = False
    critic_same_batch: bool = True
    checkpoint_every: int = 10_000
    log_every: int = 100
    # clustering
    n_clusters: int = 10
    tol: float = 0.01
    max_iter: int = 100_000
    kappa_init_factor: float = 0.3
    kappa_drop_factor: float = 0.3
    cluster_lr: float = 0.001
    momentum: float = 0.9
    conflict_eval_every: int = 100
    gamma: float | None = None
    kernel_dof: float = 1.0
    literal_kappa_reset: bool = False
    diag_batch_size: int = 256

    def augment_config(self):
        return AugmentConfig(self.max_shift_fraction,
                             self.max_rotation_degrees,
                             self.augment_enabled)

    def pretrain_config(self):
        return PretrainConfig(
            iterations=self.pretrain_iterations,
            adam_lr=self.pretrain_lr,
            batch_size=self.batch_size,
            interp_weight=self.interp_weight,
            alpha_half=self.alpha_half,
            critic_same_batch=self.critic_same_batch,
            augment=self.augment_config(),
            hidden_dims=tuple(self.hidden_dims),
            latent_dim=self.latent_dim,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every,
            log_every=self.log_every,
            precision=self.precision,
        )

    def cluster_config(self):
        return ClusterConfig(
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
            seed=self.seed,
            augment=self.augment_config(),
            literal_kappa_reset=self.literal_kappa_reset,
            diag_batch_size=self.diag_batch_size,
        )

    def hash(self):
        text = "\n".join(f"{k}={getattr(self, k)}"
                         for k in sorted(f.name for f in fields(self)))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse_bool(s):
    low = s.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_optional_float(s):
    return None if s.lower() in ("none", "") else float(s)


def _parse_optional_str(s):
    return None if s.lower() == "none" else s


def _parse_dims(s):
    return tuple(int(p) for p in s.split(",") if p.strip())


_PARSERS = {
    "seed": int, "precision": str, "out": str,
    "data": _parse_optional_str, "labels": _parse_optional_str,
    "checkpoint": _parse_optional_str,
    "hidden_dims": _parse_dims, "latent_dim": int,
    "augment_enabled": _parse_bool, "max_shift_fraction": float,
    "max_rotation_degrees": float,
    "pretrain_iterations": int, "pretrain_lr": float, "batch_size": int,
    "interp_weight": float, "alpha_half": _parse_bool,
    "critic_same_batch": _parse_bool, "checkpoint_every": int,
    "log_every": int,
    "n_clusters": int, "tol": float, "max_iter": int,
    "kappa_init_factor": float, "kappa_drop_factor": float,
    "cluster_lr": float, "momentum": float, "conflict_eval_every": int,
    "gamma": _parse_optional_float, "kernel_dof": float,
    "literal_kappa_reset": _parse_bool, "diag_batch_size": int,
}


class ConfigError(ValueError):
    pass


def parse_config_file(path):
    """Read a flat key=value file into a dict of typed values."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _PARSERS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _PARSERS[key](val)
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {e}")
    return values


def resolve_config(file_path=None, overrides=None):
    """Apply precedence: flags > config file > defaults."""
    merged = {}
    if file_path is not None:
        merged.update(parse_config_file(file_path))
    for key, val in (overrides or {}).items():
        if val is not None:
            if key not in _PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = val
    try:
        return RunConfig(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))
