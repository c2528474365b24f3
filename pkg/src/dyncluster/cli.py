"""Command-line surface: pretrain, cluster, eval, diagnose.

Exit codes: 0 success, 2 usage/configuration problems, 3 numeric failure
during training.
"""

import argparse
import math
import os
import sys

import numpy as np

from .assign import soft_assign
from .clustering import init_cluster_state, run_clustering
from .config import ConfigError, resolve_config
from .data import (Dataset, FormatError, _parse_idx, _read_bytes, load_idx,
                   load_usps)
from .linalg import NumericError
from .metrics import (DiagnosticUnavailable, acc, cluster_to_class_map,
                      delta_fd, delta_fr, diagnostic_snapshots, nmi, pca2d)
from .models import (architecture_hash, atomic_write_bytes, load_checkpoint,
                     save_checkpoint)
from .pretrain import run_pretraining
from .validation import as_label_vector

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _load_dataset(cfg):
    if cfg.data is None:
        raise ConfigError("no dataset given (use --data or the config file)")
    if not os.path.exists(cfg.data):
        raise ConfigError(f"dataset not found: {cfg.data}")
    if cfg.labels is not None and not os.path.exists(cfg.labels):
        raise ConfigError(f"labels not found: {cfg.labels}")
    try:
        with open(cfg.data, "rb") as f:
            head = f.read(4)
        if head[:4] == b"USPS":
            ds = load_usps(cfg.data)
            if cfg.labels is not None:
                labels = as_label_vector(_read_labels(cfg.labels), n=ds.n)
                ds = Dataset(ds.X, labels, ds.image_shape, ds.name)
            return ds
        return load_idx(cfg.data, cfg.labels)
    except (FormatError, OSError, ValueError) as e:
        raise ConfigError(str(e))


def _read_labels(path):
    """Labels from an IDX label file or a plain one-integer-per-line file."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head[:2] == b"\x1f\x8b" or head == b"\x00\x00\x08\x01":
        _, _, raw = _parse_idx(_read_bytes(path), path)
        return raw.astype(np.int64)
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


def _write_text_atomic(path, text):
    atomic_write_bytes(path, text.encode())


def cmd_pretrain(args):
    cfg = resolve_config(args.config, _overrides(args))
    ds = _load_dataset(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    result = run_pretraining(ds, cfg.pretrain_config(), out_dir=cfg.out,
                             config_hash=cfg.hash())
    print(f"checkpoint written to {result.checkpoint_path}")
    return EXIT_OK


def cmd_cluster(args):
    cfg = resolve_config(args.config, _overrides(args))
    ds = _load_dataset(cfg)
    if cfg.checkpoint is None:
        raise ConfigError("cluster needs --checkpoint")
    bundle = load_checkpoint(cfg.checkpoint)
    expected = _expected_arch_hash(cfg, ds.d)
    found = architecture_hash(bundle.ae)
    if found != expected:
        raise ConfigError(
            f"checkpoint architecture {found} does not match the "
            f"configured architecture {expected}"
        )
    ae = bundle.ae.astype(
        np.float32 if cfg.precision == "f32" else np.float64)
    os.makedirs(cfg.out, exist_ok=True)
    ccfg = cfg.cluster_config()

    def abort_checkpoint(model, state, iteration):
        _save_state(os.path.join(cfg.out, "cluster_state.npz"), model, state,
                    iteration, cfg)

    log = open(os.path.join(cfg.out, "cluster_log.csv"), "w")
    events = open(os.path.join(cfg.out, "events.csv"), "w")
    diag = None
    if ds.labels is not None:
        diag = open(os.path.join(cfg.out, "diagnostics.csv"), "w")
    try:
        result = run_clustering(ds, ae, ccfg, log_file=log, event_file=events,
                                diag_file=diag,
                                on_abort_checkpoint=abort_checkpoint)
    finally:
        log.close()
        events.close()
        if diag:
            diag.close()

    lines = "".join(f"{i},{c}\n" for i, c in enumerate(result.assignments))
    _write_text_atomic(os.path.join(cfg.out, "assignments.csv"), lines)
    _save_state(os.path.join(cfg.out, "cluster_state.npz"), ae, result.state,
                result.iterations, cfg)
    print(f"finished after {result.iterations} iterations, "
          f"tau {result.final_tau:.4f}")
    return EXIT_OK


def _expected_arch_hash(cfg, d):
    import numpy as _np

    from .models import Autoencoder

    probe = Autoencoder.build(_np.random.default_rng(0), d,
                              tuple(cfg.hidden_dims), cfg.latent_dim)
    return architecture_hash(probe)


def _save_state(path, ae, state, iteration, cfg):
    save_checkpoint(
        path, ae,
        iteration=iteration,
        config_hash=cfg.hash(),
        extra_arrays={
            "cluster/centroids": state.centroids,
            "cluster/conflict_mask": state.conflict_mask,
            "cluster/centroid_images": state.centroid_images,
        },
        extra_meta={"cluster_state": {
            "beta1": state.beta1, "beta2": state.beta2,
            "kappa": state.kappa,
            "kappa_drop_factor": state.kappa_drop_factor,
            "kernel_dof": state.kernel_dof, "tau": state.tau,
            "prev_conflict_count": state.prev_conflict_count,
        }},
    )


def _load_state(bundle):
    from .clustering import ClusterState

    meta = bundle.meta["cluster_state"]
    return ClusterState(
        centroids=bundle.arrays["cluster/centroids"],
        kernel_dof=meta["kernel_dof"],
        beta1=meta["beta1"],
        beta2=meta["beta2"],
        kappa=meta["kappa"],
        kappa_drop_factor=meta["kappa_drop_factor"],
        conflict_mask=bundle.arrays["cluster/conflict_mask"].astype(bool),
        tau=meta["tau"],
        centroid_images=bundle.arrays["cluster/centroid_images"],
        prev_conflict_count=meta["prev_conflict_count"],
    )


def cmd_eval(args):
    if not os.path.exists(args.assignments):
        print(f"assignments not found: {args.assignments}", file=sys.stderr)
        return EXIT_USAGE
    try:
        pairs = np.loadtxt(args.assignments, delimiter=",", dtype=np.int64,
                           ndmin=2)
        y_pred = pairs[np.argsort(pairs[:, 0]), 1]
        y_true = _read_labels(args.labels)
        if len(y_true) != len(y_pred):
            print(f"length mismatch: {len(y_pred)} assignments vs "
                  f"{len(y_true)} labels", file=sys.stderr)
            return EXIT_USAGE
        a = acc(y_true, y_pred)
        n = nmi(y_true, y_pred)
    except (OSError, ValueError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    print(f"ACC {a:.4f}")
    print(f"NMI {n:.4f}")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    _write_text_atomic(os.path.join(out, "metrics.csv"),
                       f"acc,nmi\n{a:.4f},{n:.4f}\n")
    return EXIT_OK


def cmd_diagnose(args):
    cfg = resolve_config(args.config, _overrides(args))
    ds = _load_dataset(cfg)
    if cfg.checkpoint is None:
        raise ConfigError("diagnose needs --checkpoint")
    bundle = load_checkpoint(cfg.checkpoint)
    ae = bundle.ae.astype(
        np.float32 if cfg.precision == "f32" else np.float64)
    os.makedirs(cfg.out, exist_ok=True)

    z = ae.encode(np.asarray(ds.X, dtype=ae.dtype))
    coords = pca2d(z)
    _write_text_atomic(
        os.path.join(cfg.out, "pca.csv"),
        "".join(f"{a:.9f},{b:.9f}\n" for a, b in coords),
    )
    if ds.labels is None:
        return EXIT_OK

    if "cluster_state" in bundle.meta:
        state = _load_state(bundle)
    else:
        rng = np.random.default_rng(cfg.seed)
        state, _ = init_cluster_state(ae, np.asarray(ds.X, dtype=ae.dtype),
                                      cfg.cluster_config(), rng)
    q = soft_assign(z, state.centroids, state.kernel_dof)
    hard = q.argmax(axis=1)
    mapping, _ = cluster_to_class_map(ds.labels, hard)
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(ds.n, size=min(cfg.diag_batch_size, ds.n),
                     replace=False)
    x_batch = np.asarray(ds.X, dtype=ae.dtype)[idx]
    try:
        dfr = delta_fr(ae, x_batch, ds.labels[idx],
                       state.conflict_mask[idx], hard[idx], state, mapping)
    except DiagnosticUnavailable:
        dfr = math.nan
    try:
        dfd = delta_fd(ae, x_batch, state.conflict_mask[idx], hard[idx],
                       state)
    except DiagnosticUnavailable:
        dfd = math.nan
    _write_text_atomic(
        os.path.join(cfg.out, "diagnostics.csv"),
        f"iter,delta_fr,delta_fd\n{bundle.iteration},{dfr:.6f},{dfd:.6f}\n",
    )
    snaps = diagnostic_snapshots(ae, x_batch, state.conflict_mask[idx],
                                 hard[idx], state, ds.labels[idx], mapping)
    if snaps:
        import io

        buf = io.BytesIO()
        np.savez(buf, **snaps)
        atomic_write_bytes(os.path.join(cfg.out, "gradient_snapshots.npz"),
                           buf.getvalue())
    return EXIT_OK


def _overrides(args):
    keys = ("data", "labels", "out", "seed", "checkpoint", "gamma",
            "precision")
    return {k: getattr(args, k, None) for k in keys}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dyncluster",
        description="Autoencoder clustering with a dynamic "
                    "reconstruction-to-construction objective",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--data", help="dataset file (IDX or USPS container)")
        p.add_argument("--labels", help="label file (IDX or text)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--checkpoint", help="checkpoint to load")
        p.add_argument("--gamma", type=float,
                       help="balance weight for the attraction term")
        p.add_argument("--precision", choices=("f32", "f64"))

    p = sub.add_parser("pretrain", help="adversarial autoencoder pretraining")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("cluster", help="dynamic clustering from a checkpoint")
    common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="score an assignments file against labels")
    p.add_argument("assignments", help="index,cluster CSV")
    p.add_argument("labels", help="label file (IDX or text)")
    p.add_argument("--out", help="directory for metrics.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose",
                       help="PCA projection and gradient diagnostics")
    common(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
