#!/usr/bin/env python3
"""Paired desk-scale experiment on the bundled 10k-digit dataset.

Pretrains once, records the autoencoder+K-Means baseline, then runs the
dynamic clustering phase from the same checkpoint and reports both scores.

Usage: desk_experiment.py OUT_DIR [PRETRAIN_ITERS] [MAX_CLUSTER_ITERS] [SEED]
"""

import json
import os
import sys
import time

import numpy as np

from dyncluster.assign import kmeans
from dyncluster.clustering import ClusterConfig, run_clustering
from dyncluster.data import AugmentConfig, load_idx
from dyncluster.metrics import acc, nmi
from dyncluster.models import load_checkpoint
from dyncluster.pretrain import PretrainConfig, run_pretraining

DATA = os.path.join(os.path.dirname(__file__), "..", "data")


def main(out_dir, pre_iters=10000, max_iters=20000, seed=0):
    os.makedirs(out_dir, exist_ok=True)
    ds = load_idx(os.path.join(DATA, "mnist10k-images-idx3-ubyte.gz"),
                  os.path.join(DATA, "mnist10k-labels-idx1-ubyte.gz"))
    print(f"dataset: {ds.n} x {ds.d}, {ds.n_classes} classes", flush=True)

    t0 = time.time()
    pcfg = PretrainConfig(iterations=pre_iters, seed=seed,
                          checkpoint_every=1000, log_every=100,
                          precision="f32")
    ckpt = os.path.join(out_dir, "pretrain.npz")
    if os.path.exists(ckpt):
        done = load_checkpoint(ckpt).iteration
        print(f"resuming pretrain from iteration {done}", flush=True)
        result = run_pretraining(ds, pcfg, out_dir=out_dir, resume=ckpt) \
            if done < pre_iters else None
        ae = load_checkpoint(ckpt).ae
    else:
        result = run_pretraining(ds, pcfg, out_dir=out_dir)
        ae = result.ae
    print(f"pretrain done in {time.time() - t0:.0f}s", flush=True)
    ae = ae.astype(np.float64)

    # baseline: K-Means on the pretrained embeddings
    z = ae.encode(ds.X)
    base_rng = np.random.default_rng(
        np.random.SeedSequence(seed).spawn(4)[0])
    _, base_labels, _ = kmeans(z, 10, base_rng)
    base = {"acc": acc(ds.labels, base_labels),
            "nmi": nmi(ds.labels, base_labels)}
    print(f"baseline AE+KMeans: ACC {base['acc']:.4f} "
          f"NMI {base['nmi']:.4f}", flush=True)
    del z

    t1 = time.time()
    ccfg = ClusterConfig(n_clusters=10, tol=0.01, max_iter=max_iters,
                         conflict_eval_every=100, seed=seed,
                         augment=AugmentConfig())
    cluster_ae = load_checkpoint(ckpt).ae.astype(np.float64)
    with open(os.path.join(out_dir, "cluster_log.csv"), "w") as log, \
            open(os.path.join(out_dir, "events.csv"), "w") as events, \
            open(os.path.join(out_dir, "diagnostics.csv"), "w") as diag:
        run = run_clustering(ds, cluster_ae, ccfg, log_file=log,
                             event_file=events, diag_file=diag)
    dyn = {"acc": acc(ds.labels, run.assignments),
           "nmi": nmi(ds.labels, run.assignments)}
    print(f"clustering done in {time.time() - t1:.0f}s "
          f"after {run.iterations} iterations", flush=True)
    print(f"tau: {run.initial_tau:.4f} -> {run.final_tau:.4f}", flush=True)
    print(f"dynamic: ACC {dyn['acc']:.4f} NMI {dyn['nmi']:.4f}", flush=True)
    print(f"gaps: ACC +{dyn['acc'] - base['acc']:.4f} "
          f"NMI +{dyn['nmi'] - base['nmi']:.4f}", flush=True)

    summary = {"pretrain_iters": pre_iters, "seed": seed,
               "baseline": base, "dynamic": dyn,
               "tau_init": run.initial_tau, "tau_final": run.final_tau,
               "iterations": run.iterations,
               "escapes": run.escapes,
               "seconds_total": time.time() - t0}
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    np.savetxt(os.path.join(out_dir, "assignments.csv"),
               np.c_[np.arange(ds.n), run.assignments], fmt="%d",
               delimiter=",")


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "/tmp/desk_run"
    pre = int(sys.argv[2]) if len(sys.argv) > 2 else 10000
    mx = int(sys.argv[3]) if len(sys.argv) > 3 else 20000
    seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0
    main(out, pre, mx, seed)
