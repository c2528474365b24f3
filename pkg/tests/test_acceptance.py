"""Acceptance suite: one test per criterion, printed as PASS/FAIL lines.

Run with ``pytest tests/test_acceptance.py -v -s``. The two experiment
criteria (6, 7) and the paired determinism rerun (10b) train on the
bundled 10k-digit dataset and take roughly an hour on two CPU cores;
deselect them with ``-m "not slow"`` during development.
"""

import itertools
import os
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from dyncluster.assign import kmeans, soft_assign, thresholds
from dyncluster.clustering import (ClusterConfig, dynamic_loss, escape_update,
                                   run_clustering)
from dyncluster.data import AugmentConfig, load_idx
from dyncluster.linalg import (finite_diff_gradient, grads_to_vector,
                               mlp_backward, mlp_forward, mse_loss)
from dyncluster.losses import acai_autoencoder_loss, acai_critic_loss
from dyncluster.metrics import acc, grad_cosine, hungarian, nmi
from dyncluster.models import load_checkpoint
from dyncluster.pretrain import PretrainConfig, run_pretraining

from conftest import (ae_params_vector, assert_grad_close, set_ae_params,
                      tiny_autoencoder, tiny_critic)
from test_clustering import blob_dataset, fresh_state, reference_dynamic_terms

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")
MNIST_IMAGES = os.path.join(DATA_DIR, "mnist10k-images-idx3-ubyte.gz")
MNIST_LABELS = os.path.join(DATA_DIR, "mnist10k-labels-idx1-ubyte.gz")

needs_digits = pytest.mark.skipif(
    not os.path.exists(MNIST_IMAGES),
    reason="bundled digit dataset missing; build it with "
           "scripts/mnist_json_to_idx.py",
)


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} {name}: FAIL")
        raise
    print(f"ACCEPTANCE {number} {name}: PASS")


def test_criterion_1_gradient_soundness():
    with criterion(1, "gradient soundness"):
        start = time.perf_counter()
        rng = np.random.default_rng(42)
        ae = tiny_autoencoder(seed=51)
        critic = tiny_critic(seed=52)
        n_params = ae_params_vector(ae).size
        assert n_params <= 1000
        x = rng.random((5, 6))

        # interpolation-regularized reconstruction loss
        def eq6(vec):
            set_ae_params(ae, vec)
            v, eg, dg = acai_autoencoder_loss(
                ae, critic, x, np.random.default_rng(7), 0.5)
            return v, np.concatenate([grads_to_vector(eg),
                                      grads_to_vector(dg)])

        vec = ae_params_vector(ae).copy()
        _, analytic = eq6(vec)
        numeric = finite_diff_gradient(lambda v: eq6(v)[0], vec, 1e-5)
        assert_grad_close(analytic, numeric, rtol=1e-4)
        set_ae_params(ae, vec)

        # critic regression loss
        from dyncluster.linalg import layers_to_vector, set_layers_from_vector

        def eq7(v):
            set_layers_from_vector(critic.layers, v)
            val, grads = acai_critic_loss(ae, critic, x,
                                          np.random.default_rng(9))
            return val, grads_to_vector(grads)

        cvec = layers_to_vector(critic.layers).copy()
        _, analytic = eq7(cvec)
        numeric = finite_diff_gradient(lambda v: eq7(v)[0], cvec, 1e-5)
        assert_grad_close(analytic, numeric, rtol=1e-4)
        set_layers_from_vector(critic.layers, cvec)

        # dynamic objective: split term and total
        x_clean = rng.random((4, 6))
        x_aug = rng.random((4, 6))
        state = fresh_state(ae, x_clean)
        state.conflict_mask[:] = [True, False, False, True]

        def eq9(vec):  # reconstruction-or-construction term alone
            set_ae_params(ae, vec)
            res = dynamic_loss(ae, np.arange(4), x_aug, state, gamma=0.0)
            return res.l1, np.concatenate([grads_to_vector(res.enc_grads),
                                           grads_to_vector(res.dec_grads)])

        _, analytic = eq9(vec)
        numeric = finite_diff_gradient(lambda v: eq9(v)[0], vec, 1e-5)
        assert_grad_close(analytic, numeric, rtol=1e-4)
        set_ae_params(ae, vec)

        def eq12(v):  # latent attraction term alone, assembled from parts
            set_ae_params(ae, v)
            res = dynamic_loss(ae, np.arange(4), x_aug, state)
            assign = state.assignments[np.arange(4)]
            z, cache = mlp_forward(ae.encoder, x_aug)
            unconf = ~state.conflict_mask[np.arange(4)]
            dz = np.zeros_like(z)
            dz[unconf] = (2.0 / 4) * (z[unconf]
                                      - state.centroids[assign[unconf]])
            enc_grads, _ = mlp_backward(ae.encoder, cache, dz)
            dec_zero = [(np.zeros_like(l.weights), np.zeros_like(l.bias))
                        for l in ae.decoder]
            return res.l2, np.concatenate([grads_to_vector(enc_grads),
                                           grads_to_vector(dec_zero)])

        _, analytic = eq12(vec)
        numeric = finite_diff_gradient(lambda v: eq12(v)[0], vec, 1e-5)
        assert_grad_close(analytic, numeric, rtol=1e-4)
        set_ae_params(ae, vec)

        def eq14(v):  # complete dynamic objective
            set_ae_params(ae, v)
            res = dynamic_loss(ae, np.arange(4), x_aug, state)
            return res.total, np.concatenate(
                [grads_to_vector(res.enc_grads),
                 grads_to_vector(res.dec_grads)])

        _, analytic = eq14(vec)
        numeric = finite_diff_gradient(lambda v: eq14(v)[0], vec, 1e-5)
        assert_grad_close(analytic, numeric, rtol=1e-4)
        set_ae_params(ae, vec)

        assert time.perf_counter() - start < 60


def test_criterion_2_assignment_kernel():
    with criterion(2, "assignment kernel"):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = rng.integers(1, 12)
            k = rng.integers(1, 8)
            p = rng.integers(1, 6)
            z = rng.standard_normal((n, p)) * rng.uniform(0.01, 100)
            mu = rng.standard_normal((k, p)) * rng.uniform(0.01, 100)
            dof = rng.uniform(0.1, 10.0)
            q = soft_assign(z, mu, dof)
            np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-9)

        q = soft_assign(np.array([[0.0, 0.0]]),
                        np.array([[1.0, 0.0], [2.0, 0.0]]), 1.0)
        assert abs(q[0, 0] - 5.0 / 7.0) < 1e-12


def test_criterion_3_matching_and_scores_vs_brute_force():
    with criterion(3, "matching and scores vs brute force"):
        start = time.perf_counter()
        rng = np.random.default_rng(11)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(k, 41))
            cost = rng.random((k, k)) * 10
            perm = hungarian(cost)
            best = min(float(cost[np.arange(k), p].sum())
                       for p in itertools.permutations(range(k)))
            assert float(cost[np.arange(k), perm].sum()) <= best + 1e-9

            y_true = rng.integers(0, k, size=n)
            y_pred = rng.integers(0, k, size=n)
            ids = range(k)
            brute_acc = max(
                sum(int(t == dict(zip(ids, p))[q])
                    for t, q in zip(y_true, y_pred))
                for p in itertools.permutations(ids)) / n
            assert abs(acc(y_true, y_pred) - brute_acc) < 1e-12

            # direct contingency-table formula
            p_tab = np.zeros((k, k))
            for t, q in zip(y_true, y_pred):
                p_tab[t, q] += 1.0 / n
            pi, pj = p_tab.sum(1), p_tab.sum(0)
            nz = p_tab > 0
            mi = float(np.sum(p_tab[nz] * np.log(
                p_tab[nz] / (pi[:, None] * pj[None, :])[nz])))
            ht = float(-np.sum(pi[pi > 0] * np.log(pi[pi > 0])))
            hp = float(-np.sum(pj[pj > 0] * np.log(pj[pj > 0])))
            expected = 0.0 if ht + hp == 0 else mi / (0.5 * (ht + hp))
            assert abs(nmi(y_true, y_pred) - expected) < 1e-12
        assert time.perf_counter() - start < 60


def test_criterion_4_dynamic_loss_partition_semantics():
    with criterion(4, "dynamic loss partition semantics"):
        rng = np.random.default_rng(13)
        ae = tiny_autoencoder(seed=53)
        for trial in range(30):
            x_clean = rng.random((6, 6))
            x_aug = rng.random((6, 6))
            state = fresh_state(ae, x_clean, seed=trial)
            state.conflict_mask = rng.random(6) < rng.uniform(0.2, 0.8)
            gamma = None if trial % 3 == 0 else float(rng.uniform(0.0, 2.0))
            res = dynamic_loss(ae, np.arange(6), x_aug, state, gamma=gamma)
            l1, l2, total = reference_dynamic_terms(
                ae, x_aug, state.conflict_mask, state.assignments, state,
                gamma)
            assert abs(res.l1 - l1) < 1e-12
            assert abs(res.l2 - l2) < 1e-12
            assert abs(res.total - total) < 1e-12

        # all-conflicted reduces to plain reconstruction error
        x = rng.random((5, 6))
        state = fresh_state(ae, x)
        state.conflict_mask[:] = True
        res = dynamic_loss(ae, np.arange(5), x, state)
        assert res.total == mse_loss(ae.reconstruct(x), x)[0]

        # gamma=1 is bit-identical to the gamma-absent path
        state.conflict_mask[:] = [True, False, True, False, False]
        a = dynamic_loss(ae, np.arange(5), x, state, gamma=None)
        b = dynamic_loss(ae, np.arange(5), x, state, gamma=1.0)
        assert a.total == b.total
        for (gw1, gb1), (gw2, gb2) in zip(a.enc_grads + a.dec_grads,
                                          b.enc_grads + b.dec_grads):
            assert (gw1 == gw2).all() and (gb1 == gb2).all()


def _blob_driver_run(seed):
    ds = blob_dataset(n=1000, d=10, sep_sigmas=10.0, seed=7)
    pcfg = PretrainConfig(iterations=400, adam_lr=1e-3, batch_size=256,
                          interp_weight=0.0,
                          augment=AugmentConfig(enabled=False),
                          hidden_dims=(64, 32), latent_dim=10, seed=seed,
                          checkpoint_every=0, log_every=10_000)
    ae = run_pretraining(ds, pcfg).ae
    ccfg = ClusterConfig(n_clusters=2, tol=1e-9, max_iter=2000,
                         batch_size=256, conflict_eval_every=50, seed=seed,
                         augment=AugmentConfig(enabled=False))
    result = run_clustering(ds, ae, ccfg)
    return ds, result


def test_criterion_5_driver_on_synthetic_blobs():
    with criterion(5, "driver on synthetic blobs"):
        from threadpoolctl import threadpool_limits

        start = time.perf_counter()
        with threadpool_limits(limits=1):
            ds, result = _blob_driver_run(seed=0)
        elapsed = time.perf_counter() - start
        assert result.final_tau == 0.0
        assert result.iterations <= 2000
        assert acc(ds.labels, result.assignments) == 1.0
        assert elapsed < 300, f"blob driver took {elapsed:.0f}s"


@pytest.fixture(scope="session")
def paired_experiment(tmp_path_factory):
    """Shared scaled experiment: one pretraining, baseline + dynamic run."""
    if not os.path.exists(MNIST_IMAGES):
        pytest.skip("bundled digit dataset missing")
    out = tmp_path_factory.mktemp("paired")
    ds = load_idx(MNIST_IMAGES, MNIST_LABELS)
    seed = 0

    pcfg = PretrainConfig(iterations=10_000, seed=seed, precision="f32",
                          checkpoint_every=2000, log_every=200)
    t0 = time.time()
    pre = run_pretraining(ds, pcfg, out_dir=str(out))
    pretrain_seconds = time.time() - t0

    ae64 = load_checkpoint(pre.checkpoint_path).ae.astype(np.float64)
    z = ae64.encode(ds.X)
    km_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[0])
    _, base_labels, _ = kmeans(z, 10, km_rng)
    baseline = {"acc": acc(ds.labels, base_labels),
                "nmi": nmi(ds.labels, base_labels)}

    # untrained reference for the pretraining-quality check
    from dyncluster.pretrain import build_models

    raw_ae, _ = build_models(
        pcfg, ds.d,
        np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[0]))
    hold = ds.X[:512]
    mse_untrained = mse_loss(raw_ae.astype(np.float64).reconstruct(hold),
                             hold)[0]
    mse_trained = mse_loss(ae64.reconstruct(hold), hold)[0]

    def cluster_run():
        ccfg = ClusterConfig(n_clusters=10, tol=0.01, max_iter=20_000,
                             conflict_eval_every=100, seed=seed,
                             augment=AugmentConfig())
        ae = load_checkpoint(pre.checkpoint_path).ae.astype(np.float64)
        return run_clustering(ds, ae, ccfg)

    t1 = time.time()
    run = cluster_run()
    cluster_seconds = time.time() - t1
    dynamic = {"acc": acc(ds.labels, run.assignments),
               "nmi": nmi(ds.labels, run.assignments)}
    print(f"\npaired experiment: baseline {baseline}, dynamic {dynamic}, "
          f"tau {run.initial_tau:.4f}->{run.final_tau:.4f}, "
          f"iters {run.iterations}, pretrain {pretrain_seconds:.0f}s, "
          f"cluster {cluster_seconds:.0f}s")
    return {"ds": ds, "baseline": baseline, "dynamic": dynamic, "run": run,
            "rerun": cluster_run, "mse_untrained": mse_untrained,
            "mse_trained": mse_trained}


@pytest.mark.slow
@needs_digits
def test_criterion_6_scaled_paired_experiment(paired_experiment):
    with criterion(6, "scaled paired experiment"):
        exp = paired_experiment
        # pretraining actually learned something
        assert exp["mse_trained"] * 10 <= exp["mse_untrained"]
        run = exp["run"]
        assert run.final_tau < run.initial_tau
        assert exp["dynamic"]["acc"] >= exp["baseline"]["acc"] + 0.05
        assert exp["dynamic"]["nmi"] >= exp["baseline"]["nmi"] + 0.05


@pytest.mark.slow
@needs_digits
def test_criterion_7_conflict_count_dynamics(paired_experiment):
    with criterion(7, "conflict count dynamics"):
        run = paired_experiment["run"]
        n = paired_experiment["ds"].n
        escape_iters = {e["iter"] for e in run.escapes}
        history = run.history
        assert len(history) >= 2
        for prev, cur in zip(history, history[1:]):
            if cur["iter"] in escape_iters:
                continue  # escape events reset the comparison
            assert cur["nb_conf"] - prev["nb_conf"] <= 0.01 * n
        before_first = [h for h in history
                        if not escape_iters or h["iter"] < min(escape_iters)]
        if len(before_first) >= 2:
            assert before_first[-1]["nb_conf"] < before_first[0]["nb_conf"]


def test_criterion_8_threshold_escape_arithmetic():
    with criterion(8, "threshold escape arithmetic"):
        kappa, beta1 = Fraction(3), Fraction(3, 10)
        kappas, betas = [], []
        for _ in range(3):
            drop = Fraction(3, 10) * kappa
            beta1 -= drop / 10
            kappa -= drop
            kappas.append(kappa)
            betas.append(beta1)
        assert kappas == [Fraction(21, 10), Fraction(147, 100),
                          Fraction(1029, 1000)]
        assert betas == [Fraction(21, 100), Fraction(147, 1000),
                         Fraction(1029, 10000)]

        rng = np.random.default_rng(0)
        z = rng.standard_normal((40, 3))
        x = rng.random((40, 6))
        ae = tiny_autoencoder()
        state = fresh_state(ae, x, k=2)
        # rebuild with the worked constants
        from dyncluster.assign import centroid_images as ci
        from dyncluster.clustering import ClusterState

        centroids, _, _ = kmeans(z, 10, rng)
        state = ClusterState(centroids=centroids, kernel_dof=1.0,
                             beta1=0.3, beta2=0.15, kappa=3.0,
                             kappa_drop_factor=0.3,
                             conflict_mask=np.zeros(40, dtype=bool), tau=0.0,
                             centroid_images=ci(centroids, z, x),
                             prev_conflict_count=40)
        for expected_kappa, expected_beta in zip(kappas, betas):
            escape_update(state, z, x, rng)
            assert abs(state.kappa - float(expected_kappa)) < 1e-12
            assert abs(state.beta1 - float(expected_beta)) < 1e-12


def test_criterion_9_diagnostics_well_formedness(rng):
    with criterion(9, "diagnostics well-formedness"):
        from dyncluster.metrics import cluster_to_class_map, delta_fd, delta_fr

        ae = tiny_autoencoder(seed=54)
        x = rng.random((12, 6))
        state = fresh_state(ae, x)
        assign = state.assignments

        # coinciding targets give exactly 1
        mapping, _ = cluster_to_class_map(assign, assign)
        got = delta_fr(ae, x, assign, np.zeros(12, dtype=bool), assign,
                       state, mapping)
        assert got == 1.0

        # bounded for arbitrary masks and labels
        for _ in range(20):
            mask = rng.random(12) < 0.5
            if not mask.any() or mask.all():
                continue
            val = delta_fd(ae, x, mask, assign, state)
            assert -1.0 <= val <= 1.0

        # cosine invariant under positive rescaling of either side
        g1 = rng.standard_normal(40)
        g2 = rng.standard_normal(40)
        base = grad_cosine(g1, g2)
        for s1, s2 in [(3.0, 1.0), (1.0, 0.01), (250.0, 7.5)]:
            assert abs(grad_cosine(s1 * g1, s2 * g2) - base) < 1e-12


def test_criterion_10a_blob_determinism(tmp_path):
    with criterion(10, "determinism (blob driver)"):
        files = []
        for run_dir in ("a", "b"):
            ds, result = _blob_driver_run(seed=5)
            path = tmp_path / f"assignments_{run_dir}.csv"
            path.write_bytes("".join(
                f"{i},{c}\n" for i, c in
                enumerate(result.assignments)).encode())
            files.append(path.read_bytes())
        assert files[0] == files[1]


@pytest.mark.slow
@needs_digits
def test_criterion_10b_paired_experiment_determinism(paired_experiment):
    with criterion(10, "determinism (scaled experiment rerun)"):
        exp = paired_experiment
        rerun = exp["rerun"]()
        first = "".join(f"{i},{c}\n"
                        for i, c in enumerate(exp["run"].assignments))
        second = "".join(f"{i},{c}\n"
                         for i, c in enumerate(rerun.assignments))
        assert first == second
        assert rerun.iterations == exp["run"].iterations
