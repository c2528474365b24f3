import numpy as np
import pytest
from sklearn.base import clone

from dyncluster.estimators import (DynamicAutoencoderClustering,
                                   InterpolationAutoencoder)

from test_clustering import blob_dataset


def small_kwargs(**kw):
    defaults = dict(hidden_dims=(16, 8), latent_dim=4, augment=False,
                    batch_size=32, random_state=0)
    defaults.update(kw)
    return defaults


class TestInterpolationAutoencoder:
    def test_get_set_params_roundtrip(self):
        est = InterpolationAutoencoder(iterations=50, latent_dim=4)
        params = est.get_params()
        assert params["iterations"] == 50
        est.set_params(iterations=75)
        assert est.iterations == 75

    def test_clone_compatible(self):
        est = InterpolationAutoencoder(**small_kwargs(iterations=20))
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_fit_transform_shapes(self):
        ds = blob_dataset(n=80)
        est = InterpolationAutoencoder(**small_kwargs(iterations=100,
                                                      learning_rate=1e-3))
        z = est.fit_transform(ds.X)
        assert z.shape == (80, 4)
        back = est.inverse_transform(z)
        assert back.shape == ds.X.shape

    def test_score_improves_with_training(self):
        ds = blob_dataset(n=80)
        short = InterpolationAutoencoder(**small_kwargs(iterations=5,
                                                        learning_rate=1e-3))
        longer = InterpolationAutoencoder(**small_kwargs(iterations=400,
                                                         learning_rate=1e-3))
        s_short = short.fit(ds.X).score(ds.X)
        s_long = longer.fit(ds.X).score(ds.X)
        assert s_long > s_short

    def test_rejects_out_of_range_input(self):
        est = InterpolationAutoencoder(**small_kwargs(iterations=5))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            est.fit(np.full((10, 16), 2.0))

    def test_non_square_needs_explicit_shape(self):
        est = InterpolationAutoencoder(iterations=5, hidden_dims=(8,),
                                       latent_dim=2, augment=True)
        with pytest.raises(ValueError, match="image_shape"):
            est.fit(np.random.default_rng(0).random((20, 10)))

    def test_determinism(self):
        ds = blob_dataset(n=60)
        a = InterpolationAutoencoder(**small_kwargs(iterations=50)).fit(ds.X)
        b = InterpolationAutoencoder(**small_kwargs(iterations=50)).fit(ds.X)
        np.testing.assert_array_equal(a.transform(ds.X), b.transform(ds.X))


class TestDynamicAutoencoderClustering:
    def make(self, **kw):
        defaults = dict(n_clusters=2, hidden_dims=(16, 8), latent_dim=4,
                        pretrain_iterations=150, pretrain_lr=1e-3,
                        batch_size=32, max_iter=300, conflict_eval_every=10,
                        augment=False, random_state=0)
        defaults.update(kw)
        return DynamicAutoencoderClustering(**defaults)

    def test_fit_predict_blobs(self):
        from dyncluster.metrics import acc

        ds = blob_dataset(n=150)
        est = self.make()
        labels = est.fit_predict(ds.X)
        assert labels.shape == (150,)
        assert acc(ds.labels, labels) == 1.0
        assert est.cluster_centers_.shape == (2, 4)
        assert est.tau_ <= est.n_iter_ * 0 + 1.0

    def test_predict_consistent_with_labels(self):
        ds = blob_dataset(n=100)
        est = self.make().fit(ds.X)
        np.testing.assert_array_equal(est.predict(ds.X), est.labels_)

    def test_transform_gives_latents(self):
        ds = blob_dataset(n=80)
        est = self.make().fit(ds.X)
        assert est.transform(ds.X).shape == (80, 4)

    def test_accepts_pretrained_frontend(self):
        ds = blob_dataset(n=100)
        pre = InterpolationAutoencoder(**small_kwargs(iterations=150,
                                                      learning_rate=1e-3))
        pre.fit(ds.X)
        est = self.make(pretrained=pre)
        est.fit(ds.X)
        assert est.labels_.shape == (100,)

    def test_pretrained_dimension_mismatch(self):
        ds = blob_dataset(n=60)
        pre = InterpolationAutoencoder(**small_kwargs(iterations=5))
        pre.fit(ds.X)
        est = self.make(pretrained=pre)
        with pytest.raises(ValueError, match="d="):
            est.fit(np.random.default_rng(0).random((30, 9)))

    def test_clone_compatible(self):
        est = self.make()
        assert clone(est).get_params() == est.get_params()

    def test_gamma_parameter_passes_through(self):
        ds = blob_dataset(n=80)
        a = self.make().fit(ds.X)
        b = self.make(gamma=1.0).fit(ds.X)
        np.testing.assert_array_equal(a.labels_, b.labels_)
