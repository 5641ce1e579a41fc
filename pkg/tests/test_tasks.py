import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from huberfl.errors import ContractError
from huberfl.tasks import ClassifierTask, RegressionTask
from huberfl.tasks.classifier import (
    ClassifierDataset,
    MlpShape,
    MlpWeights,
    blobs_synthesize,
    classifier_metric,
    mlp_gradient,
    mlp_init,
    mlp_loss,
)
from huberfl.tasks.regression import (
    draw_perturbation,
    heterogeneous_targets,
    linreg_gradient,
    linreg_loss,
    linreg_resample,
    linreg_synthesize,
    linreg_true_gradient,
    regression_metric,
)


def central_diff(f, w, h=1e-5):
    g = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (f(w + e) - f(w - e)) / (2 * h)
    return g


class TestRegression:
    def test_shapes(self):
        ds = linreg_synthesize(4, 9, np.random.default_rng(0))
        assert ds.features.shape == (9, 4) and ds.targets.shape == (9,) and ds.true_weights.shape == (4,)

    def test_noiseless_targets_exact(self):
        ds = linreg_synthesize(5, 20, np.random.default_rng(1), noise_std=0.0)
        np.testing.assert_allclose(ds.targets, ds.features @ ds.true_weights, atol=1e-14)

    def test_fixed_true_weights(self):
        w = np.arange(3.0)
        ds = linreg_synthesize(3, 5, np.random.default_rng(2), true_weights=w)
        np.testing.assert_array_equal(ds.true_weights, w)

    def test_gradient_matches_finite_differences(self):
        ds = linreg_synthesize(6, 11, np.random.default_rng(3))
        w = np.random.default_rng(4).normal(size=6)
        fd = central_diff(lambda v: linreg_loss(v, ds), w)
        np.testing.assert_allclose(linreg_gradient(w, ds), fd, rtol=1e-6, atol=1e-9)

    def test_gradient_zero_at_least_squares(self):
        ds = linreg_synthesize(4, 30, np.random.default_rng(5))
        w_ls = np.linalg.lstsq(ds.features, ds.targets, rcond=None)[0]
        np.testing.assert_allclose(linreg_gradient(w_ls, ds), 0.0, atol=1e-12)

    def test_empirical_gradient_approaches_population(self):
        rng = np.random.default_rng(6)
        ds = linreg_synthesize(5, 1_000_000, rng)
        w = rng.normal(size=5)
        err = np.linalg.norm(linreg_gradient(w, ds) - linreg_true_gradient(w, ds))
        assert err < 5e-3 * (1 + np.linalg.norm(w - ds.true_weights))

    def test_rmse_noise_floor(self):
        rng = np.random.default_rng(7)
        ds = linreg_synthesize(10, 200_000, rng, noise_std=1.0)
        assert regression_metric(ds.true_weights, ds) == pytest.approx(1.0, abs=5e-3)

    def test_resample_keeps_model(self):
        rng = np.random.default_rng(8)
        ds = linreg_synthesize(3, 4, rng, noise_std=0.3)
        test = linreg_resample(ds, 7, rng)
        assert test.n == 7 and test.noise_std == 0.3
        np.testing.assert_array_equal(test.true_weights, ds.true_weights)

    def test_empty_shard_rejected(self):
        ds = linreg_synthesize(3, 4, np.random.default_rng(0))
        with pytest.raises(ContractError):
            linreg_gradient(np.zeros(3), ds.subset([]))

    def test_wrong_dimension_rejected(self):
        ds = linreg_synthesize(3, 4, np.random.default_rng(0))
        with pytest.raises(ContractError):
            linreg_gradient(np.zeros(4), ds)


class TestHeterogeneous:
    def test_zero_sigma_is_identity(self):
        rng = np.random.default_rng(0)
        ds = linreg_synthesize(4, 10, rng)
        pert = draw_perturbation(3, 4, 0.0, rng)
        out = heterogeneous_targets(ds, pert, np.arange(10) % 3)
        np.testing.assert_array_equal(out.targets, ds.targets)
        np.testing.assert_array_equal(out.true_weights, ds.true_weights)

    def test_targets_follow_client_model(self):
        rng = np.random.default_rng(1)
        ds = linreg_synthesize(4, 12, rng, noise_std=0.0)
        pert = draw_perturbation(3, 4, 0.2, rng)
        assign = np.arange(12) % 3
        out = heterogeneous_targets(ds, pert, assign)
        for j in range(12):
            w = ds.true_weights + pert.deltas[assign[j]]
            assert out.targets[j] == pytest.approx(ds.features[j] @ w, abs=1e-12)

    def test_pooled_minimizer(self):
        rng = np.random.default_rng(2)
        ds = linreg_synthesize(3, 9, rng)
        pert = draw_perturbation(2, 3, 0.5, rng)
        assign = np.array([0] * 6 + [1] * 3)
        out = heterogeneous_targets(ds, pert, assign)
        expected = ds.true_weights + (6 * pert.deltas[0] + 3 * pert.deltas[1]) / 9
        np.testing.assert_allclose(out.true_weights, expected, atol=1e-15)

    def test_perturbation_variance(self):
        pert = draw_perturbation(400, 500, 0.2, np.random.default_rng(3))
        assert pert.deltas.var() == pytest.approx(0.2, rel=0.02)

    def test_bad_assignment(self):
        rng = np.random.default_rng(4)
        ds = linreg_synthesize(2, 3, rng)
        pert = draw_perturbation(2, 2, 0.1, rng)
        with pytest.raises(ContractError):
            heterogeneous_targets(ds, pert, [0, 1, 2])
        with pytest.raises(ContractError):
            heterogeneous_targets(ds, pert, [0, 1])

    def test_negative_sigma(self):
        with pytest.raises(ContractError):
            draw_perturbation(2, 2, -0.1, np.random.default_rng(0))


def small_mlp(seed=0):
    rng = np.random.default_rng(seed)
    shape = MlpShape(6, 5, 4)
    w = mlp_init(shape, rng)
    w.b1[:] = rng.normal(scale=0.1, size=5)
    w.b2[:] = rng.normal(scale=0.1, size=4)
    data = ClassifierDataset(rng.uniform(size=(5, 6)), rng.integers(0, 4, size=5), 4)
    return shape, w, data


class TestMlp:
    def test_size(self):
        assert MlpShape(784, 32, 10).size == 784 * 32 + 32 + 32 * 10 + 10

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(2, 5))
    @settings(max_examples=30, deadline=None)
    def test_flatten_roundtrip(self, p, h, k):
        shape = MlpShape(p, h, k)
        flat = np.random.default_rng(p * 100 + h * 10 + k).normal(size=shape.size)
        w = MlpWeights.unflatten(flat, shape)
        np.testing.assert_array_equal(w.flatten(), flat)
        assert w.shape == shape

    def test_unflatten_wrong_length(self):
        with pytest.raises(ContractError):
            MlpWeights.unflatten(np.zeros(3), MlpShape(2, 2, 2))

    def test_init_statistics(self):
        w = mlp_init(MlpShape(400, 300, 10), np.random.default_rng(1))
        assert w.w1.std() == pytest.approx(1 / np.sqrt(400), rel=0.02)
        assert not w.b1.any() and not w.b2.any()

    def test_gradient_matches_finite_differences(self):
        shape, w, data = small_mlp()
        flat = w.flatten()
        fd = central_diff(lambda v: mlp_loss(MlpWeights.unflatten(v, shape), data), flat)
        g = mlp_gradient(w, data)
        assert g.shape == (shape.size,)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)

    def test_uniform_logits_loss(self):
        shape = MlpShape(3, 2, 4)
        w = MlpWeights.unflatten(np.zeros(shape.size), shape)
        data = ClassifierDataset(np.ones((2, 3)), np.array([0, 3]), 4)
        assert mlp_loss(w, data) == pytest.approx(np.log(4))

    def test_argmax_tie_goes_low(self):
        shape = MlpShape(2, 2, 3)
        w = MlpWeights.unflatten(np.zeros(shape.size), shape)
        data = ClassifierDataset(np.ones((3, 2)), np.array([0, 1, 2]), 3)
        assert classifier_metric(w, data) == pytest.approx(1 / 3)

    def test_random_weights_near_chance(self):
        rng = np.random.default_rng(2)
        data = blobs_synthesize(10, 5000, 64, 0.75, rng)
        w = mlp_init(MlpShape(64, 32, 10), rng)
        assert abs(classifier_metric(w, data) - 0.1) < 0.08


class TestBlobs:
    def test_range_and_labels(self):
        ds = blobs_synthesize(5, 300, 8, 0.75, np.random.default_rng(0))
        assert ds.images.min() >= 0 and ds.images.max() <= 1
        assert set(np.unique(ds.labels)) == set(range(5))

    def test_given_centers_zero_spread(self):
        centers = np.array([[0.2, 0.8], [0.5, 0.1]])
        ds = blobs_synthesize(2, 10, 2, 0.0, np.random.default_rng(1), centers=centers)
        np.testing.assert_array_equal(ds.images, centers[ds.labels])

    def test_bad_centers(self):
        with pytest.raises(ContractError):
            blobs_synthesize(2, 10, 2, 0.1, np.random.default_rng(1), centers=np.zeros((3, 2)))

    def test_bad_labels_rejected(self):
        with pytest.raises(ContractError):
            ClassifierDataset(np.zeros((2, 2)), np.array([0, 5]), 3)


class TestTaskAdapters:
    def test_regression_task(self):
        rng = np.random.default_rng(0)
        train = linreg_synthesize(3, 12, rng)
        task = RegressionTask(train, linreg_resample(train, 5, rng))
        w = rng.normal(size=3)
        shards = [np.arange(0, 4), np.arange(4, 12)]
        G = task.gradients(w, shards)
        assert G.shape == (2, 3)
        np.testing.assert_allclose(G[1], linreg_gradient(w, train.subset(shards[1])))
        np.testing.assert_array_equal(task.true_gradient(w), w - train.true_weights)

    def test_classifier_task(self):
        rng = np.random.default_rng(1)
        train = blobs_synthesize(3, 20, 4, 0.5, rng)
        task = ClassifierTask(train, blobs_synthesize(3, 10, 4, 0.5, rng), hidden=5)
        w = task.initial_weights(rng)
        assert w.shape == (MlpShape(4, 5, 3).size,)
        G = task.gradients(w, [np.arange(10), np.arange(10, 20)])
        assert G.shape == (2, w.size)
        assert task.true_gradient(w) is None
        assert 0 <= task.metric(w) <= 1
