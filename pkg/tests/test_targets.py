"""Analytic targets, dataset I/O, and gradient estimator consistency."""

import itertools

import numpy as np
import pytest

from atmc import BayesLinRegTarget, GaussianTarget, load_dataset, save_dataset, two_moons
from atmc.errors import ConfigError


class TestGaussianTarget:
    def test_gradient_vanishes_at_mean(self):
        target = GaussianTarget(np.array([1.0, -2.0]), np.array([0.5, 3.0]))
        np.testing.assert_array_equal(target.full_gradient(target.mean), 0.0)

    def test_log_joint_maximized_at_mean(self):
        rng = np.random.default_rng(0)
        target = GaussianTarget(np.array([0.3]), np.array([2.0]))
        peak = target.log_joint(target.mean)
        for _ in range(50):
            assert target.log_joint(target.mean + rng.standard_normal(1)) <= peak

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        target = GaussianTarget(rng.standard_normal(4), rng.uniform(0.5, 2.0, 4))
        theta = rng.standard_normal(4)
        grad = target.full_gradient(theta)
        eps = 1e-6
        for i in range(4):
            e = np.zeros(4)
            e[i] = eps
            fd = (-target.log_joint(theta + e) + target.log_joint(theta - e)) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_variance_must_be_positive(self):
        with pytest.raises(ConfigError):
            GaussianTarget(np.zeros(2), np.array([1.0, 0.0]))


class TestBayesLinRegTarget:
    @staticmethod
    def make(n=12, d=3, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, d))
        y = x @ rng.standard_normal(d) + 0.1 * rng.standard_normal(n)
        return BayesLinRegTarget(x, y, noise_variance=0.5, prior_variance=2.0)

    def test_full_batch_equals_full_gradient(self):
        target = self.make()
        rng = np.random.default_rng(2)
        theta = rng.standard_normal(target.dim)
        np.testing.assert_allclose(
            target.minibatch_gradient(theta, np.arange(target.n_examples)),
            target.full_gradient(theta),
            rtol=1e-10,
        )

    def test_minibatch_unbiased_by_enumeration(self):
        # all (6 choose 3) equally likely index sets average to the full gradient
        target = self.make(n=6, d=2, seed=3)
        rng = np.random.default_rng(4)
        theta = rng.standard_normal(2)
        batches = list(itertools.combinations(range(6), 3))
        mean_grad = np.mean(
            [target.minibatch_gradient(theta, np.array(b)) for b in batches], axis=0
        )
        np.testing.assert_allclose(mean_grad, target.full_gradient(theta), atol=1e-9)

    def test_gradient_matches_finite_differences(self):
        target = self.make()
        rng = np.random.default_rng(5)
        theta = rng.standard_normal(target.dim)
        grad = target.full_gradient(theta)
        eps = 1e-6
        for i in range(target.dim):
            e = np.zeros(target.dim)
            e[i] = eps
            fd = (-target.log_joint(theta + e) + target.log_joint(theta - e)) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-6)

    def test_shape_validation(self):
        with pytest.raises(ConfigError):
            BayesLinRegTarget(np.zeros((5, 2)), np.zeros(4), 1.0, 1.0)


class TestDatasetIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((20, 3))
        y = rng.integers(0, 4, 20)
        path = tmp_path / "data.csv"
        save_dataset(path, x, y)
        x2, y2 = load_dataset(path, n_features=3)
        np.testing.assert_array_equal(x, x2)
        np.testing.assert_array_equal(y, y2)

    def test_whitespace_delimiter(self, tmp_path):
        path = tmp_path / "data.txt"
        path.write_text("0.5 1.5 0\n-0.25 0.75 1\n")
        x, y = load_dataset(path)
        assert x.shape == (2, 2)
        np.testing.assert_array_equal(y, [0, 1])

    def test_column_count_validated(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1.0,2.0,0\n")
        with pytest.raises(ConfigError):
            load_dataset(path, n_features=5)

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1.0,2.0,0\n1.0,1\n")
        with pytest.raises(ConfigError):
            load_dataset(path)

    def test_non_integer_labels_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1.0,0.5\n")
        with pytest.raises(ConfigError):
            load_dataset(path)


class TestTwoMoons:
    def test_shapes_and_labels(self):
        x, y = two_moons(101, rng=7)
        assert x.shape == (101, 2)
        assert set(np.unique(y)) == {0, 1}
        assert abs(int(np.sum(y == 0)) - 50) <= 1

    def test_deterministic_given_seed(self):
        x1, y1 = two_moons(64, rng=8)
        x2, y2 = two_moons(64, rng=8)
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(y1, y2)

    def test_classes_roughly_separable(self):
        # the two arcs live in different half-planes of a simple feature
        x, y = two_moons(400, noise_std=0.05, rng=9)
        top = x[y == 0]
        bot = x[y == 1]
        assert np.mean(top[:, 1]) > np.mean(bot[:, 1])
