"""Reference implementations: closed-form posterior, ESS moments, brute ECE."""

import numpy as np
import pytest

from atmc import calibration, confidence_correctness
from atmc.errors import InsufficientDataError, NumericalError
from atmc.oracle import (
    GaussianPosteriorClosedForm,
    effective_sample_size,
    linreg_posterior,
    moment_check,
    reference_ece,
)


class TestLinregPosterior:
    def test_identity_design_flat_prior(self):
        post = linreg_posterior(np.eye(2), np.array([1.0, 1.0]), 1.0, None)
        np.testing.assert_allclose(post.mean, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(post.covariance, np.eye(2), atol=1e-12)

    def test_tight_prior_shrinks_mean_to_zero(self):
        post = linreg_posterior(np.eye(2), np.array([5.0, -5.0]), 1.0, 1e-12)
        np.testing.assert_allclose(post.mean, [0.0, 0.0], atol=1e-9)

    def test_one_dimensional_hand_computation(self):
        # two unit observations of 2 and 4 with unit prior:
        # precision = 2 + 1 = 3, mean = (2 + 4) / 3 = 2
        x = np.array([[1.0], [1.0]])
        y = np.array([2.0, 4.0])
        post = linreg_posterior(x, y, 1.0, 1.0)
        np.testing.assert_allclose(post.covariance, [[1.0 / 3.0]], rtol=1e-12)
        np.testing.assert_allclose(post.mean, [2.0], rtol=1e-12)

    def test_singular_precision_rejected(self):
        x = np.zeros((3, 2))  # rank deficient, no prior
        with pytest.raises(NumericalError):
            linreg_posterior(x, np.zeros(3), 1.0, None)

    def test_covariance_validated(self):
        with pytest.raises(NumericalError):
            GaussianPosteriorClosedForm(np.zeros(2), -np.eye(2))


class TestEffectiveSampleSize:
    def test_white_noise_is_fully_effective(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(20_000)
        ess = effective_sample_size(x)
        assert ess > 0.5 * x.size

    def test_ar1_matches_theory(self):
        # ESS for AR(1) with coefficient a is n (1-a)/(1+a)
        rng = np.random.default_rng(1)
        a = 0.9
        n = 200_000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for i in range(1, n):
            x[i] = a * x[i - 1] + eps[i]
        expected = n * (1 - a) / (1 + a)
        assert effective_sample_size(x) == pytest.approx(expected, rel=0.2)

    def test_constant_series_collapses_to_one(self):
        assert effective_sample_size(np.ones(5000)) == 1.0


class TestMomentCheck:
    @staticmethod
    def reference():
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        return GaussianPosteriorClosedForm(np.array([0.5, -0.5]), cov)

    def test_direct_samples_pass(self):
        ref = self.reference()
        chain = ref.sample(50_000, 2)
        report = moment_check(chain, ref)
        assert not report.inconclusive
        assert report.mean_ok
        np.testing.assert_allclose(report.variance_ratio, 1.0, atol=0.05)

    def test_constant_chain_flagged_inconclusive(self):
        ref = self.reference()
        chain = np.tile([1.0, 1.0], (5000, 1))
        report = moment_check(chain, ref)
        assert report.inconclusive
        np.testing.assert_array_equal(report.ess, 1.0)

    def test_shuffled_chain_same_moments(self):
        ref = self.reference()
        chain = ref.sample(20_000, 3)
        shuffled = chain[np.random.default_rng(4).permutation(chain.shape[0])]
        a = moment_check(chain, ref)
        b = moment_check(shuffled, ref)
        np.testing.assert_allclose(a.mean_error, b.mean_error, atol=1e-12)
        np.testing.assert_allclose(a.variance_ratio, b.variance_ratio, atol=1e-12)

    def test_biased_chain_fails(self):
        ref = self.reference()
        chain = ref.sample(50_000, 5) + 0.2
        assert not moment_check(chain, ref).mean_ok

    def test_short_chain_rejected(self):
        with pytest.raises(InsufficientDataError):
            moment_check(np.zeros((999, 2)), self.reference())


class TestReferenceEce:
    def test_agrees_with_calibration_module(self):
        rng = np.random.default_rng(6)
        for trial in range(20):
            n = int(rng.integers(8, 1000))
            probs = rng.dirichlet(np.ones(3), size=n)
            labels = rng.integers(0, 3, n)
            report = calibration(probs, labels)
            conf, correct = confidence_correctness(probs, labels)
            assert abs(report.ece - reference_ece(conf, correct)) < 1e-12

    def test_large_input_agreement(self):
        rng = np.random.default_rng(7)
        n = 100_000
        conf = rng.uniform(0.5, 1.0, n)
        correct = (rng.uniform(size=n) < conf).astype(float)
        probs = np.column_stack([conf, 1.0 - conf])
        labels = np.where(correct > 0, 0, 1)
        report = calibration(probs, labels)
        assert abs(report.ece - reference_ece(conf, correct)) < 1e-12

    def test_empty_input_rejected_like_calibration(self):
        with pytest.raises(InsufficientDataError):
            reference_ece([], [])
        with pytest.raises(InsufficientDataError):
            calibration(np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_exactly_eight_examples_gives_unit_bins(self):
        rng = np.random.default_rng(8)
        probs = rng.dirichlet(np.ones(2), size=8)
        labels = rng.integers(0, 2, 8)
        report = calibration(probs, labels)
        assert [b.count for b in report.bins] == [1] * 8
        conf, correct = confidence_correctness(probs, labels)
        assert abs(report.ece - reference_ece(conf, correct)) < 1e-12
