#!/usr/bin/env python3
"""
Tests for the heavy-tailed simulators
"""

import sys
import os
import unittest
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import numpy as np
from scipy import stats

from src.errors import ConfigError, ParameterError
from src.sim import (Dataset, ModelKind, SimModelConfig, draw_beta, gen_additive, gen_combined,
                     gen_multiplicative, generate, regression_function, replication_seed,
                     response_bound, sample_logistic_pareto, sample_positive_stable, true_angular_fn)

BETA5 = (0.04, 0.96, 0.94, 0.45, 0.13)


class TestSeeds(unittest.TestCase):
    """Replication seed derivation"""

    def test_deterministic(self):
        """Test the same master seed and index give the same seed"""
        self.assertEqual(replication_seed(7, 3), replication_seed(7, 3))

    def test_distinct_per_index_and_master(self):
        """Test seeds differ across indices and master seeds"""
        seeds = {replication_seed(0, i) for i in range(50)}
        self.assertEqual(len(seeds), 50)
        self.assertNotEqual(replication_seed(0, 1), replication_seed(1, 0))

    def test_fits_in_64_bits(self):
        """Test derived seeds are unsigned 64-bit integers"""
        seed = replication_seed(123, 4)
        self.assertGreaterEqual(seed, 0)
        self.assertLess(seed, 2 ** 64)


class TestPositiveStable(unittest.TestCase):
    """Positive stable sampler"""

    def test_xi_one_is_point_mass(self):
        """Test xi = 1 returns the constant one"""
        self.assertEqual(sample_positive_stable(1.0, 0), 1.0)
        np.testing.assert_array_equal(sample_positive_stable(1.0, 0, size=4), np.ones(4))

    def test_positive_and_finite(self):
        """Test stable draws are positive and finite"""
        s = sample_positive_stable(0.5, np.random.default_rng(1), size=10000)
        self.assertTrue(np.all(s > 0))
        self.assertTrue(np.all(np.isfinite(s)))

    def test_laplace_transform(self):
        """Test the Laplace transform at one"""
        # E exp(-S) = exp(-1) for every xi
        s = sample_positive_stable(0.7, np.random.default_rng(2), size=200000)
        self.assertAlmostEqual(float(np.mean(np.exp(-s))), np.exp(-1.0), delta=0.01)

    def test_rejects_bad_exponent(self):
        """Test exponents outside (0, 1]"""
        for xi in (0.0, -0.3, 1.5):
            with self.subTest(xi=xi):
                with self.assertRaises(ParameterError):
                    sample_positive_stable(xi, 0)


class TestLogisticPareto(unittest.TestCase):
    """Logistic dependence with Pareto margins"""

    def setUp(self):
        self.cfg = SimModelConfig(ModelKind.ADDITIVE, d=3, xi=0.7, alpha=3.0, beta=(0.2, 0.5, 0.9))

    def test_support(self):
        """Test Pareto inputs have shape (n, d) and entries at least one"""
        x = sample_logistic_pareto(5000, self.cfg, 0)
        self.assertEqual(x.shape, (5000, 3))
        self.assertTrue(np.all(x >= 1.0))

    def test_margin_cdf_within_binomial_band(self):
        """Test the empirical margin cdf at Pareto quantiles against a 3-sigma band"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=2, xi=0.7, alpha=3.0, beta=(0.2, 0.5))
        n = 100000
        x = sample_logistic_pareto(n, cfg, 4)
        for q in (0.5, 0.9, 0.99):
            quantile = (1.0 - q) ** (-1.0 / 3.0)
            band = 3.0 * np.sqrt(q * (1.0 - q) / n)
            for j in range(2):
                with self.subTest(q=q, column=j):
                    self.assertAlmostEqual(float(np.mean(x[:, j] <= quantile)), q, delta=band)

    def test_unit_exponent_gives_independent_margins(self):
        """Test Kendall's tau vanishes between columns when xi = 1"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=3, xi=1.0, beta=(0.2, 0.5, 0.9))
        x = sample_logistic_pareto(100000, cfg, 6)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            with self.subTest(pair=(i, j)):
                tau = stats.kendalltau(x[:, i], x[:, j]).correlation
                self.assertLess(abs(tau), 0.02)

    def test_rejects_empty(self):
        """Test an empty sample request"""
        with self.assertRaises(ParameterError):
            sample_logistic_pareto(0, self.cfg, 0)


class TestConfig(unittest.TestCase):
    """SimModelConfig validation"""

    def test_multiplicative_needs_even_dimension(self):
        """Test the multiplicative model rejects odd d"""
        with self.assertRaises(ConfigError) as ctx:
            SimModelConfig(ModelKind.MULTIPLICATIVE, d=3)
        self.assertEqual(ctx.exception.key, "d")

    def test_beta_length(self):
        """Test a coefficient vector of the wrong length"""
        with self.assertRaises(ConfigError):
            SimModelConfig(ModelKind.ADDITIVE, d=3, beta=(0.1, 0.2))

    def test_beta_range(self):
        """Test coefficients outside the unit interval"""
        with self.assertRaises(ConfigError):
            SimModelConfig(ModelKind.ADDITIVE, d=2, beta=(0.1, 1.2))

    def test_xi_range(self):
        """Test a dependence exponent outside (0, 1]"""
        with self.assertRaises(ConfigError):
            SimModelConfig(ModelKind.ADDITIVE, d=2, xi=0.0, beta=(0.1, 0.2))

    def test_missing_beta_on_generation(self):
        """Test generating without coefficients"""
        with self.assertRaises(ConfigError):
            gen_additive(10, SimModelConfig(ModelKind.ADDITIVE, d=2))

    def test_kind_mismatch(self):
        """Test a generator called with another model kind"""
        with self.assertRaises(ConfigError):
            gen_multiplicative(10, SimModelConfig(ModelKind.ADDITIVE, d=2, beta=(0.1, 0.2)))


class TestGenerators(unittest.TestCase):
    """Additive, multiplicative and combined models"""

    def setUp(self):
        self.additive = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5)
        self.multiplicative = SimModelConfig(ModelKind.MULTIPLICATIVE, d=4, xi=0.7, alpha=2.0)
        self.combined = SimModelConfig(ModelKind.COMBINED, d=5, beta=BETA5)

    def test_bounded_response(self):
        """Test every model keeps |Y| below its bound"""
        for cfg in (self.additive, self.multiplicative, self.combined):
            with self.subTest(kind=cfg.kind):
                data = generate(5000, cfg, 0)
                self.assertIsInstance(data, Dataset)
                self.assertEqual((data.n, data.d), (5000, cfg.d))
                self.assertLessEqual(float(np.max(np.abs(data.y))), response_bound(cfg))

    def test_same_seed_same_sample(self):
        """Test a fixed seed reproduces the sample"""
        a = gen_combined(500, self.combined, 11)
        b = gen_combined(500, self.combined, 11)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)

    def test_config_seed_when_rng_omitted(self):
        """Test the config seed is used when no generator is given"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5, seed=5)
        np.testing.assert_array_equal(gen_additive(100, cfg).y, gen_additive(100, cfg, 5).y)

    def test_noise_free_equals_regression_function(self):
        """Test the noise-free switch returns f*"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5, noise_free=True)
        data = gen_additive(1000, cfg, 1)
        np.testing.assert_allclose(data.y, regression_function(cfg, data.x), rtol=0, atol=1e-15)

    def test_unit_multiplier(self):
        """Test the unit multiplier switch returns f*"""
        cfg = SimModelConfig(ModelKind.MULTIPLICATIVE, d=4, unit_multiplier=True)
        data = gen_multiplicative(1000, cfg, 1)
        np.testing.assert_allclose(data.y, regression_function(cfg, data.x), atol=1e-15)

    def test_switches_keep_the_random_stream(self):
        """Test noise switches leave the inputs unchanged"""
        # the inputs do not depend on the noise switches
        noisy = gen_additive(300, self.additive, 9)
        quiet = gen_additive(300, SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5, noise_free=True), 9)
        np.testing.assert_array_equal(noisy.x, quiet.x)

    def test_angular_labels(self):
        """Test angular labels equal beta^T Theta"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5, angular_labels=True)
        data = gen_additive(1000, cfg, 2)
        theta = data.x / np.linalg.norm(data.x, axis=1)[:, None]
        np.testing.assert_allclose(data.y, theta @ np.asarray(BETA5), atol=1e-12)

    def test_additive_noise_is_small(self):
        """Test the truncated additive noise scale"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5, sigma=0.1)
        data = gen_additive(20000, cfg, 3)
        residual = data.y - regression_function(cfg, data.x)
        self.assertLessEqual(float(np.max(np.abs(residual))), 1.0)
        self.assertAlmostEqual(float(np.std(residual)), 0.1, delta=0.005)

    def test_combined_noise_adds_conditional_variance(self):
        """Test Var(Y | ||X|| > t) of the combined model exceeds the additive one"""
        beta = (1.0, 1.0, 1.0)
        additive = gen_additive(100000, SimModelConfig(ModelKind.ADDITIVE, d=3, beta=beta), 12)
        combined = gen_combined(100000, SimModelConfig(ModelKind.COMBINED, d=3, beta=beta), 12)
        # same seed, same inputs
        np.testing.assert_array_equal(additive.x, combined.x)
        above = np.linalg.norm(additive.x, axis=1) > 2.0
        self.assertGreater(float(np.var(combined.y[above])), float(np.var(additive.y[above])))


class TestAngularFunction(unittest.TestCase):
    """Limit angular regression function"""

    def test_additive_is_linear(self):
        """Test the additive limit is linear in the angle"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5)
        self.assertAlmostEqual(true_angular_fn(cfg, np.eye(5)[1]), 0.96)

    def test_multiplicative_sine_sum(self):
        """Test the multiplicative limit is the sine sum"""
        cfg = SimModelConfig(ModelKind.MULTIPLICATIVE, d=2)
        theta = np.array([1.0, 1.0]) / np.sqrt(2.0)
        expected = theta[0] * np.sin(np.pi * theta[1])
        self.assertAlmostEqual(true_angular_fn(cfg, theta), expected)

    def test_limit_of_regression_function(self):
        """Test f* approaches f*_Theta far from the origin"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=5, beta=BETA5)
        theta = np.full(5, 1.0 / np.sqrt(5.0))
        far = regression_function(cfg, 1e12 * theta)[0]
        self.assertAlmostEqual(far, true_angular_fn(cfg, theta), places=5)

    def test_convergence_on_dyadic_levels(self):
        """Test sup over ||x|| > t of |f* - f*_Theta| shrinks along t = 2, 4, ..., 1024"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=3, beta=(0.2, 0.5, 0.9), noise_free=True)
        data = gen_additive(100000, cfg, 8)
        r = np.linalg.norm(data.x, axis=1)
        gap = np.abs(data.y - true_angular_fn(cfg, data.x / r[:, None]))
        bound = np.linalg.norm(cfg.beta_array)
        sups = []
        for t in 2.0 ** np.arange(1, 11):
            above = r > t
            if not np.any(above):
                continue
            sup = float(np.max(gap[above]))
            self.assertLessEqual(sup, bound / (2.0 * np.sqrt(t)) + 1e-12)
            sups.append(sup)
        self.assertGreaterEqual(len(sups), 5)
        for previous, current in zip(sups, sups[1:]):
            self.assertLessEqual(current, previous + 1e-3)

    def test_multiplicative_vanishes_on_axis(self):
        """Test f* of the multiplicative model is zero on the (0, r) axis"""
        cfg = SimModelConfig(ModelKind.MULTIPLICATIVE, d=2)
        self.assertLess(abs(regression_function(cfg, np.array([[0.0, 1e6]]))[0]), 1e-6)

    def test_rejects_non_unit_and_negative(self):
        """Test angles off the nonnegative unit sphere"""
        cfg = SimModelConfig(ModelKind.ADDITIVE, d=2, beta=(0.5, 0.5))
        with self.assertRaises(ParameterError):
            true_angular_fn(cfg, np.array([1.0, 1.0]))
        with self.assertRaises(ParameterError):
            true_angular_fn(cfg, np.array([-1.0, 0.0]))

    def test_draw_beta_in_unit_cube(self):
        """Test random coefficients lie in the unit cube"""
        beta = draw_beta(10, 0)
        self.assertEqual(beta.shape, (10,))
        self.assertTrue(np.all((beta >= 0) & (beta <= 1)))


if __name__ == '__main__':
    unittest.main()
