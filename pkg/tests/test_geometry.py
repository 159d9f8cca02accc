#!/usr/bin/env python3
"""
Tests for norms, angles, extreme selection and the Hill estimator
"""

import sys
import os
import math
import unittest
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import numpy as np

from src.errors import DataError, DomainError, ParameterError
from src.geometry import (NormKind, angular, angular_rows, hill_estimator, hill_plot, norms,
                          select_extremes, top_k_indices)


class TestAngles(unittest.TestCase):
    """Projection on the unit sphere"""

    def test_unit_norm(self):
        """Test angles have unit norm under every norm kind"""
        x = np.array([3.0, 4.0])
        for kind in NormKind:
            with self.subTest(norm=kind):
                theta = angular(x, kind)
                self.assertAlmostEqual(float(norms(theta, kind)[0]), 1.0)

    def test_l2_values(self):
        """Test the Euclidean angle of (3, 4)"""
        np.testing.assert_allclose(angular(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_zero_vector(self):
        """Test the zero vector has no angle"""
        with self.assertRaises(DomainError):
            angular(np.zeros(3))

    def test_non_finite(self):
        """Test non-finite vectors are rejected"""
        with self.assertRaises(DataError):
            angular(np.array([np.inf, 1.0]))

    def test_rows(self):
        """Test row-wise projection and zero rows"""
        x = np.array([[1.0, 1.0], [0.0, 2.0]])
        np.testing.assert_allclose(angular_rows(x, NormKind.L1), [[0.5, 0.5], [0.0, 1.0]])
        with self.assertRaises(DomainError):
            angular_rows(np.array([[0.0, 0.0], [1.0, 0.0]]))

    def test_norm_kinds(self):
        """Test L1, L2 and Linf norms of one row"""
        x = np.array([[3.0, -4.0]])
        self.assertEqual(norms(x, NormKind.L1)[0], 7.0)
        self.assertEqual(norms(x, NormKind.L2)[0], 5.0)
        self.assertEqual(norms(x, NormKind.LINF)[0], 4.0)


class TestTopK(unittest.TestCase):
    """Partial selection against a full sort"""

    def full_sort_oracle(self, r, k):
        return np.lexsort((np.arange(r.size), -r))[:k]

    def test_matches_full_sort(self):
        """Test partial selection against a full sort with ties"""
        rng = np.random.default_rng(0)
        for trial in range(100):
            n = int(rng.integers(1, 200))
            k = int(rng.integers(1, n + 1))
            # coarse values force ties
            r = rng.integers(0, 20, n).astype(float)
            with self.subTest(trial=trial, n=n, k=k):
                np.testing.assert_array_equal(top_k_indices(r, k), self.full_sort_oracle(r, k))

    def test_ties_go_to_lower_index(self):
        """Test ties are broken by the lower index"""
        r = np.array([1.0, 5.0, 5.0, 5.0, 2.0])
        np.testing.assert_array_equal(top_k_indices(r, 2), [1, 2])

    def test_k_equals_n(self):
        """Test selecting every row sorts by decreasing norm"""
        r = np.array([2.0, 3.0, 1.0])
        np.testing.assert_array_equal(top_k_indices(r, 3), [1, 0, 2])

    def test_invalid_k(self):
        """Test k outside [1, n]"""
        for k in (0, 4):
            with self.subTest(k=k):
                with self.assertRaises(ParameterError):
                    top_k_indices(np.ones(3), k)


class TestSelectExtremes(unittest.TestCase):
    """Extreme subset of a sample"""

    def setUp(self):
        self.v = np.array([[1.0, 1.0], [10.0, 0.0], [0.0, 3.0], [2.0, 2.0]])

    def test_selection(self):
        """Test indices, threshold and angles of the extreme subset"""
        subset = select_extremes(self.v, 2)
        np.testing.assert_array_equal(subset.indices, [1, 2])
        self.assertEqual(subset.threshold, 3.0)
        np.testing.assert_allclose(subset.angles, [[1.0, 0.0], [0.0, 1.0]])
        self.assertEqual(subset.k, 2)

    def test_threshold_is_kth_largest_norm(self):
        """Test the threshold equals the k-th largest norm"""
        subset = select_extremes(self.v, 3)
        self.assertAlmostEqual(subset.threshold, math.sqrt(8.0))

    def test_zero_threshold(self):
        """Test selecting a zero row is a domain error"""
        with self.assertRaises(DomainError):
            select_extremes(np.array([[1.0, 0.0], [0.0, 0.0]]), 2)


class TestHill(unittest.TestCase):
    """Hill estimator"""

    def test_exact_pareto_sample(self):
        """Test the Hill estimate on a Pareto(3) sample"""
        values = np.random.default_rng(0).pareto(3.0, 100000) + 1.0
        k = math.isqrt(values.size)
        self.assertAlmostEqual(hill_estimator(values, k), 3.0, delta=0.45)

    def test_closed_form(self):
        """Test the Hill estimate on a hand-computed sample"""
        values = np.array([8.0, 4.0, 2.0, 1.0])
        # mean(log 8/2, log 4/2) = 1.5 log 2
        self.assertAlmostEqual(hill_estimator(values, 2), 1.0 / (1.5 * math.log(2.0)))

    def test_plot_matches_pointwise(self):
        """Test the Hill plot matches pointwise estimates"""
        values = np.random.default_rng(1).pareto(2.0, 500) + 1.0
        ks = [5, 10, 50]
        np.testing.assert_allclose(hill_plot(values, ks), [hill_estimator(values, k) for k in ks])

    def test_invalid(self):
        """Test invalid samples and k"""
        with self.assertRaises(ParameterError):
            hill_estimator(np.array([1.0, 2.0]), 2)
        with self.assertRaises(ParameterError):
            hill_estimator(np.array([1.0, -2.0, 3.0]), 1)
        with self.assertRaises(DataError):
            hill_estimator(np.ones(5), 2)


if __name__ == '__main__':
    unittest.main()
