# tests/test_preprocessor.py
import unittest
import os
import sys

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.config import SmoothingConfig
from src.data.preprocessor import TemporalSmoother, smooth
from src.models.sequences import ObservationSequence
from src.utils.errors import DimensionMismatchError


def trailing_mean(data: np.ndarray, t: int, window: int) -> np.ndarray:
    return data[max(0, t - window + 1):t + 1].mean(axis=0)


class TestTemporalSmoother(unittest.TestCase):
    """Test causal averaging"""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_default_window(self):
        self.assertEqual(TemporalSmoother().window, 15)

    def test_pairwise_means(self):
        """Test a window of two on a hand example"""
        obs = ObservationSequence(np.array([[0.0], [2.0], [4.0]]))
        out = smooth(obs, SmoothingConfig(window=2))
        np.testing.assert_array_equal(out.data, [[0.0], [1.0], [3.0]])

    def test_window_one_is_identity(self):
        """Test that window 1 returns the input exactly"""
        obs = ObservationSequence(self.rng.normal(size=(50, 4)))
        out = smooth(obs, SmoothingConfig(window=1))
        np.testing.assert_array_equal(out.data, obs.data)
        self.assertEqual(out.fps, obs.fps)

    def test_matches_trailing_mean(self):
        """Test every row against a fresh trailing mean on random sequences"""
        for _ in range(1000):
            T = int(self.rng.integers(1, 40))
            D = int(self.rng.integers(1, 5))
            window = int(self.rng.integers(1, 20))
            data = self.rng.uniform(-10.0, 0.0, size=(T, D))
            out = smooth(ObservationSequence(data), SmoothingConfig(window=window)).data
            expected = np.stack([trailing_mean(data, t, window) for t in range(T)])
            np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_causality(self):
        """Test that perturbing a suffix leaves earlier outputs unchanged"""
        smoother = TemporalSmoother(SmoothingConfig(window=5))
        for _ in range(200):
            T = int(self.rng.integers(2, 30))
            data = self.rng.normal(size=(T, 3))
            cut = int(self.rng.integers(1, T))
            changed = data.copy()
            changed[cut:] += self.rng.normal(size=(T - cut, 3))
            a = smoother.smooth(ObservationSequence(data)).data
            b = smoother.smooth(ObservationSequence(changed)).data
            np.testing.assert_array_equal(a[:cut], b[:cut])

    def test_constant_is_fixed_point(self):
        data = np.full((30, 2), -1.25)
        out = smooth(ObservationSequence(data), SmoothingConfig(window=15)).data
        np.testing.assert_allclose(out, data, rtol=0, atol=1e-12)

    def test_linearity(self):
        config = SmoothingConfig(window=6)
        X = self.rng.normal(size=(40, 3))
        Y = self.rng.normal(size=(40, 3))
        lhs = smooth(ObservationSequence(2.0 * X - 3.0 * Y), config).data
        rhs = 2.0 * smooth(ObservationSequence(X), config).data - 3.0 * smooth(ObservationSequence(Y), config).data
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_empty_sequence(self):
        out = smooth(ObservationSequence.empty(3))
        self.assertEqual((out.T, out.D), (0, 3))

    def test_window_longer_than_sequence(self):
        data = np.array([[1.0], [3.0]])
        out = smooth(ObservationSequence(data), SmoothingConfig(window=15)).data
        np.testing.assert_array_equal(out, [[1.0], [2.0]])


class TestStreamingSmoother(unittest.TestCase):
    """Test push/stream against the batch path"""

    def test_stream_matches_batch_exactly(self):
        """Test that streaming gives bit-identical rows"""
        rng = np.random.default_rng(3)
        for window in (1, 2, 15):
            data = rng.normal(size=(60, 4))
            smoother = TemporalSmoother(SmoothingConfig(window=window))
            batch = smoother.smooth(ObservationSequence(data)).data
            streamed = np.stack(list(smoother.stream(iter(data))))
            np.testing.assert_array_equal(streamed, batch)

    def test_reset(self):
        smoother = TemporalSmoother(SmoothingConfig(window=3))
        smoother.push(np.array([10.0]))
        smoother.reset()
        np.testing.assert_array_equal(smoother.push(np.array([2.0, 4.0])), [2.0, 4.0])

    def test_dimension_change(self):
        smoother = TemporalSmoother(SmoothingConfig(window=3))
        smoother.push(np.zeros(2))
        with self.assertRaises(DimensionMismatchError):
            smoother.push(np.zeros(3))


if __name__ == '__main__':
    unittest.main()
