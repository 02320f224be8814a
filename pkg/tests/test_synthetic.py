# tests/test_synthetic.py
import unittest
import os
import sys
import time

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.config import ScenarioConfig, SmoothingConfig
from src.data.synthetic import (
    METHODS,
    build_scenario,
    generate,
    render_bench,
    run_bench,
    run_experiment,
)
from src.models.sequences import PhaseSet
from src.utils.errors import DimensionMismatchError


class TestScenario(unittest.TestCase):
    """Test the forward-chain ground truth"""

    def test_default_scenario(self):
        model = build_scenario(ScenarioConfig())
        self.assertEqual((model.K, model.D), (8, 8))
        self.assertAlmostEqual(model.transition[0, 0], 0.995)
        self.assertAlmostEqual(model.transition[0, 1], 0.005)
        self.assertEqual(model.transition[0, 2], 0.0)
        self.assertEqual(model.transition[7, 7], 1.0)
        np.testing.assert_array_equal(model.initial, np.eye(8)[0])
        np.testing.assert_array_equal(model.means, np.eye(8))
        np.testing.assert_array_equal(model.covariances[3], 2.5 * np.eye(8))
        self.assertEqual(model.phases.to_list(), PhaseSet.surgical().to_list())

    def test_means_wrap_when_d_is_small(self):
        model = build_scenario(ScenarioConfig(K=4, D=2))
        np.testing.assert_array_equal(model.means, [[1, 0], [0, 1], [1, 0], [0, 1]])

    def test_generate_is_deterministic(self):
        """Test that equal seeds give equal data and other seeds differ"""
        config = ScenarioConfig(K=3, D=3, T=100, n_train=2, n_test=1, dwell=20, seed=5)
        train_a, test_a = generate(config)
        train_b, test_b = generate(config)
        self.assertEqual((len(train_a), len(test_a)), (2, 1))
        for (la, oa), (lb, ob) in zip(train_a + test_a, train_b + test_b):
            np.testing.assert_array_equal(la.labels, lb.labels)
            np.testing.assert_array_equal(oa.data, ob.data)
        other, _ = generate(config.model_copy(update={'seed': 6}))
        self.assertFalse(np.array_equal(other[0][1].data, train_a[0][1].data))

    def test_sequences_move_forward(self):
        train, test = generate(ScenarioConfig(K=4, D=4, T=500, n_train=3, n_test=2, dwell=50))
        for labels, obs in train + test:
            self.assertEqual(labels.labels[0], 0)
            self.assertTrue(np.all(np.isin(np.diff(labels.labels), [0, 1])))
            self.assertEqual(obs.data.shape, (500, 4))


class TestExperiment(unittest.TestCase):
    """Test the three-method comparison"""

    def test_needs_square_scenario(self):
        with self.assertRaises(DimensionMismatchError):
            run_experiment(ScenarioConfig(K=4, D=3))

    def test_single_state(self):
        """Test that one state gives perfect scores everywhere"""
        result = run_experiment(ScenarioConfig(K=1, D=1, T=50, n_train=2, n_test=2))
        for method in METHODS:
            self.assertEqual(result.scores[method].accuracy, 100.0)
            self.assertEqual(result.scores[method].jaccard, 100.0)

    def test_low_noise(self):
        """Test that nearly noiseless scores are decoded almost perfectly"""
        config = ScenarioConfig(K=4, D=4, T=300, n_train=3, n_test=2, noise_scale=1e-2, dwell=30, seed=2)
        result = run_experiment(config, SmoothingConfig(window=1))
        for method in METHODS:
            self.assertGreaterEqual(result.scores[method].accuracy, 90.0)

    def test_result_layout(self):
        result = run_experiment(ScenarioConfig(K=3, D=3, T=200, n_train=2, n_test=1, dwell=30, seed=3))
        self.assertEqual(list(result.scores), ["Avg Smoothing", "HMM Online", "HMM Offline"])
        self.assertEqual(len(result.scores["HMM Offline"].per_class_jaccard), 3)
        data = result.to_dict()
        self.assertEqual(data['seed'], 3)
        self.assertIn('accuracy', data['scores']['HMM Online'])


class TestBench(unittest.TestCase):
    """Test the default scenario over ten seeds"""

    @classmethod
    def setUpClass(cls):
        start = time.perf_counter()
        cls.report = run_bench(ScenarioConfig(), seeds=10)
        cls.elapsed = time.perf_counter() - start

    def test_seeds(self):
        self.assertEqual([r.seed for r in self.report.results], list(range(10)))

    def test_ordering(self):
        """Test offline >= online >= averaging in at least 8 of 10 seeds"""
        self.assertGreaterEqual(self.report.accuracy_ordered, 8)
        self.assertGreaterEqual(self.report.jaccard_ordered, 8)
        self.assertTrue(self.report.passed)

    def test_baseline_regime(self):
        """Test that averaged argmax is neither trivial nor hopeless"""
        accuracy = np.mean([r.scores["Avg Smoothing"].accuracy for r in self.report.results])
        self.assertGreaterEqual(accuracy, 70.0)
        self.assertLessEqual(accuracy, 90.0)

    def test_runtime(self):
        self.assertLess(self.elapsed, 60.0)

    def test_render(self):
        text = render_bench(self.report, PhaseSet.surgical())
        for method in METHODS:
            self.assertIn(method, text)
        self.assertIn("0.TrocarPlacement", text)
        self.assertIn("All classes", text)
        self.assertIn("Verdict: PASS", text)
        self.assertIn("/10", text)

    def test_to_dict(self):
        data = self.report.to_dict()
        self.assertEqual(data['seeds'], 10)
        self.assertEqual(data['required'], 8)
        self.assertEqual(len(data['results']), 10)


if __name__ == '__main__':
    unittest.main()
