# tests/test_config.py
import unittest
import json
import os
import shutil
import sys
import tempfile
from unittest.mock import patch

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.config import DEFAULT_CONFIG, load_config, scenario_config, smoothing_config
from src.utils.errors import ValidationError

CONFIG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'config'))


class TestLoadConfig(unittest.TestCase):
    """Test layered configuration"""

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, text: str) -> str:
        path = os.path.join(self.tmp, 'config.json')
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config['smoothing']['window'], 15)
        self.assertEqual(config['evaluation']['margin_seconds'], 10.0)
        self.assertEqual(config['io']['upsample_factor'], 25)

    def test_shipped_file_matches_defaults(self):
        with open(os.path.join(CONFIG_DIR, 'default.json')) as f:
            self.assertEqual(json.load(f), DEFAULT_CONFIG)

    def test_file_overrides_are_merged(self):
        """Test that a partial file keeps the other defaults"""
        config = load_config(self.write('{"smoothing": {"window": 5}, "scenario": {"seed": 9}}'))
        self.assertEqual(config['smoothing']['window'], 5)
        self.assertEqual(config['scenario']['seed'], 9)
        self.assertEqual(config['scenario']['K'], 8)
        self.assertEqual(config['hmm']['reg_epsilon'], 1e-6)

    def test_defaults_not_mutated(self):
        load_config(self.write('{"smoothing": {"window": 3}}'))
        self.assertEqual(DEFAULT_CONFIG['smoothing']['window'], 15)

    def test_missing_file(self):
        with self.assertLogs('src.config', level='WARNING'):
            config = load_config(os.path.join(self.tmp, 'nope.json'))
        self.assertEqual(config['smoothing']['window'], 15)

    def test_invalid_file(self):
        with self.assertRaises(ValidationError):
            load_config(self.write('{"smoothing": '))
        with self.assertRaises(ValidationError):
            load_config(self.write('[1, 2]'))

    @patch.dict(os.environ, {'PHASE_HMM_LOGGING_LEVEL': 'DEBUG', 'PHASE_HMM_SMOOTHING_WINDOW': '3'})
    def test_environment_only_sets_verbosity(self):
        """Test that only the logging section is read from the environment"""
        config = load_config()
        self.assertEqual(config['logging']['level'], 'DEBUG')
        self.assertEqual(config['smoothing']['window'], 15)


class TestTypedSections(unittest.TestCase):
    """Test pydantic validation of config sections"""

    def test_smoothing_override(self):
        config = load_config()
        self.assertEqual(smoothing_config(config).window, 15)
        self.assertEqual(smoothing_config(config, window=None).window, 15)
        self.assertEqual(smoothing_config(config, window=4).window, 4)

    def test_smoothing_rejects_zero(self):
        with self.assertRaises(ValidationError):
            smoothing_config(load_config(), window=0)

    def test_scenario(self):
        scenario = scenario_config(load_config(), K=3, D=3)
        self.assertEqual((scenario.K, scenario.D, scenario.T), (3, 3, 2000))
        self.assertEqual(scenario.noise_scale, 2.5)

    def test_scenario_rejects_bad_values(self):
        with self.assertRaises(ValidationError):
            scenario_config(load_config(), noise_scale=0.0)
        with self.assertRaises(ValidationError):
            scenario_config(load_config(), n_train=0)


if __name__ == '__main__':
    unittest.main()
