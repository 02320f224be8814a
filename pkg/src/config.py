"""
Configuration module for Phase HMM

Layering: built-in defaults, then the JSON config file, then environment
variables (verbosity only).
"""
import copy
import json
import logging
import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError

from src.utils.errors import ValidationError

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

ENV_PREFIX = "PHASE_HMM"

# Only the verbosity toggle can come from the environment.
ENV_OVERRIDABLE = {"logging": ("level", "file")}

DEFAULT_CONFIG: Dict[str, Any] = {
    'smoothing': {
        'window': 15,
    },
    'hmm': {
        'diag_cov': False,
        'reg_epsilon': 1e-6,
        'reg_max': 1e-2,
    },
    'io': {
        'fps': 1.0,
        'upsample_factor': 25,
    },
    'evaluation': {
        'margin_seconds': 10.0,
    },
    'scenario': {
        'K': 8,
        'D': 8,
        'T': 2000,
        'n_train': 10,
        'n_test': 5,
        'noise_scale': 2.5,
        'dwell': 200.0,
        'seed': 0,
    },
    'bench': {
        'seeds': 10,
        'n_jobs': 1,
    },
    'logging': {
        'level': 'INFO',
        'file': None,
    },
}


class SmoothingConfig(BaseModel):
    """Causal averaging window, in frames."""
    window: int = Field(default=15, ge=1)


class ScenarioConfig(BaseModel):
    """Sizes and noise of a synthetic forward-chain scenario."""
    K: int = Field(default=8, ge=1)
    D: int = Field(default=8, ge=1)
    T: int = Field(default=2000, ge=1)
    n_train: int = Field(default=10, ge=1)
    n_test: int = Field(default=5, ge=1)
    noise_scale: float = Field(default=2.5, gt=0)
    dwell: float = Field(default=200.0, ge=1)
    seed: int = 0


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load configuration from a JSON file and override with environment variables.

    Args:
        config_path: Path to the configuration JSON file. None uses defaults only.

    Returns:
        Configuration dictionary.

    Raises:
        ValidationError: if the file exists but is not valid JSON or an object.
    """
    config = copy.deepcopy(DEFAULT_CONFIG)

    if config_path:
        try:
            with open(config_path, 'r', encoding='utf-8-sig') as f:
                file_config = json.load(f)
        except FileNotFoundError:
            logger.warning(f"Config file {config_path} not found, using default configuration")
            file_config = {}
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ValidationError(f"Error parsing config file {config_path}: {e}") from e
        if not isinstance(file_config, dict):
            raise ValidationError(f"Config file {config_path} must contain a JSON object")
        _merge(config, file_config)

    # Example: PHASE_HMM_LOGGING_LEVEL overrides config['logging']['level']
    for section, keys in ENV_OVERRIDABLE.items():
        for key in keys:
            env_var = f"{ENV_PREFIX}_{section.upper()}_{key.upper()}"
            if env_var in os.environ:
                config[section][key] = os.environ[env_var]

    return config


def smoothing_config(config: Dict[str, Any], **overrides: Any) -> SmoothingConfig:
    """Validated SmoothingConfig from the `smoothing` section plus non-None overrides."""
    return _validated(SmoothingConfig, config.get('smoothing', {}), overrides)


def scenario_config(config: Dict[str, Any], **overrides: Any) -> ScenarioConfig:
    """Validated ScenarioConfig from the `scenario` section plus non-None overrides."""
    return _validated(ScenarioConfig, config.get('scenario', {}), overrides)


def _validated(model: type, section: Dict[str, Any], overrides: Dict[str, Any]):
    values = dict(section)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return model(**values)
    except PydanticValidationError as e:
        raise ValidationError(f"invalid {model.__name__}: {e}") from e
