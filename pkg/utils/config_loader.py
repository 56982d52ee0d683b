"""
Configuration loader utilities

Run configurations are nested dictionaries loaded from YAML. Every section
is completed from DEFAULT_CONFIG so a dumped configuration lists every value
the run actually used.
"""

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from homogenization.errors import ConfigError

DEFAULT_CONFIG: Dict[str, Any] = {
    'field': {
        'name': 'zero',
        'params': {},
    },
    'grid': {
        'resolution': 64,           # nodes per unit period, int or per-axis list
        'strip_half_width': None,   # K_s; None -> ceil(eta) + 8
    },
    'solver': {
        'tolerance': 1.0e-10,       # stationarity / corrector residual
        'centering_tolerance': 1.0e-8,
        'direct_limit': 300000,     # unknowns above which gmres + spilu is used
        'iterative_rtol': 1.0e-12,
        'extrapolate': True,        # Richardson-extrapolated tensor
    },
    'strip': {
        'fit_threshold': 1.0e-3,
        'min_fit_cells': 4,
        'monte_carlo': {
            'enabled': False,
            'far_plane': 4,
            'chains': 64,
            'cycles': 20,
            'dt': 0.01,
        },
    },
    'model': {
        'blend': 'smooth',
        'alternate_blend': 'quintic',
        'support_tolerance': 1.0e-8,
    },
    'simulation': {
        'seed': 20240611,
        'threads': 1,
        'block_size': 512,
        'eps_list': [0.1, 0.05, 0.025],
        'horizon': 1.0,
        'dt': None,                 # None -> 0.05 * eps^2
        'n_paths': 10000,
        'x0': None,                 # None -> origin
        'delta': 0.4,
        'limit_backend': 'grid_walk',
        'limit_dt': 1.0e-4,
        'save_points': 100,
        'export_thin': 10,
        'export_paths': 200,
    },
    'verify': {
        'negative_control': None,   # None, 'alpha2x' or 'swap-p'
        'n_paths': 10000,
        'exit_paths': 4000,
        'occupation_paths': 2000,
        'occupation_exponent': 0.75,
        'occupation_lambda': 4.0,
        'martingale_paths': 4000,
        'martingale_lambda': 1.0,
        'drift_strips': [8, 16],
        'drift_paths': 2000,
        'uniformity_starts': 3,
        'checks': ['model', 'transmissivity', 'increments', 'occupation',
                   'marginals', 'martingale'],
    },
    'output': {
        'dir': 'results',
    },
    'logging': {
        'level': 'INFO',
        'file': None,               # None -> <output.dir>/logs/run.log
    },
}


def load_config(config_path: str) -> Dict[str, Any]:
    """
    Load YAML configuration file

    Args:
        config_path: Path to config file

    Returns:
        Configuration dictionary (an empty file gives an empty dict)

    Raises:
        FileNotFoundError: If config file doesn't exist
        yaml.YAMLError: If config file is invalid
    """
    path = Path(config_path)

    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(path, 'r', encoding='utf-8') as f:
        config = yaml.safe_load(f)

    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError(f"Top level of {config_path} must be a mapping")
    return config


def save_config(config: Dict[str, Any], config_path: str):
    """
    Save configuration to YAML file

    Args:
        config: Configuration dictionary
        config_path: Path to save config file
    """
    path = Path(config_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, 'w', encoding='utf-8') as f:
        yaml.dump(config, f, default_flow_style=False, allow_unicode=True)


def merge_defaults(config: Optional[Dict[str, Any]],
                   defaults: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Recursively complete a configuration with default values

    Keys present in `config` win; nested mappings are merged key by key.
    The inputs are not modified.
    """
    if defaults is None:
        defaults = DEFAULT_CONFIG
    merged = copy.deepcopy(defaults)
    for key, value in (config or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            # field params are free-form and replace the default wholesale
            if key == 'params':
                merged[key] = copy.deepcopy(value)
            else:
                merged[key] = merge_defaults(value, merged[key])
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides ("simulation.seed": 7); None values are skipped
    """
    result = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = result
        keys = dotted.split('.')
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Cannot override {dotted}: {key} is not a section")
        node[keys[-1]] = value
    return result


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON dump of a configuration"""
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
