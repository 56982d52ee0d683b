"""
Shared fixtures: small grids, builtin fields and a minimal run configuration
"""

import numpy as np
import pytest
import yaml

from fields.builtins import builtin_field
from fields.grid import GridSpec
from homogenization.effective_model import assemble_model


@pytest.fixture
def zero_field():
    return builtin_field('zero')


@pytest.fixture
def shear_field():
    return builtin_field('torus_shear', {'c': 1.0})


@pytest.fixture
def small_grid():
    """16 nodes per period, strip [-9, 9]"""
    return GridSpec.build(2, 16, 9)


@pytest.fixture
def brownian_model():
    """Limit model of the zero drift: D+- = I, p+- = 1/2, alpha = 0"""
    return assemble_model(np.eye(2), np.eye(2), 0.5, 0.5, [0.0])


@pytest.fixture
def run_config(tmp_path):
    """Small zero-field configuration written to disk; returns (path, dict)"""
    config = {
        'field': {'name': 'zero', 'params': {}},
        'grid': {'resolution': 16},
        'simulation': {'seed': 7, 'n_paths': 200, 'eps_list': [0.1, 0.05], 'save_points': 10,
                       'limit_dt': 1.0e-3, 'block_size': 64},
        'verify': {'checks': ['model']},
        'output': {'dir': str(tmp_path / 'out')},
        'logging': {'level': 'WARNING'},
    }
    path = tmp_path / 'run.yaml'
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config, f)
    return path, config
