import logging
from pathlib import Path

import pytest
import yaml

from homogenization.errors import ConfigError
from simulation.settings import SimulationSettings
from utils.config_loader import (DEFAULT_CONFIG, apply_overrides, config_hash, load_config, merge_defaults,
                                 save_config)
from utils.logger import setup_logger
from verification.pipeline import CHECKS


def test_merge_defaults_fills_every_section():
    merged = merge_defaults({'simulation': {'seed': 3}})
    assert merged['simulation']['seed'] == 3
    assert merged['simulation']['eps_list'] == DEFAULT_CONFIG['simulation']['eps_list']
    assert set(merged) == set(DEFAULT_CONFIG)
    merged['solver']['tolerance'] = 1.0
    assert DEFAULT_CONFIG['solver']['tolerance'] == 1.0e-10


def test_field_params_replaced_wholesale():
    defaults = {'field': {'name': 'zero', 'params': {'c': 1.0, 'half_width': 2.0}}}
    merged = merge_defaults({'field': {'params': {'c': 3.0}}}, defaults)
    assert merged['field'] == {'name': 'zero', 'params': {'c': 3.0}}


def test_apply_overrides():
    config = merge_defaults({})
    result = apply_overrides(config, {'simulation.seed': 5, 'output.dir': None, 'extra.key': 1})
    assert result['simulation']['seed'] == 5
    assert result['output']['dir'] == 'results'
    assert result['extra'] == {'key': 1}
    assert config['simulation']['seed'] == DEFAULT_CONFIG['simulation']['seed']
    with pytest.raises(ConfigError):
        apply_overrides(config, {'output.dir.sub': 'x'})


def test_config_hash_is_order_free():
    assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
    assert config_hash({'a': 1}) != config_hash({'a': 2})


def test_load_and_save(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / 'none.yaml'))
    listing = tmp_path / 'list.yaml'
    listing.write_text('- 1\n- 2\n')
    with pytest.raises(ConfigError):
        load_config(str(listing))
    empty = tmp_path / 'empty.yaml'
    empty.write_text('')
    assert load_config(str(empty)) == {}

    config = merge_defaults({'field': {'name': 'torus_shear', 'params': {'c': 0.5}}})
    save_config(config, str(tmp_path / 'nested' / 'run.yaml'))
    assert load_config(str(tmp_path / 'nested' / 'run.yaml')) == config


def test_shipped_config_is_complete():
    shipped_path = Path(__file__).resolve().parent.parent / 'config' / 'homogenization_config.yaml'
    with open(shipped_path, encoding='utf-8') as f:
        shipped = yaml.safe_load(f)
    assert set(shipped) == set(DEFAULT_CONFIG)
    for section, values in DEFAULT_CONFIG.items():
        assert set(shipped[section]) >= set(values) - {'params'}, section
    assert set(shipped['verify']['checks']) == set(CHECKS)


def test_simulation_settings():
    settings = SimulationSettings.from_config({'eps_list': [0.2, 0.1], 'x0': [0, 1], 'threads': 0})
    assert settings.eps_list == (0.2, 0.1)
    assert settings.smallest_eps == 0.1
    assert settings.x0 == (0.0, 1.0)
    assert settings.threads == 1
    assert settings.fan_out() == {'block_size': 512, 'threads': 1}
    assert SimulationSettings.from_config(None).dt is None


@pytest.mark.parametrize('section', [
    {'eps_list': []},
    {'eps_list': [0.1, 0.1]},
    {'eps_list': [0.1, -0.05]},
    {'limit_backend': 'milstein'},
])
def test_simulation_settings_rejects(section):
    with pytest.raises(ConfigError):
        SimulationSettings.from_config(section)


def test_setup_logger_writes_file(tmp_path):
    path = tmp_path / 'logs' / 'run.log'
    logger = setup_logger('homogenization_test', str(path), 'debug')
    assert logger.level == logging.DEBUG
    logger.debug('grid ready')
    for handler in logger.handlers:
        handler.flush()
    assert 'grid ready' in path.read_text()
    assert setup_logger('homogenization_test', None, 'verbose').level == logging.INFO
    assert len(logging.getLogger('homogenization_test').handlers) == 1
