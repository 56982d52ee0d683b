import json

import pytest
import yaml
from scipy.special import i0

import main as main_module
from main import EXIT_ERROR, EXIT_FAILED_VERDICT, EXIT_OK, main


def _run(path, out, *argv):
    return main(['--config', str(path), '--out', str(out), *argv])


def test_dump_config(run_config, capsys):
    path, _ = run_config
    assert main(['--config', str(path), '--seed', '11', '--dump-config']) == EXIT_OK
    dumped = yaml.safe_load(capsys.readouterr().out)
    assert dumped['simulation']['seed'] == 11
    assert dumped['field']['name'] == 'zero'
    assert dumped['solver']['extrapolate'] is True


def test_usage_errors(run_config, tmp_path):
    path, _ = run_config
    assert main(['--config', str(path)]) == EXIT_ERROR
    assert main(['--config', str(tmp_path / 'missing.yaml'), 'cell']) == EXIT_ERROR


def test_cell_command(run_config, tmp_path):
    path, _ = run_config
    out = tmp_path / 'cell'
    assert _run(path, out, 'cell') == EXIT_OK
    for name in ('cells_mu_plus.csv', 'cells_g_minus.csv', 'drift_table.csv', 'cell_summary.json',
                 'effective_config.yaml'):
        assert (out / name).exists(), name
    header = (out / 'cells_mu_plus.csv').read_text().splitlines()[0]
    assert header == 'x1,x2,mu'
    summary = json.loads((out / 'cell_summary.json').read_text())
    assert len(summary['provenance']['config_hash']) == 64


def test_model_command(run_config, tmp_path):
    path, _ = run_config
    out = tmp_path / 'model'
    assert _run(path, out, 'model') == EXIT_OK
    model = json.loads((out / 'model.json').read_text())
    assert model['p']['plus'] == 0.5
    assert model['alpha'] == [0.0]
    assert (out / 'cells_masses.csv').exists()


def test_simulate_commands(run_config, tmp_path):
    path, _ = run_config
    out = tmp_path / 'sim'
    assert _run(path, out, 'simulate', '--which', 'limit') == EXIT_OK
    assert (out / 'paths_limit.csv').exists()
    assert _run(path, out, 'simulate') == EXIT_OK
    assert (out / 'paths_eps.csv').exists()
    estimates = json.loads((out / 'estimates.json').read_text())
    assert estimates['which'] == 'eps'
    assert estimates['estimates'][0]['method'] == 'exit_side_probability'


def test_verify_command(run_config, tmp_path):
    path, _ = run_config
    out = tmp_path / 'verify'
    assert _run(path, out, 'verify') == EXIT_OK
    report = json.loads((out / 'report.json').read_text())
    assert report['verdict'] == 'pass'
    assert (out / 'checks.csv').read_text().startswith('name,predicted,estimated')


def test_negative_control_fails_verdict(run_config, tmp_path):
    path, _ = run_config
    out = tmp_path / 'control'
    assert _run(path, out, 'verify', '--negative-control', 'alpha2x') == EXIT_FAILED_VERDICT
    report = json.loads((out / 'report.json').read_text())
    assert report['provenance']['negative_control'] == 'alpha2x'
    assert 'zero_field_alpha' in report['failed']


def test_stage_failure_exit_code(tmp_path):
    config = {'field': {'name': 'expression', 'components': ['0', 'x2']},
              'grid': {'resolution': 16}, 'output': {'dir': str(tmp_path / 'bad')},
              'logging': {'level': 'WARNING'}}
    path = tmp_path / 'bad.yaml'
    path.write_text(yaml.safe_dump(config))
    assert main(['--config', str(path), 'model']) == EXIT_ERROR


def test_simulate_eps_uses_tail_diffusivity(run_config, tmp_path, monkeypatch):
    _, config = run_config
    config = dict(config, field={'name': 'gradient1d', 'params': {'cos_coeffs': [0.5]}},
                  simulation=dict(config['simulation'], n_paths=50))
    path = tmp_path / 'gradient.yaml'
    path.write_text(yaml.safe_dump(config))
    seen = []
    real = main_module.exit_statistics

    def recording(field, eps, x0, delta, n, seed, dt=None, d11_min=1.0, **kwargs):
        seen.append(d11_min)
        return real(field, eps, x0, delta, n, seed, dt, d11_min, **kwargs)

    monkeypatch.setattr(main_module, 'exit_statistics', recording)
    assert _run(path, tmp_path / 'sim', 'simulate') == EXIT_OK
    assert len(seen) == 1
    assert seen[0] == pytest.approx(1.0 / i0(1.0) ** 2, abs=5e-3)
