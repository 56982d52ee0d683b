import csv

import numpy as np
import pytest

from fields.builtins import builtin_field, field_from_config, paper_shear_integral
from fields.drift_field import (InterfaceDrift, PeriodicDrift, export_drift_table, reflect_field,
                                sample_on_grid, tails_identical, validate_drift)
from fields.expression import expression_field
from fields.grid import GridSpec, unit_cell_weights
from fields.profiles import bump, bump_mass, quintic_switch, smooth_switch
from homogenization.errors import ConfigError, InvalidFieldError


# ===== PROFILES =====

def test_bump_support():
    s = np.array([-1.0, -0.5, 0.0, 0.5, 1.0, 1.5])
    values = bump(s)
    assert values[0] == 0.0 and values[-1] == 0.0 and values[-2] == 0.0
    assert values[2] == pytest.approx(np.exp(-1.0))
    assert values[1] == pytest.approx(values[3])


def test_bump_mass():
    s = np.linspace(-1.0, 1.0, 200001)
    assert bump_mass() == pytest.approx(np.trapz(bump(s), s), abs=1e-9)


@pytest.mark.parametrize('switch', [smooth_switch, quintic_switch])
def test_switch_endpoints_and_symmetry(switch):
    t = np.linspace(-0.5, 1.5, 41)
    values = switch(t)
    assert np.all(values[t <= 0] == 0.0)
    assert np.all(values[t >= 1] == 1.0)
    assert np.all(np.diff(values) >= 0)
    assert np.allclose(switch(1.0 - t) + values, 1.0)


# ===== GRID =====

def test_grid_rejects_coarse_resolution():
    with pytest.raises(ConfigError):
        GridSpec.build(2, 4, 5)


def test_grid_strip_must_cover_interface():
    grid = GridSpec.build(2, 16, 3)
    grid.check_strip(1.0)
    with pytest.raises(ConfigError):
        grid.check_strip(1.5)


def test_grid_from_config_default_strip():
    grid = GridSpec.from_config({'resolution': [32, 16]}, 2, 1.0)
    assert grid.resolution == (32, 16)
    assert grid.strip_half_width == 9


def test_coarsened_halves_fine_axes():
    grid = GridSpec.build(3, [32, 16, 8], 5)
    assert grid.coarsened().resolution == (16, 8, 8)
    with pytest.raises(ConfigError):
        GridSpec.build(2, 8, 5).coarsened()


def test_unit_cell_weights_cover_one_period():
    grid = GridSpec.build(2, 16, 4)
    for side in ('plus', 'minus'):
        for j in range(4):
            assert unit_cell_weights(grid, side, j).sum() == pytest.approx(1.0)
    assert unit_cell_weights(grid, 'plus', 4) is None


def test_unit_cells_tile_the_strip():
    grid = GridSpec.build(2, 8, 3)
    total = sum(unit_cell_weights(grid, side, j) for side in ('plus', 'minus') for j in range(3))
    h = grid.spacing[0]
    expected = np.full(grid.strip_length + 1, h)
    expected[0] = expected[-1] = 0.5 * h
    assert np.allclose(total, expected)


# ===== BUILTIN FIELDS =====

def test_unknown_builtin():
    with pytest.raises(ConfigError):
        builtin_field('vortex')


def test_dimension_below_two():
    with pytest.raises(ConfigError):
        builtin_field('zero', {'dimension': 1})


def test_paper_shear_is_planar():
    with pytest.raises(ConfigError):
        builtin_field('paper_shear', {'dimension': 3})


def test_paper_shear_vanishes_outside_interface(small_grid):
    field = builtin_field('paper_shear', {'amplitude': 2.0, 'half_width': 1.0})
    points = small_grid.strip_points()
    values = field(points)
    outside = np.abs(points[:, 0]) >= 1.0
    assert np.all(values[outside] == 0.0)
    assert np.all(values[:, 0] == 0.0)
    assert values[~outside, 1].max() > 0.0
    assert paper_shear_integral(field) == pytest.approx(2.0 * bump_mass())


BUILTIN_CASES = [
    ('zero', {}),
    ('paper_shear', {}),
    ('torus_shear', {'c': 0.7}),
    ('gradient1d', {'cos_coeffs': [0.5, 0.1]}),
    ('two_sided', {'amplitude': 1.0}),
    ('zero', {'dimension': 3}),
]


@pytest.mark.parametrize('name,params', BUILTIN_CASES)
def test_builtins_validate(name, params):
    field = builtin_field(name, params)
    grid = GridSpec.build(field.dimension, 8, 4)
    report = validate_drift(field, grid)
    assert report.passed, report.to_dict()


@pytest.mark.parametrize('name,params', BUILTIN_CASES)
def test_validation_verdict_is_resolution_independent(name, params):
    field = builtin_field(name, params)
    verdicts = []
    for n in (32, 64):
        grid = GridSpec.build(field.dimension, [n] + [16] * (field.dimension - 1), 4)
        verdicts.append(validate_drift(field, grid).passed)
    assert verdicts == [True, True]


def test_sample_on_grid_is_deterministic(small_grid):
    field = builtin_field('two_sided', {'amplitude': 1.0})
    first = sample_on_grid(field, small_grid)
    second = sample_on_grid(field, small_grid)
    assert first.shape == second.shape == small_grid.strip_shape
    assert first.points.tobytes() == second.points.tobytes()
    assert first.values.tobytes() == second.values.tobytes()


def test_zero_field_sup_norm(zero_field, small_grid):
    assert validate_drift(zero_field, small_grid).sup_norm == 0.0


def test_interface_drift_contract():
    tail = PeriodicDrift(2, lambda x: np.zeros_like(x))
    with pytest.raises(InvalidFieldError):
        InterfaceDrift(2, 0.0, tail.evaluator, tail, tail)
    with pytest.raises(InvalidFieldError):
        InterfaceDrift(2, 1.0, tail.evaluator, PeriodicDrift(3, tail.evaluator), tail)


def test_non_finite_drift_rejected(small_grid):
    def broken(x):
        out = np.zeros_like(x)
        out[..., 1] = 1.0 / (x[..., 0] - x[..., 0])
        return out
    tail = PeriodicDrift(2, lambda x: np.zeros_like(x))
    field = InterfaceDrift(2, 1.0, broken, tail, tail, 'broken')
    with np.errstate(divide='ignore', invalid='ignore'):
        with pytest.raises(InvalidFieldError):
            validate_drift(field, small_grid)


def test_tails_identical(shear_field, small_grid):
    assert tails_identical(shear_field, small_grid)
    assert not tails_identical(builtin_field('two_sided'), small_grid)


def test_reflection_is_an_involution(small_grid):
    field = builtin_field('two_sided', {'A_plus': 0.5, 'c_minus': 1.0, 'amplitude': 1.0})
    twice = reflect_field(reflect_field(field))
    points = small_grid.strip_points()
    assert np.allclose(twice(points), field(points), atol=1e-14)

    once = reflect_field(field)
    mirrored = points.copy()
    mirrored[:, 0] = -mirrored[:, 0]
    assert np.allclose(once(points)[:, 0], -field(mirrored)[:, 0], atol=1e-14)
    assert np.allclose(once(points)[:, 1], field(mirrored)[:, 1], atol=1e-14)
    assert validate_drift(once, small_grid).passed


# ===== EXPRESSIONS =====

def test_expression_field_matches_builtin(small_grid):
    field = expression_field(['0', 'sin(2 * pi * x1)'])
    shear = builtin_field('torus_shear', {'c': 1.0})
    points = small_grid.strip_points()
    assert np.allclose(field(points), shear(points), atol=1e-14)


def test_expression_rejects_unknown_names():
    with pytest.raises(ConfigError):
        expression_field(['0', '__import__("os")'])
    with pytest.raises(ConfigError):
        expression_field(['0', 'x3'])
    with pytest.raises(ConfigError):
        expression_field(['0', 'sin(x1'])


def test_expression_non_periodic_fails_validation(small_grid):
    field = expression_field(['0', 'x2'])
    report = validate_drift(field, small_grid)
    assert not report.passed
    assert report.periodicity_violation == pytest.approx(1.0)


def test_expression_localized_profile(small_grid):
    field = field_from_config({
        'name': 'expression',
        'components': ['0', 'where(abs(x1) < 1, cos(pi * x1 / 2) ** 4, 0)'],
        'plus_components': ['0', '0'],
        'minus_components': ['0', '0'],
    })
    report = validate_drift(field, small_grid)
    assert report.passed, report.to_dict()


# ===== SAMPLING =====

def test_export_drift_table(tmp_path, shear_field):
    grid = GridSpec.build(2, 8, 3)
    table = sample_on_grid(shear_field, grid)
    assert table.column(1).shape == grid.strip_shape
    path = tmp_path / 'drift.csv'
    export_drift_table(table, path)
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['x1', 'x2', 'b1', 'b2']
    assert len(rows) == 1 + int(np.prod(grid.strip_shape))
