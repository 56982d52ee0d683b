import math
from dataclasses import replace

import numpy as np
import pytest

from fields.builtins import builtin_field, paper_shear_integral
from fields.drift_field import reflect_field
from fields.grid import GridSpec
from homogenization.compensator import build_compensator
from homogenization.effective_model import (EffectiveModel, GluingTestFunction, assemble_model,
                                            asymptotic_side_probability, gluing_residual,
                                            glued_test_function, lower_factor, perturbed_model,
                                            reflect_model, skew_parameter, transmissivity)
from homogenization.errors import InvalidFieldError, ModelInvariantError
from homogenization.model_builder import ModelSettings, build_model, solve_cells, tail_d11_min
from utils.config_loader import merge_defaults


# ===== FORMULAS =====

def test_transmissivity():
    p_plus, p_minus = transmissivity(0.3, 0.7, 2.0, 1.0)
    assert p_plus == pytest.approx(0.6 / 1.3)
    assert p_plus + p_minus == 1.0
    with pytest.raises(ModelInvariantError):
        transmissivity(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ModelInvariantError):
        transmissivity(0.5, 0.5, 1.0, -1.0)


def test_skew_parameter():
    assert skew_parameter(0.5, 0.5, 3.0, 3.0) == pytest.approx(0.5)
    assert skew_parameter(0.6, 0.4, 4.0, 1.0) == pytest.approx(0.6 / 1.4)


@pytest.mark.parametrize('matrix', [
    [[2.0, 0.5], [0.5, 1.0]],
    [[1.0, 0.0], [0.0, 1.0]],
    [[1.5, 0.2, -0.3], [0.2, 1.0, 0.1], [-0.3, 0.1, 0.8]],
])
def test_lower_factor(matrix):
    D = np.array(matrix)
    M = lower_factor(D)
    assert np.allclose(M @ M.T, D, atol=1e-12)
    assert M[0, 0] == math.sqrt(D[0, 0])
    assert np.all(M[0, 1:] == 0.0)
    assert np.allclose(np.triu(M, 1), 0.0)


def test_lower_factor_rejects_indefinite():
    with pytest.raises(ModelInvariantError):
        lower_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_assemble_model_structure():
    D_plus = np.array([[2.0, 0.3], [0.3, 1.5]])
    model = assemble_model(D_plus, np.eye(2), 0.4, 0.6, [0.25])
    assert model.p_plus == pytest.approx(0.8 / 1.4)
    assert model.K[0] == model.p_plus - model.p_minus
    assert np.array_equal(model.K[1:], model.alpha)
    assert 0.0 < model.skew_p < 1.0
    assert asymptotic_side_probability(model) == model.skew_p
    assert model.local_time_factor == pytest.approx(
        model.skew_p * math.sqrt(2.0) + (1.0 - model.skew_p))


def test_assemble_model_shapes():
    with pytest.raises(ModelInvariantError):
        assemble_model(np.eye(2), np.eye(2), 0.5, 0.5, [0.0, 1.0])
    with pytest.raises(ModelInvariantError):
        assemble_model(np.eye(2), np.eye(3), 0.5, 0.5, [0.0])


def test_check_catches_tampering(brownian_model):
    with pytest.raises(ModelInvariantError):
        replace(brownian_model, p_minus=0.6).check()
    with pytest.raises(ModelInvariantError):
        replace(brownian_model, alpha=np.array([1.0])).check()
    with pytest.raises(ModelInvariantError):
        replace(brownian_model, M_plus=2.0 * np.eye(2)).check()


def test_model_dict_roundtrip():
    model = assemble_model([[2.0, 0.3], [0.3, 1.5]], np.eye(2), 0.4, 0.6, [0.25])
    again = EffectiveModel.from_dict(model.to_dict())
    assert again.p_plus == model.p_plus
    assert np.array_equal(again.M_plus, model.M_plus)
    assert model.to_dict({'seed': 3})['provenance'] == {'seed': 3}


def test_reflect_model():
    model = assemble_model([[2.0, 0.3], [0.3, 1.5]], np.eye(2), 0.4, 0.6, [0.25])
    mirrored = reflect_model(model)
    assert mirrored.p_plus == pytest.approx(model.p_minus)
    assert mirrored.D_plus[0, 1] == pytest.approx(0.0)
    assert mirrored.D_minus[0, 1] == pytest.approx(-0.3)
    assert np.array_equal(mirrored.alpha, model.alpha)


# ===== GLUING =====

def test_glued_test_function_has_zero_residual():
    model = assemble_model([[2.0, 0.3], [0.3, 1.5]], np.eye(2), 0.4, 0.6, [0.25])
    f = glued_test_function(model, slope_minus=1.0, tangential=[1.0], curvature=1.0)
    assert abs(gluing_residual(f, model)) < 1e-15
    with pytest.raises(ValueError):
        glued_test_function(model, tangential=[1.0, 2.0])


def test_gluing_test_function_values(brownian_model):
    f = GluingTestFunction(slope_plus=2.0, slope_minus=1.0, tangential=(3.0,), curvature=1.0)
    x = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, 2.0]])
    assert np.allclose(f.value(x), [2.0 + 0.5 + 3.0, -1.0 + 0.5, 6.0])
    assert np.allclose(f.generator(x, brownian_model), 0.5)
    assert gluing_residual(f, brownian_model) == pytest.approx(0.5 * 2.0 - 0.5 * 1.0 + 0.0)


# ===== NEGATIVE CONTROLS =====

def test_alpha2x(brownian_model):
    small = perturbed_model(brownian_model, 'alpha2x')
    assert np.allclose(small.alpha, [0.5])
    large = perturbed_model(assemble_model(np.eye(2), np.eye(2), 0.5, 0.5, [0.4]), 'alpha2x')
    assert np.allclose(large.alpha, [0.8])
    assert np.array_equal(large.K[1:], large.alpha)


def test_swap_p():
    model = assemble_model(np.eye(2), np.eye(2), 0.3, 0.7, [0.0])
    swapped = perturbed_model(model, 'swap-p')
    assert swapped.p_plus == pytest.approx(model.p_minus)
    near = perturbed_model(assemble_model(np.eye(2), np.eye(2), 0.5, 0.5, [0.0]), 'swap-p')
    assert near.p_plus == 0.8
    assert near.skew_p == pytest.approx(0.8)
    with pytest.raises(ValueError):
        perturbed_model(model, 'double')


# ===== COMPENSATOR =====

def test_compensator_matches_tails_away_from_interface():
    grid = GridSpec.build(2, 8, 4)
    rng = np.random.default_rng(0)
    g_plus = rng.standard_normal((2, 8, 8))
    g_minus = rng.standard_normal((2, 8, 8))
    comp = build_compensator(g_plus, g_minus, grid, half_width=1.0)
    nodes = grid.torus_points()
    right = comp(nodes + np.array([3.0, 0.0]))
    left = comp(nodes + np.array([-3.0, 0.0]))
    assert np.allclose(right, g_plus.reshape(2, -1).T, atol=1e-12)
    assert np.allclose(left, g_minus.reshape(2, -1).T, atol=1e-12)
    assert comp.support_half_width == 2.0
    with pytest.raises(ValueError):
        build_compensator(g_plus, g_minus, grid, 1.0, blend='linear')
    with pytest.raises(ValueError):
        build_compensator(g_plus, g_minus[:, :4], grid, 1.0)


# ===== MODEL BUILDER =====

def test_tail_d11_min_takes_smaller_tail(small_grid):
    field = builtin_field('two_sided', {'A_plus': 0.5, 'c_minus': 1.0})
    plus, minus = solve_cells(field, small_grid)
    assert plus.tensor.matrix[0, 0] < 1.0
    assert tail_d11_min((plus, minus)) == min(plus.tensor.matrix[0, 0], minus.tensor.matrix[0, 0])
    assert tail_d11_min((plus, minus)) == plus.tensor.matrix[0, 0]


def test_zero_field_model(zero_field, small_grid):
    artifacts = build_model(zero_field, small_grid)
    model = artifacts.model
    assert model.p_plus == 0.5
    assert np.allclose(model.D_plus, np.eye(2), atol=1e-10)
    assert np.allclose(model.alpha, 0.0, atol=1e-12)
    assert artifacts.diagnostics['compensator_invariance'] == pytest.approx(0.0, abs=1e-12)
    assert artifacts.diagnostics['beta'] == pytest.approx(2.0, abs=1e-10)
    assert 'strip_monte_carlo' not in artifacts.diagnostics


def test_shared_shear_tails_give_no_interface_drift(shear_field, small_grid):
    model = build_model(shear_field, small_grid).model
    assert model.p_plus == pytest.approx(0.5, abs=1e-10)
    assert abs(model.alpha[0]) < 1e-8
    assert model.D_plus[1, 1] == pytest.approx(1.0 + 1.0 / (2.0 * math.pi ** 2), abs=1e-4)


def test_paper_shear_alpha_is_profile_integral():
    field = builtin_field('paper_shear', {'amplitude': 1.0, 'half_width': 1.0})
    grid = GridSpec.build(2, 32, 9)
    artifacts = build_model(field, grid)
    assert artifacts.model.p_plus == 0.5
    assert artifacts.model.alpha[0] == pytest.approx(paper_shear_integral(field), abs=1e-5)
    assert artifacts.alternate_alpha[0] == pytest.approx(artifacts.model.alpha[0], abs=1e-12)


def test_reflected_field_gives_reflected_model(small_grid):
    field = builtin_field('two_sided', {'A_plus': 0.5, 'c_minus': 1.0, 'amplitude': 1.0})
    model = build_model(field, small_grid).model
    mirrored = build_model(reflect_field(field), small_grid).model
    assert mirrored.p_plus == pytest.approx(model.p_minus, abs=1e-9)
    assert mirrored.q_plus == pytest.approx(model.q_minus, abs=1e-9)
    assert np.allclose(mirrored.alpha, model.alpha, atol=1e-8)
    assert mirrored.d11('plus') == pytest.approx(model.d11('minus'), abs=1e-9)
    assert abs(model.alpha[0]) > 1e-3
    assert abs(model.p_plus - 0.5) > 1e-3


def test_invalid_field_is_refused(small_grid):
    from fields.expression import expression_field
    with pytest.raises(InvalidFieldError):
        build_model(expression_field(['0', 'x2']), small_grid)


def test_builtin_with_non_finite_amplitude_is_refused_by_build(small_grid):
    field = builtin_field('torus_shear', {'c': float('inf')})
    with pytest.raises(InvalidFieldError):
        build_model(field, small_grid)


def test_model_settings_from_config():
    config = merge_defaults({'model': {'blend': 'quintic', 'alternate_blend': 'smooth'},
                             'solver': {'extrapolate': False},
                             'strip': {'monte_carlo': {'enabled': True}}})
    settings = ModelSettings.from_config(config)
    assert settings.blend == 'quintic'
    assert settings.solver.extrapolate is False
    assert settings.monte_carlo.enabled is True
    assert settings.fit.threshold == 1e-3


@pytest.mark.slow
def test_monte_carlo_diagnostics(zero_field, small_grid):
    config = merge_defaults({'strip': {'monte_carlo': {'enabled': True, 'chains': 8, 'cycles': 2,
                                                       'far_plane': 2}}})
    artifacts = build_model(zero_field, small_grid, ModelSettings.from_config(config), seed=3)
    mc = artifacts.diagnostics['strip_monte_carlo']
    assert mc['R'] == 4
    assert 0.0 < mc['q_plus']['value'] < 1.0
