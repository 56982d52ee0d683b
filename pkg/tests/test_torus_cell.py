import math

import numpy as np
import pytest
from scipy.special import i0

from fields.builtins import builtin_field, potential
from fields.drift_field import PeriodicDrift
from fields.grid import GridSpec
from homogenization.errors import CenteringError, ConfigError, ModelInvariantError
from homogenization.grid_operators import apply_generator, generator_matrix
from homogenization.torus_cell import (DiffusionTensor, SolverSettings, check_centering, corrector,
                                       effective_tensor, extrapolated_tensor, solve_cell,
                                       stationary_density)
from verification.oracles import two_integral_d11


def test_generator_matrix_matches_stencils():
    grid = GridSpec.build(2, 8, 3)
    rng = np.random.default_rng(3)
    drift = rng.standard_normal((2,) + grid.resolution)
    values = rng.standard_normal(grid.resolution)
    dense = generator_matrix(drift, grid.spacing) @ values.ravel()
    assert np.allclose(dense, apply_generator(values, drift, grid.spacing).ravel(), atol=1e-10)


def test_zero_drift_cell(zero_field):
    grid = GridSpec.build(2, 16, 3)
    cell = solve_cell(zero_field.plus, grid)
    assert np.allclose(cell.density.values, 1.0, atol=1e-12)
    assert np.allclose(cell.corrector.values, 0.0)
    assert np.allclose(cell.tensor.matrix, np.eye(2), atol=1e-12)
    assert cell.tensor.error_indicator == pytest.approx(0.0, abs=1e-12)


def test_shear_density_is_uniform(shear_field):
    grid = GridSpec.build(2, 32, 3)
    mu = stationary_density(shear_field.plus, grid)
    assert mu.total == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(mu.values, 1.0, atol=1e-10)
    assert np.allclose(check_centering(shear_field.plus, mu), 0.0, atol=1e-12)


@pytest.mark.parametrize('n', [16, 32, 64])
def test_shear_tensor_discrete_closed_form(n):
    c = 1.3
    b = builtin_field('torus_shear', {'c': c}).plus
    grid = GridSpec.build(2, [n, 16], 3)
    cell = solve_cell(b, grid, SolverSettings(extrapolate=False))
    h = 1.0 / n
    expected = 1.0 + 0.5 * c * c * (h / math.tan(math.pi * h)) ** 2
    D = cell.tensor.matrix
    assert D[1, 1] == pytest.approx(expected, abs=1e-10)
    assert D[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert D[0, 1] == pytest.approx(0.0, abs=1e-10)


def test_shear_tensor_continuum_limit():
    c = 1.0
    b = builtin_field('torus_shear', {'c': c}).plus
    grid = GridSpec.build(2, [64, 16], 3)
    tensor = extrapolated_tensor(b, grid)
    assert tensor.matrix[1, 1] == pytest.approx(1.0 + c * c / (2.0 * math.pi ** 2), abs=1.5e-5)
    assert tensor.error_indicator > 0.0


@pytest.mark.parametrize('amplitude', [0.5, 1.0])
def test_gradient_tensor_two_integral_formula(amplitude):
    field = builtin_field('gradient1d', {'cos_coeffs': [amplitude]})
    grid = GridSpec.build(2, [256, 8], 3)
    cell = solve_cell(field.plus, grid)
    exact = 1.0 / i0(2.0 * amplitude) ** 2
    assert two_integral_d11(potential([amplitude], [])) == pytest.approx(exact, rel=1e-10)
    assert cell.tensor.matrix[0, 0] == pytest.approx(exact, abs=1e-5)
    assert cell.tensor.matrix[1, 1] == pytest.approx(1.0, abs=1e-10)
    assert cell.tensor.matrix[0, 1] == pytest.approx(0.0, abs=1e-10)


def test_gradient_density_is_gibbs():
    amplitude = 0.5
    field = builtin_field('gradient1d', {'cos_coeffs': [amplitude]})
    grid = GridSpec.build(2, [256, 8], 3)
    mu = stationary_density(field.plus, grid)
    x1 = grid.axis_nodes(0)
    gibbs = np.exp(-2.0 * amplitude * np.cos(2.0 * np.pi * x1)) / i0(2.0 * amplitude)
    assert np.max(np.abs(mu.values[:, 0] - gibbs)) < 2e-3 * gibbs.max()
    assert np.allclose(mu.values, mu.values[:, :1])


def test_corrector_is_centered(shear_field):
    grid = GridSpec.build(2, 32, 3)
    mu = stationary_density(shear_field.plus, grid)
    corr = corrector(shear_field.plus, mu)
    assert np.allclose(mu.integrate(corr.values), 0.0, atol=1e-12)
    assert np.all(corr.residuals < 1e-10)
    assert np.allclose(corr.multipliers, 0.0, atol=1e-12)


def test_uncentered_tail_is_refused():
    def constant(x):
        out = np.zeros_like(x)
        out[..., 0] = 0.5
        return out
    b = PeriodicDrift(2, constant, 'constant')
    grid = GridSpec.build(2, 16, 3)
    with pytest.raises(CenteringError):
        solve_cell(b, grid)


def test_corrector_grid_mismatch(shear_field):
    mu = stationary_density(shear_field.plus, GridSpec.build(2, 16, 3))
    with pytest.raises(ConfigError):
        corrector(shear_field.plus, mu, GridSpec.build(2, 32, 3))


def test_tensor_is_symmetric_psd():
    field = builtin_field('two_sided', {'A_plus': 0.5, 'c_plus': 0.8})
    grid = GridSpec.build(2, 32, 3)
    cell = solve_cell(field.plus, grid)
    cell.tensor.check()
    assert np.all(cell.tensor.eigenvalues > 0.0)
    assert np.array_equal(cell.tensor.matrix, cell.tensor.matrix.T)
    summary = cell.summary()
    assert summary['side'] == 'plus'
    assert len(summary['D']) == 2


def test_tensor_check_rejects_indefinite():
    with pytest.raises(ModelInvariantError):
        DiffusionTensor(matrix=np.array([[1.0, 0.0], [0.0, -1.0]])).check()


def test_effective_tensor_of_zero_corrector():
    grid = GridSpec.build(3, 8, 3)
    b = builtin_field('zero', {'dimension': 3}).plus
    mu = stationary_density(b, grid)
    tensor = effective_tensor(corrector(b, mu), mu)
    assert np.allclose(tensor.matrix, np.eye(3), atol=1e-12)


def test_effective_tensor_matches_pointwise_sum(shear_field):
    grid = GridSpec.build(2, [32, 16], 3)
    mu = stationary_density(shear_field.plus, grid)
    corr = corrector(shear_field.plus, mu, grid)
    sigma = corr.sigma_tilde
    expected = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                expected[i, j] += np.sum(sigma[i, k] * sigma[j, k] * mu.values) * mu.weight
    tensor = effective_tensor(corr, mu)
    assert np.allclose(tensor.matrix, expected, rtol=1e-12, atol=1e-14)


def _builtin_tails():
    cases = [('zero', {}), ('paper_shear', {}), ('torus_shear', {'c': 0.7}),
             ('gradient1d', {'cos_coeffs': [0.5, 0.1]}), ('two_sided', {'amplitude': 1.0})]
    tails = []
    for name, params in cases:
        field = builtin_field(name, params)
        tails.append(pytest.param(field.plus, id=f'{name}-plus'))
        if field.minus is not field.plus:
            tails.append(pytest.param(field.minus, id=f'{name}-minus'))
    return tails


@pytest.mark.parametrize('tail', _builtin_tails())
def test_extrapolated_tensor_refinement(tail):
    coarse = extrapolated_tensor(tail, GridSpec.build(2, [64, 16], 3))
    fine = extrapolated_tensor(tail, GridSpec.build(2, [128, 16], 3))
    assert np.max(np.abs(fine.matrix - coarse.matrix)) <= 1e-4
