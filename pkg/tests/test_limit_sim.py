from dataclasses import replace

import numpy as np
import pytest

from homogenization.effective_model import GluingTestFunction, assemble_model, glued_test_function
from homogenization.errors import ModelInvariantError, SimulationParameterError
from simulation.estimates import Estimate
from simulation.limit_sim import (SkewStepper, martingale_residual, phi, phi_inverse, simulate_limit,
                                  simulate_skew_bm, time_on_positive_side)
from verification.oracles import expected_local_time

ODD_DT = 1.0 / 999.0


@pytest.mark.parametrize('p, dt, backend', [
    (0.0, 0.01, 'grid_walk'),
    (1.0, 0.01, 'grid_walk'),
    (0.5, 0.0, 'grid_walk'),
    (0.5, 0.01, 'rejection'),
])
def test_stepper_rejects_bad_parameters(p, dt, backend):
    with pytest.raises(SimulationParameterError):
        SkewStepper(p, dt, backend)


# ===== SKEW BROWNIAN MOTION =====

def test_grid_walk_side_probability():
    paths = simulate_skew_bm(0.7, 1.0, ODD_DT, 4000, seed=11, save_points=10)
    assert paths.dt == pytest.approx(ODD_DT)
    final = paths.Z[:, -1]
    assert np.all(final != 0.0)
    assert Estimate.from_count(int(np.sum(final > 0)), final.size, 'side').within(0.7, k=4.0)


def test_grid_walk_local_time_and_martingale_part():
    paths = simulate_skew_bm(0.7, 1.0, ODD_DT, 4000, seed=12, save_points=10)
    local = Estimate.from_samples(paths.L[:, -1], 'local_time')
    assert local.within(expected_local_time(1.0), k=4.0)
    assert Estimate.from_samples(paths.W[:, -1], 'martingale').within(0.0, k=4.0)
    assert np.all(np.diff(paths.L, axis=1) >= 0.0)


def test_euler_mollified_side_probability_and_local_time():
    paths = simulate_skew_bm(0.3, 1.0, 1e-3, 2000, seed=13, backend='euler_mollified', save_points=10)
    final = paths.Z[:, -1]
    assert Estimate.from_count(int(np.sum(final > 0)), final.size, 'side').within(0.3, k=4.0)
    assert abs(paths.L[:, -1].mean() - expected_local_time(1.0)) < 0.06


def test_skew_paths_independent_of_threads():
    one = simulate_skew_bm(0.6, 0.1, 1e-3, 50, seed=3, block_size=16, threads=1)
    two = simulate_skew_bm(0.6, 0.1, 1e-3, 50, seed=3, block_size=16, threads=4)
    assert np.array_equal(one.Z, two.Z)
    assert np.array_equal(one.L, two.L)


# ===== LIMIT PROCESS =====

def test_phi_round_trip():
    model = assemble_model(np.diag([4.0, 1.0]), np.diag([0.25, 1.0]), 0.5, 0.5, [0.0])
    assert phi(np.array([1.0, -1.0]), model) == pytest.approx([2.0, -0.5])
    assert phi_inverse(2.0, model) == pytest.approx(1.0)
    assert phi_inverse(-0.5, model) == pytest.approx(-1.0)
    assert phi_inverse(0.0, model) == 0.0


def test_brownian_limit_variance(brownian_model):
    ensemble = simulate_limit(brownian_model, None, 1.0, 1e-3, 2000, seed=21, save_points=10)
    assert ensemble.states.shape == (2000, 11, 2)
    assert ensemble.local_time.shape == (2000, 11)
    second = Estimate.from_samples(ensemble.final[:, 1] ** 2, 'variance')
    assert second.within(1.0, k=4.0)


def test_transverse_drift_along_local_time():
    model = assemble_model(np.eye(2), np.eye(2), 0.5, 0.5, [0.3])
    ensemble = simulate_limit(model, None, 1.0, 1e-3, 2000, seed=22, save_points=10)
    assert ensemble.local_time[:, -1].mean() > 0.5
    centred = ensemble.final[:, 1] - 0.3 * ensemble.local_time[:, -1]
    assert Estimate.from_samples(centred, 'centred').within(0.0, k=4.0)
    assert Estimate.from_samples(ensemble.final[:, 1], 'drifted').value > 0.1


def test_limit_rejects_broken_model(brownian_model):
    with pytest.raises(ModelInvariantError):
        simulate_limit(replace(brownian_model, p_minus=0.6), None, 1.0, 1e-2, 10, seed=1)
    with pytest.raises(SimulationParameterError):
        simulate_limit(brownian_model, [0.0, 0.0, 0.0], 1.0, 1e-2, 10, seed=1)


def test_time_on_positive_side():
    model = assemble_model(np.eye(2), np.eye(2), 0.7, 0.3, [0.0])
    assert model.skew_p == pytest.approx(0.7)
    ensemble = simulate_limit(model, None, 1.0, 1e-3, 2000, seed=23, save_points=10)
    estimate = time_on_positive_side(ensemble)
    assert abs(estimate.value - 0.7) < 0.05


# ===== MARTINGALE PROBLEM =====

def test_martingale_residual_vanishes(brownian_model):
    ensemble = simulate_limit(brownian_model, None, 1.0, 1e-3, 2000, seed=24, save_points=None)
    f = glued_test_function(brownian_model, slope_minus=1.0, tangential=[0.5], curvature=1.0)
    estimate = martingale_residual(ensemble, f, lam=1.0)
    assert estimate.params['gluing_residual'] == pytest.approx(0.0, abs=1e-15)
    assert estimate.within(0.0, k=4.0)


def test_martingale_residual_needs_glued_function(brownian_model):
    ensemble = simulate_limit(brownian_model, None, 0.1, 1e-2, 10, seed=1)
    kinked = GluingTestFunction(slope_plus=1.0, slope_minus=2.0, tangential=(0.0,))
    with pytest.raises(ModelInvariantError):
        martingale_residual(ensemble, kinked, lam=1.0)
    assert martingale_residual(ensemble, kinked, lam=1.0, enforce_gluing=False).n == 10
    with pytest.raises(SimulationParameterError):
        martingale_residual(ensemble, kinked, lam=0.0)
