"""
Simulation of the homogenized limit process

The normal coordinate is X_1 = phi(Z) with phi(z) = sqrt(D+-_11) z and Z a
skew Brownian motion with parameter p. With symmetric local times,
L^{X_1} = (p sqrt(D+_11) + (1 - p) sqrt(D-_11)) L^Z, and the martingale
part of Z is W = Z - (2p - 1) L^Z. The transverse coordinates follow
v+- dW + M~+- dW~ + alpha dL^{X_1}, where (v, M~) are the lower rows of the
factor M+- of the side the path is on at the start of the step
(x1 = 0 counts as the - side).

Backends:
  grid_walk        walk on h Z with time step h^2, biased p / (1 - p) at 0,
                   L^Z = h * (visits to 0)
  euler_mollified  exact skew-BM transition per step (reflected Gaussian
                   step, sign resampled when the bridge hits 0), L^Z from
                   the occupation of the band (-sqrt(dt), sqrt(dt))
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from homogenization.effective_model import EffectiveModel, GluingTestFunction, gluing_residual
from homogenization.errors import ModelInvariantError, SimulationParameterError
from simulation.ensemble import PathEnsemble, save_schedule
from simulation.estimates import Estimate
from simulation.random_streams import DEFAULT_BLOCK_SIZE, run_blocks

logger = logging.getLogger(__name__)

BACKENDS = ('grid_walk', 'euler_mollified')
GLUING_TOLERANCE = 1e-12


@dataclass
class SkewPaths:
    times: np.ndarray
    Z: np.ndarray
    L: np.ndarray
    W: np.ndarray
    p: float
    backend: str
    dt: float
    seed: int
    params: Dict[str, Any] = dataclass_field(default_factory=dict)


class SkewStepper:
    """One backend step for a block of skew Brownian paths"""

    def __init__(self, p: float, dt: float, backend: str):
        if not 0.0 < p < 1.0:
            raise SimulationParameterError(f"Skew parameter must lie in (0, 1), got {p}")
        if backend not in BACKENDS:
            raise SimulationParameterError(f"Unknown backend {backend!r}; choose from {BACKENDS}")
        if not dt > 0:
            raise SimulationParameterError(f"dt must be positive, got {dt}")
        self.p = p
        self.dt = dt
        self.backend = backend
        self.h = math.sqrt(dt)
        self.tilt = 2.0 * p - 1.0

    def initial(self, z0: float, m: int) -> np.ndarray:
        """Grid walks start on the lattice point nearest to z0"""
        if self.backend == 'grid_walk':
            return np.full(m, int(round(z0 / self.h)), dtype=np.int64)
        return np.full(m, float(z0))

    def position(self, state: np.ndarray) -> np.ndarray:
        if self.backend == 'grid_walk':
            return state * self.h
        return state

    def step(self, state: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance one step; returns (new state, dL^Z, dW)"""
        if self.backend == 'grid_walk':
            at_zero = state == 0
            u = rng.random(state.shape)
            up = u < np.where(at_zero, self.p, 0.5)
            move = np.where(up, 1, -1)
            d_local = self.h * at_zero
            d_w = self.h * move - self.tilt * d_local
            return state + move, d_local, d_w

        z = state
        a = np.abs(z)
        r = np.abs(a + self.h * rng.standard_normal(z.shape))
        crossing = rng.random(z.shape) < np.exp(-2.0 * a * r / self.dt)
        fresh = np.where(rng.random(z.shape) < self.p, 1.0, -1.0)
        sign = np.where(crossing, fresh, np.sign(z))
        new = sign * r
        d_local = (self.dt / (2.0 * self.h)) * (a < self.h)
        d_w = (new - z) - self.tilt * d_local
        return new, d_local, d_w


def _steps(T: float, dt: float) -> Tuple[int, float]:
    if not T > 0:
        raise SimulationParameterError(f"Horizon must be positive, got {T}")
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return steps, T / steps


def simulate_skew_bm(p: float, T: float, dt: float, n: int, seed: int, backend: str = 'grid_walk',
                     z0: float = 0.0, save_points: Optional[int] = 100,
                     block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> SkewPaths:
    """Skew Brownian motion Z with its symmetric local time L and martingale part W"""
    steps, step = _steps(T, dt)
    stepper = SkewStepper(p, step, backend)
    schedule = save_schedule(steps, save_points)

    def worker(m: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        state = stepper.initial(z0, m)
        local = np.zeros(m)
        w = np.zeros(m)
        out = np.empty((3, m, schedule.size))
        out[0, :, 0] = stepper.position(state)
        out[1, :, 0] = 0.0
        out[2, :, 0] = 0.0
        slot = 1
        for k in range(1, steps + 1):
            state, d_local, d_w = stepper.step(state, rng)
            local += d_local
            w += d_w
            if slot < schedule.size and schedule[slot] == k:
                out[:, :, slot] = (stepper.position(state), local, w)
                slot += 1
        return out

    blocks = np.concatenate(run_blocks(worker, n, seed, 'skew', block_size, threads), axis=1)
    return SkewPaths(times=schedule * step, Z=blocks[0], L=blocks[1], W=blocks[2], p=p,
                     backend=backend, dt=step, seed=seed, params={'T': T, 'z0': z0})


# ===== LIMIT PROCESS =====

@dataclass
class LimitEnsemble(PathEnsemble):
    model: Optional[EffectiveModel] = None


def phi(z: np.ndarray, model: EffectiveModel) -> np.ndarray:
    """Piecewise-linear map z -> sqrt(D+-_11) z"""
    return np.where(z > 0, math.sqrt(model.d11('plus')), math.sqrt(model.d11('minus'))) * z


def phi_inverse(x1: float, model: EffectiveModel) -> float:
    side = 'plus' if x1 > 0 else 'minus'
    return x1 / math.sqrt(model.d11(side))


def simulate_limit(model: EffectiveModel, x0: Optional[Sequence[float]], T: float, dt: float, n: int,
                   seed: int, backend: str = 'grid_walk', save_points: Optional[int] = 100,
                   block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> LimitEnsemble:
    """
    Ensemble of the limit process with its local-time channel L^{X_1}

    Raises:
        ModelInvariantError: if the model fails its structural checks
    """
    model.check()
    d = model.dimension
    start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    if start.shape != (d,):
        raise SimulationParameterError(f"Starting point must have {d} coordinates")
    steps, step = _steps(T, dt)
    stepper = SkewStepper(model.skew_p, step, backend)
    schedule = save_schedule(steps, save_points)
    root = math.sqrt(step)
    factor = model.local_time_factor
    v = {side: model.factor(side)[1:, 0] for side in ('plus', 'minus')}
    tilde = {side: model.factor(side)[1:, 1:] for side in ('plus', 'minus')}
    z0 = phi_inverse(start[0], model)

    def worker(m: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        state = stepper.initial(z0, m)
        transverse = np.tile(start[1:], (m, 1))
        local = np.zeros(m)
        time_plus = np.zeros(m)
        states = np.empty((m, schedule.size, d))
        z_saved = np.empty((m, schedule.size))
        local_saved = np.zeros((m, schedule.size))
        z = stepper.position(state)
        z_saved[:, 0] = z
        states[:, 0, 0] = phi(z, model)
        states[:, 0, 1:] = transverse
        slot = 1
        for k in range(1, steps + 1):
            plus = z > 0
            time_plus += step * plus
            state, d_local, d_w = stepper.step(state, rng)
            d_tilde = root * rng.standard_normal((m, d - 1))
            move_plus = d_w[:, None] * v['plus'] + d_tilde @ tilde['plus'].T
            move_minus = d_w[:, None] * v['minus'] + d_tilde @ tilde['minus'].T
            d_lx = factor * d_local
            transverse += np.where(plus[:, None], move_plus, move_minus) + d_lx[:, None] * model.alpha
            local += d_lx
            z = stepper.position(state)
            if slot < schedule.size and schedule[slot] == k:
                z_saved[:, slot] = z
                states[:, slot, 0] = phi(z, model)
                states[:, slot, 1:] = transverse
                local_saved[:, slot] = local
                slot += 1
        return {'states': states, 'Z': z_saved, 'local': local_saved, 'time_plus': time_plus / T}

    logger.info(f"Simulating {n} limit paths ({backend}, dt={step:.3e}, skew p={model.skew_p:.6f})")
    blocks = run_blocks(worker, n, seed, 'limit', block_size, threads)
    return LimitEnsemble(
        times=schedule * step, states=np.concatenate([b['states'] for b in blocks]), dt=step, seed=seed,
        stream='limit', block_size=block_size,
        local_time=np.concatenate([b['local'] for b in blocks]),
        events={'Z': np.concatenate([b['Z'] for b in blocks]),
                'time_plus': np.concatenate([b['time_plus'] for b in blocks])},
        params={'backend': backend, 'x0': start.tolist(), 'T': T, 'skew_p': model.skew_p},
        model=model,
    )


def time_on_positive_side(ensemble: LimitEnsemble) -> Estimate:
    """Fraction of [0, T] spent with X_1 > 0, averaged over paths"""
    return Estimate.from_samples(ensemble.events['time_plus'], 'time_on_positive_side', ensemble.seed,
                                 {'T': ensemble.params.get('T')})


def martingale_residual(ensemble: PathEnsemble, f: GluingTestFunction, lam: float,
                        model: Optional[EffectiveModel] = None, enforce_gluing: bool = True) -> Estimate:
    """
    Mean of e^(-lam T) f(X_T) - f(X_0) + int_0^T e^(-lam s) (lam f - L f)(X_s) ds

    L is the limit generator of `model` (default: the model the ensemble was
    simulated from). The time integral uses the trapezoid rule on the stored
    times. The ensemble can be a limit ensemble or an eps-ensemble.

    Raises:
        ModelInvariantError: if f does not satisfy the gluing condition of the
            model (unless enforce_gluing is False)
    """
    if not lam > 0:
        raise SimulationParameterError(f"Discount rate must be positive, got {lam}")
    model = model if model is not None else getattr(ensemble, 'model', None)
    if model is None:
        raise SimulationParameterError("No model to take the generator from")
    residual = gluing_residual(f, model)
    if enforce_gluing and abs(residual) > GLUING_TOLERANCE:
        raise ModelInvariantError(f"Test function violates the gluing condition (residual {residual:.3e})")
    times = ensemble.times
    values = f.value(ensemble.states)
    integrand = np.exp(-lam * times)[None, :] * (lam * values - f.generator(ensemble.states, model))
    integral = np.sum(0.5 * (integrand[:, 1:] + integrand[:, :-1]) * np.diff(times)[None, :], axis=1)
    samples = math.exp(-lam * times[-1]) * values[:, -1] - values[:, 0] + integral
    return Estimate.from_samples(samples, 'martingale_residual', ensemble.seed,
                                 {'lambda': lam, 'gluing_residual': residual, 'T': float(times[-1])})
