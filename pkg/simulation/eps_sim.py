"""
Monte Carlo for the rescaled process dX = eps^-1 b(X / eps) dt + dB

Euler-Maruyama with dt = min(dt_user, 0.05 eps^2). Exits from the slab
|x1| < delta are detected by a sign change of x1 -+ delta and the exit
state is linearly interpolated inside the step.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fields.drift_field import InterfaceDrift
from homogenization.compensator import Compensator
from homogenization.errors import SimulationParameterError
from simulation.ensemble import PathEnsemble, save_schedule
from simulation.estimates import Estimate
from simulation.random_streams import DEFAULT_BLOCK_SIZE, run_blocks

logger = logging.getLogger(__name__)

DT_RATIO = 0.05
MAX_DT_RATIO = 0.1
HORIZON_FACTOR = 50.0
CAP_WARNING = 0.01


def resolve_time_step(eps: float, dt: Optional[float] = None, ratio: float = DT_RATIO,
                      max_ratio: float = MAX_DT_RATIO) -> float:
    """
    Raises:
        SimulationParameterError: if dt exceeds max_ratio * eps^2
    """
    if not eps > 0:
        raise SimulationParameterError(f"eps must be positive, got {eps}")
    default = ratio * eps * eps
    if dt is None:
        return default
    if not dt > 0:
        raise SimulationParameterError(f"dt must be positive, got {dt}")
    if dt > max_ratio * eps * eps:
        raise SimulationParameterError(
            f"dt = {dt:.3e} too large for eps = {eps:g} (limit {max_ratio:g} eps^2)", suggested_dt=default)
    return min(dt, default)


def _start(x0: Optional[Sequence[float]], d: int) -> np.ndarray:
    if x0 is None:
        return np.zeros(d)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d,):
        raise SimulationParameterError(f"Starting point must have {d} coordinates, got {x0.shape}")
    return x0


def scaled_drift(field: InterfaceDrift, eps: float):
    def drift(x: np.ndarray) -> np.ndarray:
        return field(x / eps) / eps
    return drift


# ===== PATHS =====

def simulate_eps(field: InterfaceDrift, eps: float, x0: Optional[Sequence[float]], T: float,
                 dt: Optional[float], n: int, seed: int, save_points: Optional[int] = 100,
                 block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> PathEnsemble:
    """
    Euler-Maruyama ensemble of X^eps on [0, T]

    Raises:
        SimulationParameterError: dt too large for eps, or bad sizes
    """
    if not T > 0:
        raise SimulationParameterError(f"Horizon must be positive, got {T}")
    step = resolve_time_step(eps, dt)
    steps = max(1, int(math.ceil(T / step - 1e-9)))
    step = T / steps
    schedule = save_schedule(steps, save_points)
    start = _start(x0, field.dimension)
    drift = scaled_drift(field, eps)
    root = math.sqrt(step)

    def worker(m: int, rng: np.random.Generator) -> np.ndarray:
        x = np.tile(start, (m, 1))
        out = np.empty((m, schedule.size, field.dimension))
        out[:, 0] = x
        slot = 1
        for k in range(1, steps + 1):
            x = x + drift(x) * step + root * rng.standard_normal(x.shape)
            if slot < schedule.size and schedule[slot] == k:
                out[:, slot] = x
                slot += 1
        return out

    logger.info(f"Simulating {n} paths of X^eps (eps={eps:g}, dt={step:.3e}, {steps} steps)")
    blocks = run_blocks(worker, n, seed, 'eps_paths', block_size, threads)
    return PathEnsemble(times=schedule * step, states=np.concatenate(blocks), dt=step, seed=seed,
                        stream='eps_paths', block_size=block_size, eps=eps,
                        params={'field': field.name, 'x0': start.tolist(), 'T': T})


def corrected_paths(ensemble: PathEnsemble, compensator: Compensator) -> PathEnsemble:
    """Y = X + eps g(X / eps) at every stored state"""
    eps = ensemble.eps
    if eps is None:
        raise SimulationParameterError("Corrected paths need an ensemble of the rescaled process")
    shift = eps * compensator(ensemble.states / eps)
    return PathEnsemble(times=ensemble.times, states=ensemble.states + shift, dt=ensemble.dt,
                        seed=ensemble.seed, stream=ensemble.stream, block_size=ensemble.block_size,
                        eps=eps, params=dict(ensemble.params, corrected=compensator.blend))


# ===== EXIT STATISTICS =====

def _exit_run(field: InterfaceDrift, eps: float, start: np.ndarray, delta: float, dt: float,
              horizon: float, n: int, seed: int, stream: str, block_size: int, threads: int,
              integrate_drift: bool = False) -> Dict[str, np.ndarray]:
    """Paths run until |x1| >= delta or the horizon; returns per-path exit records"""
    d = field.dimension
    steps = max(1, int(math.ceil(horizon / dt)))
    drift = scaled_drift(field, eps)
    root = math.sqrt(dt)

    def worker(m: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        x = np.tile(start, (m, 1))
        alive = np.ones(m, dtype=bool)
        side = np.zeros(m, dtype=np.int8)
        exit_state = x.copy()
        exit_time = np.full(m, horizon)
        integral = np.zeros((m, d))
        for k in range(steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            old = x[idx]
            b = drift(old)
            new = old + b * dt + root * rng.standard_normal(old.shape)
            if integrate_drift:
                integral[idx] += b * dt
            up = new[:, 0] >= delta
            down = new[:, 0] <= -delta
            hit = up | down
            if np.any(hit):
                level = np.where(up[hit], delta, -delta)
                theta = (level - old[hit, 0]) / (new[hit, 0] - old[hit, 0])
                theta = np.clip(theta, 0.0, 1.0)[:, None]
                done = idx[hit]
                exit_state[done] = old[hit] + theta * (new[hit] - old[hit])
                exit_time[done] = (k + theta[:, 0]) * dt
                side[done] = np.where(up[hit], 1, -1)
                if integrate_drift:
                    integral[done] -= (1.0 - theta) * b[hit] * dt
                alive[done] = False
            x[idx] = new
        exit_state[alive] = x[alive]
        return {'side': side, 'state': exit_state, 'time': exit_time, 'integral': integral}

    blocks = run_blocks(worker, n, seed, stream, block_size, threads)
    return {key: np.concatenate([b[key] for b in blocks]) for key in blocks[0]}


def _check_interface_start(field: InterfaceDrift, eps: float, start: np.ndarray, delta: float):
    if abs(start[0]) > eps * field.half_width + 1e-15:
        raise SimulationParameterError(
            f"Start x1 = {start[0]:g} outside the interface layer |x1| <= eps * eta = {eps * field.half_width:g}")
    if delta < 10.0 * eps:
        raise SimulationParameterError(f"delta = {delta:g} must be at least 10 eps = {10 * eps:g}")


def _horizon(delta: float, d11_min: float, factor: float = HORIZON_FACTOR) -> float:
    return factor * delta * delta / d11_min


def _cap_warning(capped: int, n: int) -> List[str]:
    fraction = capped / n
    if fraction > CAP_WARNING:
        logger.warning(f"⚠️ {fraction:.2%} of paths hit the horizon cap before exiting")
        return [f'cap-hit fraction {fraction:.4f} above {CAP_WARNING:g}']
    return []


def exit_statistics(field: InterfaceDrift, eps: float, x0: Optional[Sequence[float]], delta: float,
                    n: int, seed: int, dt: Optional[float] = None, d11_min: float = 1.0,
                    block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> Dict[str, Any]:
    """
    Exit side and transverse increment moments from one run of n paths

    Returns:
        {'side': Estimate, 'first': [Estimate], 'second': [Estimate]}; the
        side estimate's params carry the integer counts n_plus, n_minus and
        n_capped, which always add up to n. Capped paths are left out of the
        moments.
    """
    start = _start(x0, field.dimension)
    _check_interface_start(field, eps, start, delta)
    step = resolve_time_step(eps, dt)
    horizon = _horizon(delta, d11_min)
    records = _exit_run(field, eps, start, delta, step, horizon, n, seed, 'exit', block_size, threads)
    n_plus = int(np.sum(records['side'] == 1))
    n_minus = int(np.sum(records['side'] == -1))
    n_capped = n - n_plus - n_minus
    warnings = _cap_warning(n_capped, n)
    params = {'eps': eps, 'delta': delta, 'dt': step, 'horizon': horizon, 'x0': start.tolist(),
              'n_capped': n_capped}

    side = Estimate.from_count(n_plus, n, 'exit_side_probability', seed, dict(
        params, n_plus=n_plus, n_minus=n_minus, cap_fraction=n_capped / n, minus_fraction=n_minus / n))
    side.warnings.extend(warnings)

    exited = records['side'] != 0
    increments = records['state'][exited, 1:] - start[1:]
    first, second = [], []
    for j in range(field.dimension - 1):
        scaled = increments[:, j] / delta
        f = Estimate.from_samples(scaled, f'increment_first_moment_x{j + 2}', seed, params)
        s = Estimate.from_samples(scaled ** 2, f'increment_second_moment_x{j + 2}', seed, params)
        f.warnings.extend(warnings)
        s.warnings.extend(warnings)
        first.append(f)
        second.append(s)
    return {'side': side, 'first': first, 'second': second}


def exit_side_probability(field: InterfaceDrift, eps: float, x0: Optional[Sequence[float]], delta: float,
                          n: int, seed: int, dt: Optional[float] = None, d11_min: float = 1.0,
                          block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> Estimate:
    """Fraction of paths leaving (-delta, delta) through x1 = +delta"""
    return exit_statistics(field, eps, x0, delta, n, seed, dt, d11_min, block_size, threads)['side']


def interface_increment_moments(field: InterfaceDrift, eps: float, x0: Optional[Sequence[float]],
                                delta: float, n: int, seed: int, dt: Optional[float] = None,
                                d11_min: float = 1.0, block_size: int = DEFAULT_BLOCK_SIZE,
                                threads: int = 1) -> Tuple[List[Estimate], List[Estimate]]:
    """(1/delta) E[X_j(tau) - x_j] and (1/delta^2) E[(X_j(tau) - x_j)^2] for j = 2..d"""
    stats = exit_statistics(field, eps, x0, delta, n, seed, dt, d11_min, block_size, threads)
    return stats['first'], stats['second']


def exit_probability_unscaled(field: InterfaceDrift, k: float, starts: Sequence[Sequence[float]], n: int,
                              seed: int, dt: Optional[float] = None, d11_min: float = 1.0,
                              block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> Dict[str, Any]:
    """
    P(X(tau_k) > 0) for the unscaled process (eps = 1) from several starts in I_eta

    Returns per-start estimates and their spread (max - min).
    """
    if k < field.half_width + 1:
        raise SimulationParameterError(f"Exit level k = {k:g} must exceed eta + 1")
    step = resolve_time_step(1.0, dt)
    horizon = _horizon(k, d11_min)
    estimates = []
    for index, x0 in enumerate(starts):
        start = _start(x0, field.dimension)
        if abs(start[0]) > field.half_width:
            raise SimulationParameterError(f"Start {start.tolist()} outside I_eta")
        records = _exit_run(field, 1.0, start, k, step, horizon, n, seed + index, 'unscaled_exit',
                            block_size, threads)
        n_plus = int(np.sum(records['side'] == 1))
        n_capped = int(np.sum(records['side'] == 0))
        estimate = Estimate.from_count(n_plus, n, 'exit_probability_unscaled', seed + index,
                                       {'k': k, 'x0': start.tolist(), 'n_capped': n_capped})
        estimate.warnings.extend(_cap_warning(n_capped, n))
        estimates.append(estimate)
    values = [e.value for e in estimates]
    return {'estimates': estimates, 'spread': max(values) - min(values)}


def drift_estimate_nonrescaled(field: InterfaceDrift, n_strip: int, x0: Optional[Sequence[float]],
                               paths: int, seed: int, dt: Optional[float] = None, d11_min: float = 1.0,
                               block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> List[Estimate]:
    """(1/n) E int_0^tau_n b_j(X_s) ds for j = 2..d, unscaled process started in I_eta"""
    if n_strip < 8:
        raise SimulationParameterError(f"n_strip must be at least 8, got {n_strip}")
    start = _start(x0, field.dimension)
    if abs(start[0]) > field.half_width:
        raise SimulationParameterError(f"Start {start.tolist()} outside I_eta")
    step = resolve_time_step(1.0, dt)
    horizon = _horizon(float(n_strip), d11_min)
    records = _exit_run(field, 1.0, start, float(n_strip), step, horizon, paths, seed,
                        'drift_integral', block_size, threads, integrate_drift=True)
    exited = records['side'] != 0
    n_capped = int(paths - exited.sum())
    estimates = []
    for j in range(1, field.dimension):
        estimate = Estimate.from_samples(records['integral'][exited, j] / n_strip,
                                         f'drift_integral_x{j + 1}', seed,
                                         {'n_strip': n_strip, 'dt': step, 'x0': start.tolist(),
                                          'n_capped': n_capped})
        estimate.warnings.extend(_cap_warning(n_capped, paths))
        estimates.append(estimate)
    return estimates


# ===== OCCUPATION =====

def discounted_occupation(field: InterfaceDrift, eps: float, delta: float, lam: float,
                          x0: Optional[Sequence[float]], n: int, seed: int, dt: Optional[float] = None,
                          tail_tolerance: float = 1e-3, block_size: int = DEFAULT_BLOCK_SIZE,
                          threads: int = 1) -> Estimate:
    """
    E int_0^inf e^(-lam t) 1{|X_1| < delta} dt, truncated where e^(-lam T)/lam < tail_tolerance
    """
    if not lam > 0:
        raise SimulationParameterError(f"Discount rate must be positive, got {lam}")
    start = _start(x0, field.dimension)
    step = resolve_time_step(eps, dt)
    horizon = max(math.log(1.0 / (lam * tail_tolerance)), 1.0) / lam
    steps = int(math.ceil(horizon / step))
    drift = scaled_drift(field, eps)
    root = math.sqrt(step)
    discount = np.exp(-lam * step * np.arange(steps))

    def worker(m: int, rng: np.random.Generator) -> np.ndarray:
        x = np.tile(start, (m, 1))
        total = np.zeros(m)
        for k in range(steps):
            total += discount[k] * step * (np.abs(x[:, 0]) < delta)
            x = x + drift(x) * step + root * rng.standard_normal(x.shape)
        return total

    samples = np.concatenate(run_blocks(worker, n, seed, 'occupation', block_size, threads))
    return Estimate.from_samples(samples, 'discounted_occupation', seed, {
        'eps': eps, 'delta': delta, 'lambda': lam, 'dt': step, 'horizon': steps * step,
        'x0': start.tolist(), 'tail_bound': math.exp(-lam * steps * step) / lam,
    })


def short_horizon_occupation(field: InterfaceDrift, eps: float, horizon: float,
                             x0: Optional[Sequence[float]], n: int, seed: int, dt: Optional[float] = None,
                             block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> Estimate:
    """E int_0^horizon 1{|X_1| <= eps eta} dt, expected to scale like eps sqrt(horizon)"""
    start = _start(x0, field.dimension)
    step = resolve_time_step(eps, dt)
    steps = max(1, int(math.ceil(horizon / step)))
    step = horizon / steps
    layer = eps * field.half_width
    drift = scaled_drift(field, eps)
    root = math.sqrt(step)

    def worker(m: int, rng: np.random.Generator) -> np.ndarray:
        x = np.tile(start, (m, 1))
        total = np.zeros(m)
        for _ in range(steps):
            total += step * (np.abs(x[:, 0]) <= layer)
            x = x + drift(x) * step + root * rng.standard_normal(x.shape)
        return total

    samples = np.concatenate(run_blocks(worker, n, seed, 'short_occupation', block_size, threads))
    return Estimate.from_samples(samples, 'short_horizon_occupation', seed,
                                 {'eps': eps, 'horizon': horizon, 'dt': step, 'x0': start.tolist()})
