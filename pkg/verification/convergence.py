"""
Statistical comparisons between the eps-process and the limit model

Every check returns a ComparisonReport with flat CheckRecords and a section
of raw numbers. Pass/fail rules use 3-standard-error bands unless the
record's tolerance rule says otherwise.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from fields.drift_field import InterfaceDrift
from homogenization.compensator import Compensator
from homogenization.effective_model import EffectiveModel, glued_test_function
from homogenization.errors import ConfigError, SimulationParameterError
from simulation.eps_sim import (corrected_paths, drift_estimate_nonrescaled, discounted_occupation,
                                exit_statistics, short_horizon_occupation, simulate_eps)
from simulation.estimates import Estimate
from simulation.limit_sim import martingale_residual, simulate_limit
from simulation.random_streams import DEFAULT_BLOCK_SIZE
from verification.checks import CheckRecord, ComparisonReport
from verification.oracles import kolmogorov_se

logger = logging.getLogger(__name__)

MIN_MARGINAL_SAMPLES = 1000
FINAL_KS_THRESHOLD = 0.05
SHORT_HORIZON = 0.1


def _decreasing_schedule(eps_list: Sequence[float]) -> List[float]:
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ConfigError("Empty eps schedule")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(f"eps schedule must be strictly decreasing, got {eps_list}")
    return eps_list


def _d11_min(model: EffectiveModel) -> float:
    return min(model.d11('plus'), model.d11('minus'))


def _combined(*se: float) -> float:
    return math.sqrt(sum(s * s for s in se))


# ===== MARGINALS =====

def compare_marginals(field: InterfaceDrift, model: EffectiveModel, eps_list: Sequence[float], T: float,
                      n: int, seed: int, x0: Optional[Sequence[float]] = None, dt: Optional[float] = None,
                      limit_backend: str = 'grid_walk', limit_dt: float = 1e-4,
                      block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> ComparisonReport:
    """
    KS distance between X^eps(T) and the limit X(T), coordinate by coordinate

    Passes when the distances are non-increasing along the eps schedule
    within 2 sqrt(2) SE and the distance at the smallest eps is below 0.05.

    Raises:
        SimulationParameterError: if n < 1000
    """
    eps_list = _decreasing_schedule(eps_list)
    if n < MIN_MARGINAL_SAMPLES:
        raise SimulationParameterError(f"Marginal comparison needs at least {MIN_MARGINAL_SAMPLES} samples, got {n}")
    limit = simulate_limit(model, x0, T, limit_dt, n, seed, backend=limit_backend, save_points=1,
                           block_size=block_size, threads=threads)
    se = kolmogorov_se(n, n)
    d = field.dimension
    distances = {k: [] for k in range(d)}
    pvalues = {k: [] for k in range(d)}
    for eps in eps_list:
        ensemble = simulate_eps(field, eps, x0, T, dt, n, seed, save_points=1,
                                block_size=block_size, threads=threads)
        for k in range(d):
            result = ks_2samp(ensemble.final[:, k], limit.final[:, k])
            distances[k].append(float(result.statistic))
            pvalues[k].append(float(result.pvalue))
        logger.info(f"eps = {eps:g}: KS distances {[round(distances[k][-1], 4) for k in range(d)]}")

    report = ComparisonReport()
    slack = 2.0 * math.sqrt(2.0) * se
    for k in range(d):
        series = distances[k]
        monotone = all(b <= a + slack for a, b in zip(series, series[1:]))
        report.add(CheckRecord(
            name=f'marginal_ks_x{k + 1}', predicted=0.0, estimated=series[-1], se=se,
            tolerance_rule=f'non-increasing within 2*sqrt(2) SE and final < {FINAL_KS_THRESHOLD:g}',
            passed=bool(monotone and series[-1] < FINAL_KS_THRESHOLD), seed=seed,
            params={'eps': eps_list[-1], 'T': T, 'n': n, 'monotone': monotone}))
    report.sections['marginals'] = {
        'eps': eps_list, 'T': T, 'n': n, 'se': se, 'limit_backend': limit_backend,
        'distances': {f'x{k + 1}': distances[k] for k in range(d)},
        'pvalues': {f'x{k + 1}': pvalues[k] for k in range(d)},
    }
    return report


# ===== EXIT STATISTICS =====

def exit_level(eps: float, delta: float) -> float:
    """Exit half-width used at eps: delta, raised to 10 eps when needed"""
    return max(float(delta), 10.0 * eps)


def exit_runs(field: InterfaceDrift, model: EffectiveModel, eps_list: Sequence[float], delta: float,
              n: int, seed: int, x0: Optional[Sequence[float]] = None, dt: Optional[float] = None,
              block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> Dict[float, Dict[str, Any]]:
    """One exit_statistics run per eps, shared by the transmissivity and increment checks"""
    return {eps: exit_statistics(field, eps, x0, exit_level(eps, delta), n, seed, dt, _d11_min(model),
                                 block_size, threads)
            for eps in _decreasing_schedule(eps_list)}


def transmissivity_convergence(field: InterfaceDrift, model: EffectiveModel, eps_list: Sequence[float],
                               delta: float, n: int, seed: int, x0: Optional[Sequence[float]] = None,
                               dt: Optional[float] = None, runs: Optional[Dict[float, Dict[str, Any]]] = None,
                               block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> ComparisonReport:
    """
    |p^(eps) - p+| along the eps schedule

    Passes when the error does not grow by more than 2 combined SE from one
    eps to the next and the estimate at the smallest eps is within 3 SE of p+.
    """
    eps_list = _decreasing_schedule(eps_list)
    if runs is None:
        runs = exit_runs(field, model, eps_list, delta, n, seed, x0, dt, block_size, threads)
    estimates: List[Estimate] = [runs[eps]['side'] for eps in eps_list]
    errors = [abs(e.value - model.p_plus) for e in estimates]
    shrinking = all(errors[i + 1] <= errors[i] + 2.0 * _combined(estimates[i].se, estimates[i + 1].se)
                    for i in range(len(errors) - 1))
    last = estimates[-1]
    report = ComparisonReport()
    report.add(CheckRecord(
        name='transmissivity', predicted=model.p_plus, estimated=last.value, se=last.se,
        tolerance_rule='error shrinking within 2 combined SE; final within 3 SE',
        passed=bool(shrinking and last.within(model.p_plus)), seed=seed,
        params={'eps': eps_list[-1], 'delta': delta, 'n': n, 'shrinking': shrinking}))
    warnings = sorted({w for e in estimates for w in e.warnings})
    report.sections['transmissivity'] = {
        'eps': eps_list, 'deltas': [exit_level(eps, delta) for eps in eps_list], 'p_plus': model.p_plus,
        'estimates': [e.to_dict() for e in estimates], 'errors': errors, 'warnings': warnings,
    }
    return report


def increment_check(model: EffectiveModel, run: Dict[str, Any]) -> ComparisonReport:
    """Scaled first moments of the transverse exit increments against alpha_j"""
    report = ComparisonReport()
    for j, first in enumerate(run['first']):
        report.add(CheckRecord.within_se(f'increment_alpha_x{j + 2}', float(model.alpha[j]), first))
    report.sections['increments'] = {
        'alpha': model.alpha.tolist(),
        'first': [e.to_dict() for e in run['first']],
        'second': [e.to_dict() for e in run['second']],
    }
    return report


def uniformity_check(field: InterfaceDrift, model: EffectiveModel, eps: float, delta: float, starts: int,
                     n: int, seed: int, x0: Optional[Sequence[float]] = None, dt: Optional[float] = None,
                     block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> ComparisonReport:
    """
    Exit side and increment moments from several starts across I_{eps eta}

    Only a finite set of starts is sampled, so a pass is weaker than
    uniformity in the starting point.
    """
    if starts < 2:
        raise ConfigError(f"Uniformity check needs at least two starts, got {starts}")
    d = field.dimension
    base = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    layer = eps * field.half_width * (1.0 - 1e-9)
    points = []
    for x1 in np.linspace(-layer, layer, starts):
        point = base.copy()
        point[0] = x1
        points.append(point)
    level = exit_level(eps, delta)
    runs = [exit_statistics(field, eps, p, level, n, seed + i, dt, _d11_min(model), block_size, threads)
            for i, p in enumerate(points)]

    report = ComparisonReport()
    series = {'exit_side': [r['side'] for r in runs]}
    for j in range(d - 1):
        series[f'increment_x{j + 2}'] = [r['first'][j] for r in runs]
    for name, estimates in series.items():
        values = [e.value for e in estimates]
        spread = max(values) - min(values)
        se = math.sqrt(2.0) * max(e.se for e in estimates)
        report.add(CheckRecord(
            name=f'uniformity_{name}', predicted=0.0, estimated=spread, se=se,
            tolerance_rule='spread <= 3 * sqrt(2) * max SE', passed=bool(spread <= 3.0 * se),
            seed=seed, params={'eps': eps, 'delta': level, 'starts': starts}))
    report.sections['uniformity'] = {
        'starts': [p.tolist() for p in points],
        'estimates': {name: [e.to_dict() for e in est] for name, est in series.items()},
    }
    return report


def drift_trend_check(field: InterfaceDrift, model: EffectiveModel, strips: Sequence[int], paths: int,
                      seed: int, x0: Optional[Sequence[float]] = None, dt: Optional[float] = None,
                      block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> ComparisonReport:
    """
    Time integral of b_j up to the exit from I_n, for the unscaled process

    Consecutive strip sizes must agree within 3 combined SE and the largest
    must match alpha_j within 3 SE.
    """
    strips = sorted(int(s) for s in strips)
    runs = [drift_estimate_nonrescaled(field, s, x0, paths, seed, dt, _d11_min(model), block_size, threads)
            for s in strips]
    report = ComparisonReport()
    for j in range(field.dimension - 1):
        estimates = [run[j] for run in runs]
        cauchy = all(abs(a.value - b.value) <= 3.0 * _combined(a.se, b.se)
                     for a, b in zip(estimates, estimates[1:]))
        last = estimates[-1]
        report.add(CheckRecord(
            name=f'drift_integral_x{j + 2}', predicted=float(model.alpha[j]), estimated=last.value,
            se=last.se, tolerance_rule='consecutive strips within 3 combined SE; largest within 3 SE',
            passed=bool(cauchy and last.within(float(model.alpha[j]))), seed=seed,
            params={'strips': strips, 'cauchy': cauchy}))
    report.sections['drift_integral'] = {
        'strips': strips, 'estimates': [[e.to_dict() for e in run] for run in runs],
    }
    return report


# ===== OCCUPATION =====

def occupation_convergence(field: InterfaceDrift, eps_list: Sequence[float], exponent: float, lam: float,
                           n: int, seed: int, x0: Optional[Sequence[float]] = None,
                           dt: Optional[float] = None,
                           oracle: Optional[Callable[[float, float, float], float]] = None,
                           block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> ComparisonReport:
    """
    Discounted occupation of (-delta, delta) with delta = eps^exponent

    The estimates must decrease strictly from one eps to the next by more
    than 2 combined SE (1 SE when exponent >= 0.95). With an oracle
    u(delta, lam, x1) every estimate is also compared with it. The
    short-horizon occupation of the layer is checked against C eps sqrt(t)
    with C fitted on the largest eps.

    Raises:
        ConfigError: if exponent is outside (1/2, 1)
    """
    if not 0.5 < exponent < 1.0:
        raise ConfigError(f"Occupation exponent must lie in (1/2, 1), got {exponent}")
    eps_list = _decreasing_schedule(eps_list)
    start_x1 = 0.0 if x0 is None else float(x0[0])
    margin = 1.0 if exponent >= 0.95 else 2.0
    deltas = [eps ** exponent for eps in eps_list]
    estimates = [discounted_occupation(field, eps, delta, lam, x0, n, seed, dt,
                                       block_size=block_size, threads=threads)
                 for eps, delta in zip(eps_list, deltas)]
    values = [e.value for e in estimates]
    decreasing = all(a.value - b.value > margin * _combined(a.se, b.se)
                     for a, b in zip(estimates, estimates[1:]))
    slope = None
    if len(eps_list) > 1 and all(v > 0 for v in values):
        slope = float(np.polyfit(np.log(eps_list), np.log(values), 1)[0])

    report = ComparisonReport()
    report.add(CheckRecord(
        name='occupation_trend', predicted=0.0, estimated=values[-1], se=estimates[-1].se,
        tolerance_rule=f'strictly decreasing beyond {margin:g} combined SE', passed=bool(decreasing),
        seed=seed, params={'exponent': exponent, 'lambda': lam, 'log_slope': slope}))
    if oracle is not None:
        for eps, delta, estimate in zip(eps_list, deltas, estimates):
            report.add(CheckRecord.within_se(f'occupation_oracle_eps_{eps:g}',
                                             oracle(delta, lam, start_x1), estimate))

    short = [short_horizon_occupation(field, eps, SHORT_HORIZON, x0, n, seed, dt,
                                      block_size=block_size, threads=threads) for eps in eps_list]
    constant = short[0].value / (eps_list[0] * math.sqrt(SHORT_HORIZON))
    bounds = [constant * eps * math.sqrt(SHORT_HORIZON) for eps in eps_list]
    bounded = all(s.value <= bound + 3.0 * s.se for s, bound in zip(short, bounds))
    report.add(CheckRecord(
        name='short_horizon_occupation', predicted=bounds[-1], estimated=short[-1].value, se=short[-1].se,
        tolerance_rule='<= C eps sqrt(t) + 3 SE for every eps, C fitted on the largest eps',
        passed=bool(bounded), seed=seed, params={'horizon': SHORT_HORIZON, 'C': constant}))

    report.sections['occupation'] = {
        'eps': eps_list, 'deltas': deltas, 'exponent': exponent, 'lambda': lam,
        'estimates': [e.to_dict() for e in estimates], 'log_slope': slope,
        'short_horizon': [s.to_dict() for s in short], 'short_horizon_constant': constant,
    }
    return report


# ===== MARTINGALE PROBLEM =====

def martingale_check(field: InterfaceDrift, model: EffectiveModel, compensator: Compensator, eps: float,
                     T: float, lam: float, n: int, seed: int, x0: Optional[Sequence[float]] = None,
                     dt: Optional[float] = None, limit_backend: str = 'grid_walk', limit_dt: float = 1e-4,
                     save_points: int = 100, block_size: int = DEFAULT_BLOCK_SIZE,
                     threads: int = 1) -> ComparisonReport:
    """
    Discounted martingale residual of a glued test function

    f = s+- x1 + x1^2 / 2 + sum_j x_j with s- = 1 and s+ fixed by the gluing
    condition of `model`. The residual is measured on the corrected
    eps-paths Y = X + eps g(X / eps), where a wrong model shows up, and on
    the limit ensemble of the model itself.
    """
    f = glued_test_function(model, slope_minus=1.0, tangential=np.ones(model.dimension - 1), curvature=1.0)
    ensemble = simulate_eps(field, eps, x0, T, dt, n, seed, save_points=save_points,
                            block_size=block_size, threads=threads)
    on_eps = martingale_residual(corrected_paths(ensemble, compensator), f, lam, model=model)
    limit = simulate_limit(model, x0, T, limit_dt, n, seed, backend=limit_backend, save_points=save_points,
                           block_size=block_size, threads=threads)
    on_limit = martingale_residual(limit, f, lam)

    report = ComparisonReport()
    report.add(CheckRecord.within_se('martingale_eps', 0.0, on_eps, eps=eps))
    report.add(CheckRecord.within_se('martingale_limit', 0.0, on_limit, backend=limit_backend))
    report.sections['martingale'] = {
        'test_function': {'slope_plus': f.slope_plus, 'slope_minus': f.slope_minus,
                          'tangential': list(f.tangential), 'curvature': f.curvature},
        'eps': on_eps.to_dict(), 'limit': on_limit.to_dict(),
    }
    return report
