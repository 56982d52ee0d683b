"""
End-to-end verification run

cells -> strip measure -> effective model -> simulators -> checks. Each
stage re-raises failures tagged with its name; the check list is fixed by
the configuration before anything is simulated.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from fields.builtins import field_from_config, paper_shear_integral
from fields.drift_field import InterfaceDrift, validate_drift
from fields.grid import GridSpec
from homogenization.effective_model import EffectiveModel, perturbed_model
from homogenization.errors import ConfigError, HomogenizationError
from homogenization.model_builder import ModelArtifacts, ModelSettings, build_model
from simulation.settings import SimulationSettings
from utils.config_loader import merge_defaults
from utils.export import provenance
from verification.checks import CheckRecord, ComparisonReport
from verification.convergence import (compare_marginals, drift_trend_check, exit_runs, increment_check,
                                      martingale_check, occupation_convergence, transmissivity_convergence,
                                      uniformity_check)
from verification.oracles import brownian_occupation

logger = logging.getLogger(__name__)

CHECKS = ('model', 'transmissivity', 'increments', 'uniformity', 'drift', 'occupation', 'marginals',
          'martingale')
NEGATIVE_CONTROLS = ('alpha2x', 'swap-p')
INVARIANCE_TOLERANCE = 1e-6
FACTOR_TOLERANCE = 1e-10


@dataclass
class PipelineResult:
    field: InterfaceDrift
    grid: GridSpec
    artifacts: ModelArtifacts
    model: EffectiveModel
    report: ComparisonReport


def _tagged(stage: str, exc: HomogenizationError) -> HomogenizationError:
    if exc.stage in (None, 'pipeline'):
        exc.stage = stage
    return exc


def _exact(name: str, predicted: float, estimated: float, tolerance: float, **params) -> CheckRecord:
    return CheckRecord(name=name, predicted=float(predicted), estimated=float(estimated), se=0.0,
                       tolerance_rule=f'|estimated - predicted| <= {tolerance:g}',
                       passed=bool(abs(estimated - predicted) <= tolerance), params=params)


def model_checks(field: InterfaceDrift, artifacts: ModelArtifacts, model: EffectiveModel) -> ComparisonReport:
    """Deterministic identities of the model plus the closed forms known for builtin fields"""
    report = ComparisonReport()
    report.add(_exact('p_sum', 1.0, model.p_plus + model.p_minus, 0.0))
    gap = max(float(np.max(np.abs(model.factor(side) @ model.factor(side).T - D)))
              for side, D in (('plus', model.D_plus), ('minus', model.D_minus)))
    report.add(_exact('factor_identity', 0.0, gap, FACTOR_TOLERANCE))
    report.add(_exact('compensator_invariance', 0.0, artifacts.diagnostics['compensator_invariance'],
                      INVARIANCE_TOLERANCE, blends=[artifacts.compensator.blend]))

    if field.name == 'paper_shear':
        report.add(_exact('alpha_shear_integral', paper_shear_integral(field), float(model.alpha[0]), 1e-6))
        report.add(_exact('p_plus_shear', 0.5, model.p_plus, 1e-12))
    elif field.name == 'zero':
        identity = np.eye(model.dimension)
        report.add(_exact('zero_field_tensor', 0.0, max(float(np.max(np.abs(model.D_plus - identity))),
                                                        float(np.max(np.abs(model.D_minus - identity)))), 1e-8))
        report.add(_exact('zero_field_alpha', 0.0, float(np.max(np.abs(model.alpha), initial=0.0)), 1e-8))
        report.add(_exact('zero_field_p_plus', 0.5, model.p_plus, 1e-12))

    mc = artifacts.diagnostics.get('strip_monte_carlo')
    if mc is not None:
        q = mc['q_plus']
        report.add(CheckRecord(name='strip_monte_carlo_q_plus', predicted=model.q_plus, estimated=q['value'],
                               se=q['se'], tolerance_rule='|estimated - predicted| <= 3 SE',
                               passed=bool(abs(q['value'] - model.q_plus) <= 3.0 * q['se'] + 1e-12),
                               seed=q['seed'], params={'R': mc['R']}))
    report.sections['model'] = model.to_dict()
    return report


def _is_zero_drift(field: InterfaceDrift, grid: GridSpec) -> bool:
    return validate_drift(field, grid).sup_norm == 0.0


def full_pipeline(config: Dict[str, Any]) -> PipelineResult:
    """
    Run every configured check for the configured field

    Args:
        config: run configuration (missing values are filled from the defaults)

    Returns:
        PipelineResult with the report; the report's verdict is the AND of its checks

    Raises:
        HomogenizationError: first failed precondition, tagged with its stage
    """
    config = merge_defaults(config)
    verify = config['verify']
    checks: List[str] = list(verify.get('checks') or [])
    unknown = sorted(set(checks) - set(CHECKS))
    if unknown:
        raise ConfigError(f"Unknown checks {unknown}; choose from {list(CHECKS)}")
    control: Optional[str] = verify.get('negative_control')
    if control is not None and control not in NEGATIVE_CONTROLS:
        raise ConfigError(f"Unknown negative control {control!r}; choose from {list(NEGATIVE_CONTROLS)}")

    try:
        field = field_from_config(config['field'])
        grid = GridSpec.from_config(config['grid'], field.dimension, field.half_width)
    except HomogenizationError as exc:
        raise _tagged('field_model', exc)
    sim = SimulationSettings.from_config(config['simulation'])
    artifacts = build_model(field, grid, ModelSettings.from_config(config), seed=sim.seed, threads=sim.threads)

    model = artifacts.model
    if control is not None:
        logger.warning(f"⚠️ Negative control '{control}': checks run against a deliberately wrong model")
        model = perturbed_model(model, control)

    report = ComparisonReport()
    report.provenance = provenance(config, sim.seed, grid.to_dict(), {
        'strip': artifacts.strip.residual,
        'cells': {side: cell.summary()['stationarity_residual']
                  for side, cell in zip(('plus', 'minus'), artifacts.cells)},
    })
    report.provenance['negative_control'] = control

    x0 = sim.x0
    fan = sim.fan_out()
    smallest = sim.smallest_eps
    runs: Dict[float, Dict[str, Any]] = {}

    def exit_data() -> Dict[float, Dict[str, Any]]:
        if not runs:
            runs.update(exit_runs(field, model, sim.eps_list, sim.delta, int(verify['exit_paths']), sim.seed,
                                  x0, sim.dt, **fan))
        return runs

    stages: Dict[str, Callable[[], ComparisonReport]] = {
        'model': lambda: model_checks(field, artifacts, model),
        'transmissivity': lambda: transmissivity_convergence(
            field, model, sim.eps_list, sim.delta, int(verify['exit_paths']), sim.seed, x0, sim.dt,
            runs=exit_data(), **fan),
        'increments': lambda: increment_check(model, exit_data()[smallest]),
        'uniformity': lambda: uniformity_check(
            field, model, smallest, sim.delta, int(verify['uniformity_starts']), int(verify['exit_paths']),
            sim.seed, x0, sim.dt, **fan),
        'drift': lambda: drift_trend_check(
            field, model, verify['drift_strips'], int(verify['drift_paths']), sim.seed, x0, **fan),
        'occupation': lambda: occupation_convergence(
            field, sim.eps_list, float(verify['occupation_exponent']), float(verify['occupation_lambda']),
            int(verify['occupation_paths']), sim.seed, x0, sim.dt,
            oracle=brownian_occupation if _is_zero_drift(field, grid) else None, **fan),
        'marginals': lambda: compare_marginals(
            field, model, sim.eps_list, sim.horizon, int(verify['n_paths']), sim.seed, x0, sim.dt,
            sim.limit_backend, sim.limit_dt, **fan),
        'martingale': lambda: martingale_check(
            field, model, artifacts.compensator, smallest, sim.horizon, float(verify['martingale_lambda']),
            int(verify['martingale_paths']), sim.seed, x0, sim.dt, sim.limit_backend, sim.limit_dt,
            sim.save_points, **fan),
    }

    for name in CHECKS:
        if name not in checks:
            continue
        logger.info(f"Running check '{name}'")
        try:
            section = stages[name]()
        except HomogenizationError as exc:
            raise _tagged(f'verify:{name}', exc)
        report.merge(section)
        for record in section.failed():
            logger.warning(f"⚠️ {record.name}: estimated {record.estimated!r}, predicted {record.predicted!r} "
                           f"({record.tolerance_rule})")

    verdict = 'PASS' if report.verdict else 'FAIL'
    logger.info(f"{'✅' if report.verdict else '❌'} Verdict {verdict}: "
                f"{len(report.records) - len(report.failed())}/{len(report.records)} checks passed")
    return PipelineResult(field=field, grid=grid, artifacts=artifacts, model=model, report=report)
