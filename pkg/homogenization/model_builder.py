"""
Deterministic part of the pipeline: cells -> strip measure -> effective model
"""

import logging
from dataclasses import dataclass, field as dataclass_field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from fields.drift_field import InterfaceDrift, validate_drift
from fields.grid import GridSpec
from homogenization.compensator import Compensator, CorrectedDrift, build_compensator, corrected_drift
from homogenization.effective_model import (EffectiveModel, assemble_model, interface_drift_vector,
                                            transmissivity)
from homogenization.errors import HomogenizationError, InvalidFieldError
from homogenization.strip_measure import (FitSettings, StripMeasure, mass_normalisation,
                                          strip_invariant_measure)
from homogenization.strip_monte_carlo import MonteCarloSettings, estimate_cell_masses_mc
from homogenization.torus_cell import CellSolution, SolverSettings, solve_cell

logger = logging.getLogger(__name__)

INVARIANCE_FLOOR = 1e-3


@dataclass(frozen=True)
class ModelSettings:
    solver: SolverSettings = SolverSettings()
    fit: FitSettings = FitSettings()
    monte_carlo: MonteCarloSettings = MonteCarloSettings()
    blend: str = 'smooth'
    alternate_blend: str = 'quintic'
    support_tolerance: float = 1e-8

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'ModelSettings':
        model = config.get('model', {})
        return cls(solver=SolverSettings.from_config(config.get('solver')),
                   fit=FitSettings.from_config(config.get('strip')),
                   monte_carlo=MonteCarloSettings.from_config(config.get('strip')),
                   blend=model.get('blend', 'smooth'),
                   alternate_blend=model.get('alternate_blend', 'quintic'),
                   support_tolerance=float(model.get('support_tolerance', 1e-8)))


@dataclass
class ModelArtifacts:
    field: InterfaceDrift
    grid: GridSpec
    cells: Tuple[CellSolution, CellSolution]
    strip: StripMeasure
    compensator: Compensator
    corrected: CorrectedDrift
    model: EffectiveModel
    alternate_alpha: np.ndarray
    diagnostics: Dict[str, Any] = dataclass_field(default_factory=dict)


def solve_cells(field: InterfaceDrift, grid: GridSpec,
                settings: Optional[SolverSettings] = None) -> Tuple[CellSolution, CellSolution]:
    """Both periodic cell problems; a shared tail is solved once"""
    plus = solve_cell(field.plus, grid, settings, side='plus')
    if field.minus is field.plus:
        return plus, replace(plus, side='minus')
    return plus, solve_cell(field.minus, grid, settings, side='minus')


def tail_d11_min(cells: Tuple[CellSolution, CellSolution]) -> float:
    """Smaller normal diffusivity D11 of the two tails; sets exit-time horizons"""
    return float(min(cell.tensor.matrix[0, 0] for cell in cells))


def _stage(name: str, exc: HomogenizationError) -> HomogenizationError:
    if exc.stage in ('pipeline', None):
        exc.stage = name
    return exc


def build_model(field: InterfaceDrift, grid: GridSpec, settings: Optional[ModelSettings] = None,
                seed: int = 0, threads: int = 1) -> ModelArtifacts:
    """
    Run the deterministic stages and assemble the effective model

    `seed` and `threads` only feed the optional Monte Carlo cross-check of
    the cell masses (strip.monte_carlo.enabled).

    Raises:
        HomogenizationError: stage-tagged failure of any deterministic stage
    """
    settings = settings or ModelSettings()

    report = validate_drift(field, grid)
    if not report.passed:
        raise InvalidFieldError(f"Field '{field.name}' failed validation: {report.to_dict()}")

    try:
        cells = solve_cells(field, grid, settings.solver)
    except HomogenizationError as exc:
        raise _stage('torus_cell', exc)
    plus, minus = cells
    d11_plus, d11_minus = plus.tensor.matrix[0, 0], minus.tensor.matrix[0, 0]

    try:
        strip = strip_invariant_measure(field, cells, grid, settings.solver, settings.fit)
    except HomogenizationError as exc:
        raise _stage('strip_measure', exc)
    p_plus, _ = transmissivity(strip.fit.q_plus, strip.fit.q_minus, d11_plus, d11_minus)

    alphas = {}
    compensators = {}
    for blend in (settings.blend, settings.alternate_blend):
        comp = build_compensator(plus.corrector.values, minus.corrector.values, grid,
                                 field.half_width, blend)
        corrected = corrected_drift(field, comp, grid, settings.support_tolerance)
        alpha, x1_integral = interface_drift_vector(corrected, strip, p_plus, d11_plus, d11_minus)
        alphas[blend] = (alpha, x1_integral, corrected)
        compensators[blend] = comp

    alpha, x1_integral, corrected = alphas[settings.blend]
    alternate = alphas[settings.alternate_blend][0]
    gap = float(np.max(np.abs(alpha - alternate), initial=0.0))
    invariance = gap / max(float(np.max(np.abs(alpha), initial=0.0)), INVARIANCE_FLOOR)
    normalisation = mass_normalisation(p_plus, d11_plus, d11_minus, strip,
                                       range(1, grid.strip_half_width + 1))

    diagnostics = {
        'field': field.describe(),
        'alpha_x1_diagnostic': x1_integral,
        'alpha_alternate': alternate.tolist(),
        'compensator_invariance': invariance,
        'corrected_drift_leak': corrected.leak,
        'beta': normalisation['beta'],
        'mass_profile': normalisation['profile'],
        'fit': strip.fit.to_dict(),
        'strip_residual': strip.residual,
        'boundary_constants': list(strip.boundary_constants),
        'cells': {'plus': plus.summary(), 'minus': minus.summary()},
    }
    mc = settings.monte_carlo
    if mc.enabled:
        masses = estimate_cell_masses_mc(field, mc.reflecting_plane(field.half_width), mc.chains,
                                         mc.cycles, seed, dt=mc.dt, threads=threads)
        diagnostics['strip_monte_carlo'] = masses.to_dict()
        if not masses.q_plus.within(strip.fit.q_plus):
            logger.warning(f"⚠️ Monte Carlo q+ = {masses.q_plus.value:.4f} +- {masses.q_plus.se:.4f} "
                           f"disagrees with the strip solve ({strip.fit.q_plus:.4f})")
    try:
        model = assemble_model(plus.tensor, minus.tensor, strip.fit.q_plus, strip.fit.q_minus,
                               alpha, diagnostics=diagnostics)
    except HomogenizationError as exc:
        raise _stage('effective_model', exc)

    logger.info(f"✅ Model for '{field.name}': p+ = {model.p_plus:.8f}, alpha = {model.alpha.tolist()}, "
                f"skew p = {model.skew_p:.8f}")
    return ModelArtifacts(field=field, grid=grid, cells=cells, strip=strip,
                          compensator=compensators[settings.blend], corrected=corrected,
                          model=model, alternate_alpha=alternate, diagnostics=diagnostics)
