"""
Invariant measure of the interface diffusion on the truncated strip

mu solves L^T mu = 0 on [-K_s, K_s] x T^(d-1) with mu = c+ mu+ on the
plane x1 = K_s and mu = c- mu- on x1 = -K_s. Two boundary problems are
solved with one factorization and combined so that the net flux through
the strip vanishes. The resulting measure is rescaled so that the
extrapolated far-field cell masses satisfy q+ + q- = 1.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from fields.drift_field import InterfaceDrift
from fields.grid import GridSpec, unit_cell_weights
from homogenization.errors import ConfigError, DiscretizationError, SolverError, TruncationError
from homogenization.grid_operators import Factorized, generator_matrix, weighted_norm
from homogenization.torus_cell import CellSolution, SolverSettings

logger = logging.getLogger(__name__)

SIDES = ('plus', 'minus')
# outer masses are compared on a grid of this relative step, above solver round-off
MASS_QUANTUM = 1e-10


@dataclass(frozen=True)
class FitSettings:
    threshold: float = 1e-3
    min_cells: int = 4

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]]) -> 'FitSettings':
        section = section or {}
        return cls(threshold=float(section.get('fit_threshold', 1e-3)),
                   min_cells=int(section.get('min_fit_cells', 4)))


@dataclass(frozen=True)
class CellMass:
    side: str
    j: int
    mass: float


@dataclass
class CellMassFit:
    q_plus: float
    q_minus: float
    rho_plus: float
    rho_minus: float
    residual: float
    raw_q_plus: float
    raw_q_minus: float
    first_cell: int
    degenerate: Dict[str, bool] = dataclass_field(default_factory=dict)

    @property
    def scale(self) -> float:
        """Factor that maps the raw measure to the normalized one"""
        return 1.0 / (self.raw_q_plus + self.raw_q_minus)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'q_plus': self.q_plus, 'q_minus': self.q_minus,
            'rho_plus': self.rho_plus, 'rho_minus': self.rho_minus,
            'residual': self.residual, 'raw_q_plus': self.raw_q_plus,
            'raw_q_minus': self.raw_q_minus, 'scale': self.scale,
            'first_cell': self.first_cell, 'degenerate': dict(self.degenerate),
        }


@dataclass
class StripMeasure:
    values: np.ndarray
    grid: GridSpec
    half_width: float
    residual: float
    boundary_constants: Tuple[float, float]
    flux: float
    scale: float = 1.0
    fit: Optional[CellMassFit] = None

    def x1_weights(self) -> np.ndarray:
        """Trapezoid weights along x1 (half weight on the two end planes)"""
        h = self.grid.spacing[0]
        weights = np.full(self.grid.strip_length + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        return weights

    def quadrature_weights(self) -> np.ndarray:
        transverse = float(np.prod(self.grid.spacing[1:]))
        shape = (-1,) + (1,) * (self.grid.dimension - 1)
        return self.x1_weights().reshape(shape) * transverse

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integral of grid function(s) of shape (..., *strip_shape) against mu"""
        weighted = self.values * self.quadrature_weights()
        axes = tuple(range(values.ndim - weighted.ndim, values.ndim))
        return np.sum(values * weighted, axis=axes)

    def scaled(self, factor: float) -> 'StripMeasure':
        return StripMeasure(values=self.values * factor, grid=self.grid, half_width=self.half_width,
                            residual=self.residual, boundary_constants=self.boundary_constants,
                            flux=self.flux * factor, scale=self.scale * factor, fit=self.fit)


# ===== PDE SOLVE =====

def _plane_flux(values: np.ndarray, drift_x1: np.ndarray, grid: GridSpec, face: int) -> float:
    """Total of 1/2 d1 mu - b1 mu across the face between x1 nodes face and face+1"""
    h = grid.spacing[0]
    lo, hi = values[face], values[face + 1]
    flux = 0.5 * (hi - lo) / h - 0.5 * (drift_x1[face] * lo + drift_x1[face + 1] * hi)
    return float(np.sum(flux) * np.prod(grid.spacing[1:]))


def strip_invariant_measure(field: InterfaceDrift, cells: Tuple[CellSolution, CellSolution],
                            grid: GridSpec, settings: Optional[SolverSettings] = None,
                            fit_settings: Optional[FitSettings] = None) -> StripMeasure:
    """
    Zero-flux invariant measure on the strip, normalized so q+ + q- = 1

    Args:
        field: interface drift
        cells: (plus, minus) cell solutions on the same torus grid
        grid: grid whose torus resolution matches the cells

    Raises:
        ConfigError: grid mismatch or strip narrower than eta + 2
        DiscretizationError: non-positive measure inside the strip
        SolverError: residual above tolerance
        TruncationError: cell masses not converged inside the strip
    """
    settings = settings or SolverSettings()
    fit_settings = fit_settings or FitSettings()
    grid.check_strip(field.half_width)
    plus_cell, minus_cell = cells
    for cell in cells:
        if cell.grid.resolution != grid.resolution:
            raise ConfigError(f"Cell grid {cell.grid.resolution} differs from strip grid {grid.resolution}")

    shape = grid.strip_shape
    drift = np.moveaxis(field(grid.strip_points()), -1, 0).reshape((field.dimension,) + shape)
    adjoint = generator_matrix(drift, grid.spacing, periodic_x1=False).T.tocsr()
    plane = int(np.prod(grid.transverse_shape))
    total = adjoint.shape[0]
    interior = slice(plane, total - plane)
    inner = adjoint[interior]
    a_ii = inner[:, interior]
    a_ib = inner[:, np.r_[0:plane, total - plane:total]]
    logger.info(f"Strip solve for '{field.name}': {a_ii.shape[0]} unknowns, K_s = {grid.strip_half_width}")
    solver = Factorized(a_ii, settings.direct_limit, settings.iterative_rtol, label='strip measure')

    right = plus_cell.density.values[0].ravel()
    left = minus_cell.density.values[0].ravel()
    zeros = np.zeros(plane)
    partial = {}
    for side, boundary in (('plus', np.concatenate([zeros, right])),
                           ('minus', np.concatenate([left, zeros]))):
        full = np.empty(total)
        full[:plane], full[-plane:] = boundary[:plane], boundary[plane:]
        full[interior] = solver.solve(-(a_ib @ boundary))
        partial[side] = full.reshape(shape)

    flux_plus = _plane_flux(partial['plus'], drift[0], grid, 0)
    flux_minus = _plane_flux(partial['minus'], drift[0], grid, 0)
    c_plus, c_minus = -flux_minus, flux_plus
    if not (c_plus > 0 and c_minus > 0):
        raise SolverError(f"Flux balance gives non-positive boundary constants ({c_plus:.3e}, {c_minus:.3e})",
                          stage='strip_measure')
    values = c_plus * partial['plus'] + c_minus * partial['minus']

    inside = values[1:-1]
    if inside.min() <= 0:
        raise DiscretizationError(f"Strip measure not positive inside the strip (min {inside.min():.3e})",
                                  stage='strip_measure')
    peak = float(values.max())
    weight = grid.cell_volume
    residual = weighted_norm(adjoint[interior] @ values.ravel(), weight) * min(grid.spacing) ** 2 / peak
    if residual > settings.tolerance:
        raise SolverError("Strip stationarity residual above tolerance", residual=residual,
                          stage='strip_measure')
    net_flux = _plane_flux(values, drift[0], grid, grid.strip_length - 1)
    logger.debug(f"Strip constants c+={c_plus:.6e} c-={c_minus:.6e}, far-face flux {net_flux:.2e}, "
                 f"residual {residual:.2e}")

    raw = StripMeasure(values=values, grid=grid, half_width=field.half_width, residual=residual,
                       boundary_constants=(c_plus, c_minus), flux=net_flux)
    fit = limit_masses(cell_masses(raw), first_fit_cell(field.half_width),
                       fit_settings.threshold, fit_settings.min_cells)
    normalized = raw.scaled(fit.scale)
    normalized.fit = fit
    logger.info(f"✅ Strip measure: q+ = {fit.q_plus:.10f}, q- = {fit.q_minus:.10f}, "
                f"fit residual {fit.residual:.2e}")
    return normalized


# ===== CELL MASSES =====

def first_fit_cell(half_width: float) -> int:
    """Index of the first unit cell lying beyond x1 = eta + 1"""
    return int(math.ceil(half_width + 1.0))


def cell_masses(mu: StripMeasure) -> List[CellMass]:
    """Mass of every unit cell C_j on both sides, ordered by distance from the interface"""
    transverse = np.sum(mu.values, axis=tuple(range(1, mu.values.ndim))) * np.prod(mu.grid.spacing[1:])
    masses = []
    for side in SIDES:
        for j in range(mu.grid.strip_half_width):
            weights = unit_cell_weights(mu.grid, side, j)
            masses.append(CellMass(side=side, j=j, mass=float(np.dot(weights, transverse))))
    return masses


def _fit_side(js: np.ndarray, ms: np.ndarray) -> Tuple[float, float, float, bool]:
    """Least-squares fit m_j = q + A rho^(j - j0); returns (q, rho, relative rms, degenerate)"""
    scale = float(np.mean(ms))
    if np.ptp(ms) <= 1.5 * MASS_QUANTUM:
        return scale, 0.0, 0.0, True
    offsets = js - js[0]

    def linear_fit(rho: float) -> Tuple[np.ndarray, float]:
        design = np.column_stack([np.ones_like(offsets, dtype=float), rho ** offsets])
        coeffs, *_ = np.linalg.lstsq(design, ms, rcond=None)
        return coeffs, float(np.sum((design @ coeffs - ms) ** 2))

    result = minimize_scalar(lambda rho: linear_fit(rho)[1], bounds=(1e-8, 0.95),
                             method='bounded', options={'xatol': 1e-10})
    rho = float(result.x)
    coeffs, ssr = linear_fit(rho)
    constant_ssr = float(np.sum((ms - scale) ** 2))
    if constant_ssr <= ssr:
        return scale, 0.0, math.sqrt(constant_ssr / len(ms)) / abs(scale), False
    return float(coeffs[0]), rho, math.sqrt(ssr / len(ms)) / abs(scale), False


def limit_masses(masses: Sequence[CellMass], first_cell: int = 2, threshold: float = 1e-3,
                 min_cells: int = 4) -> CellMassFit:
    """
    Extrapolate the far-field cell mass on each side and normalize q+ + q- = 1

    Masses are divided by the largest outer mass and rounded to
    MASS_QUANTUM before fitting, so q+- do not depend on the scale of mu
    and tails equal up to solver round-off give exactly equal q+-.

    Raises:
        TruncationError: fewer than min_cells outer cells, or fit residual
            above threshold (the strip is too narrow)
    """
    outer = {}
    for side in SIDES:
        outer[side] = sorted((m for m in masses if m.side == side and m.j >= first_cell), key=lambda m: m.j)
        if len(outer[side]) < min_cells:
            raise TruncationError(
                f"Only {len(outer[side])} cells beyond x1 = {first_cell} on the {side} side; "
                f"increase the strip half-width K_s")
    reference = max(m.mass for side in SIDES for m in outer[side])
    if not reference > 0:
        raise TruncationError(f"Non-positive outer cell masses (largest {reference:.3e})")

    fits = {}
    for side in SIDES:
        js = np.array([m.j for m in outer[side]], dtype=float)
        ms = np.round(np.array([m.mass for m in outer[side]]) / reference / MASS_QUANTUM) * MASS_QUANTUM
        fits[side] = _fit_side(js, ms)
        logger.debug(f"{side} cell fit: q={fits[side][0]:.12e} rho={fits[side][1]:.4g} "
                     f"residual={fits[side][2]:.2e}")

    residual = max(fits['plus'][2], fits['minus'][2])
    if residual > threshold:
        raise TruncationError(f"Cell-mass fit residual {residual:.2e} above {threshold:.1e}; "
                              f"increase the strip half-width K_s")
    unit_plus, unit_minus = fits['plus'][0], fits['minus'][0]
    if not (unit_plus > 0 and unit_minus > 0):
        raise TruncationError(f"Non-positive limit masses ({unit_plus:.3e}, {unit_minus:.3e})")
    if residual > 0.1 * threshold:
        logger.warning(f"⚠️ Cell-mass fit residual {residual:.2e} close to threshold {threshold:.1e}")

    q_plus = unit_plus / (unit_plus + unit_minus)
    raw_plus, raw_minus = unit_plus * reference, unit_minus * reference
    return CellMassFit(q_plus=q_plus, q_minus=1.0 - q_plus,
                       rho_plus=fits['plus'][1], rho_minus=fits['minus'][1],
                       residual=residual, raw_q_plus=raw_plus, raw_q_minus=raw_minus,
                       first_cell=first_cell,
                       degenerate={'plus': fits['plus'][3], 'minus': fits['minus'][3]})


def mass_normalisation(p_plus: float, d11_plus: float, d11_minus: float,
                       mu: StripMeasure, ks: Sequence[int]) -> Dict[str, Any]:
    """
    beta = 2 (p+/D+_11 + p-/D-_11) with the profile k^-1 mu([-k, k] x T^(d-1))

    The profile tends to q+ + q- = 1 for a normalized measure. Diagnostic only.
    """
    beta = 2.0 * (p_plus / d11_plus + (1.0 - p_plus) / d11_minus)
    transverse = np.sum(mu.values, axis=tuple(range(1, mu.values.ndim))) * np.prod(mu.grid.spacing[1:])
    x1 = mu.grid.strip_x1_nodes()
    h = mu.grid.spacing[0]
    profile = []
    for k in ks:
        if k > mu.grid.strip_half_width:
            continue
        inside = np.abs(x1) <= k + 1e-12
        weights = np.where(inside, h, 0.0)
        weights[np.isclose(np.abs(x1), k)] = 0.5 * h
        profile.append({'k': int(k), 'mass_over_k': float(np.dot(weights, transverse)) / k})
    return {'beta': beta, 'profile': profile}
