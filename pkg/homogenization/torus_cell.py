"""
Periodic cell problems on the torus T^d

For one periodic drift b this module computes the invariant density mu
(L^T mu = 0, sum mu w = 1), the centered corrector g (L g = -b) and the
effective tensor D_ij = sum_k <(delta_ik + d_k g_i)(delta_jk + d_k g_j)>_mu.

Residuals are reported for the operator scaled by h_min^2 so that they
do not grow with the resolution.
"""

import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, Optional

import numpy as np
from scipy import sparse

from fields.drift_field import PeriodicDrift
from fields.grid import GridSpec
from homogenization.errors import (CenteringError, ConfigError, DiscretizationError,
                                   ModelInvariantError, SolverError)
from homogenization.grid_operators import (Factorized, centered_gradient, generator_matrix,
                                           solve_sparse, weighted_norm)

logger = logging.getLogger(__name__)

NEGATIVITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-10
    centering_tolerance: float = 1e-8
    direct_limit: int = 300000
    iterative_rtol: float = 1e-12
    extrapolate: bool = True

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]]) -> 'SolverSettings':
        section = section or {}
        return cls(
            tolerance=float(section.get('tolerance', 1e-10)),
            centering_tolerance=float(section.get('centering_tolerance', 1e-8)),
            direct_limit=int(section.get('direct_limit', 300000)),
            iterative_rtol=float(section.get('iterative_rtol', 1e-12)),
            extrapolate=bool(section.get('extrapolate', True)),
        )


@dataclass
class TorusDensity:
    values: np.ndarray
    grid: GridSpec
    residual: float

    @property
    def weight(self) -> float:
        return self.grid.cell_volume

    @property
    def total(self) -> float:
        return float(np.sum(self.values) * self.weight)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrals of one or more grid functions (leading axes kept) against mu"""
        axes = tuple(range(values.ndim - self.values.ndim, values.ndim))
        return np.sum(values * self.values, axis=axes) * self.weight


@dataclass
class Corrector:
    values: np.ndarray          # (d, n_1, ..., n_d)
    gradients: np.ndarray       # (d, d, n_1, ..., n_d), [i, k] = d_k g_i
    grid: GridSpec
    residuals: np.ndarray
    multipliers: np.ndarray     # bordered-system multipliers, equal to -<b>_mu

    @property
    def sigma_tilde(self) -> np.ndarray:
        """delta_ik + d_k g_i"""
        d = self.values.shape[0]
        sigma = self.gradients.copy()
        for i in range(d):
            sigma[i, i] += 1.0
        return sigma


@dataclass
class DiffusionTensor:
    matrix: np.ndarray
    fine: Optional[np.ndarray] = None
    coarse: Optional[np.ndarray] = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def error_indicator(self) -> Optional[float]:
        """Max entrywise gap between the two raw tensors of an extrapolation"""
        if self.fine is None or self.coarse is None:
            return None
        return float(np.max(np.abs(self.fine - self.coarse)))

    def check(self, symmetry_tol: float = 1e-12, psd_tol: float = 1e-10):
        asym = float(np.max(np.abs(self.matrix - self.matrix.T)))
        if asym > symmetry_tol:
            raise ModelInvariantError(f"Diffusion tensor not symmetric (gap {asym:.2e})")
        smallest = float(self.eigenvalues.min())
        if smallest < -psd_tol:
            raise ModelInvariantError(f"Diffusion tensor not positive semidefinite (eigenvalue {smallest:.3e})")

    def to_dict(self) -> Dict[str, Any]:
        out = {'matrix': self.matrix.tolist()}
        if self.fine is not None:
            out['raw_fine'] = self.fine.tolist()
            out['raw_coarse'] = self.coarse.tolist()
            out['error_indicator'] = self.error_indicator
        return out


@dataclass
class CellSolution:
    side: str
    drift: np.ndarray
    density: TorusDensity
    corrector: Corrector
    tensor: DiffusionTensor
    raw_tensor: DiffusionTensor
    centering: np.ndarray
    diagnostics: Dict[str, Any] = dataclass_field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.density.grid

    def summary(self) -> Dict[str, Any]:
        return {
            'side': self.side,
            'D': self.tensor.matrix.tolist(),
            'D_raw': self.raw_tensor.matrix.tolist(),
            'tensor': self.tensor.to_dict(),
            'centering_residual': self.centering.tolist(),
            'stationarity_residual': self.density.residual,
            'corrector_residuals': self.corrector.residuals.tolist(),
            'grid': self.grid.to_dict(),
        }


def _scaled(grid: GridSpec) -> float:
    return min(grid.spacing) ** 2


# ===== OPERATIONS =====

def stationary_density(b: PeriodicDrift, grid: GridSpec, tol: float = 1e-10,
                       direct_limit: int = 300000, rtol: float = 1e-12) -> TorusDensity:
    """
    Invariant density of the periodic diffusion as the null vector of L^T

    One row of L^T is replaced by the normalization sum(mu) * w = 1.

    Raises:
        DiscretizationError: if mu has entries below -1e-12
        SolverError: if the scaled stationarity residual exceeds tol
    """
    drift = b.on_torus(grid)
    adjoint = generator_matrix(drift, grid.spacing).T.tocsr()
    size = adjoint.shape[0]
    weight = grid.cell_volume

    system = sparse.vstack([sparse.csr_matrix(np.full((1, size), weight)), adjoint[1:]]).tocsc()
    rhs = np.zeros(size)
    rhs[0] = 1.0
    mu = solve_sparse(system, rhs, direct_limit, rtol, label='stationary density')

    if mu.min() < -NEGATIVITY_TOLERANCE:
        raise DiscretizationError(
            f"Invariant density has negative value {mu.min():.3e}; refine the grid "
            f"(needs h * |b| <= 1, sup|b| = {np.abs(drift).max():.3g})")
    mu = np.maximum(mu, 0.0)
    mu /= np.sum(mu) * weight

    residual = weighted_norm(adjoint @ mu, weight) * _scaled(grid)
    if residual > tol:
        raise SolverError("Stationary density residual above tolerance", residual=residual,
                          stage='torus_cell')
    logger.debug(f"Stationary density for '{b.name}' at {grid.resolution}: residual {residual:.2e}")
    return TorusDensity(values=mu.reshape(grid.resolution), grid=grid, residual=residual)


def check_centering(b: PeriodicDrift, mu: TorusDensity) -> np.ndarray:
    """Componentwise integral of b against mu"""
    return mu.integrate(b.on_torus(mu.grid))


def corrector(b: PeriodicDrift, mu: TorusDensity, grid: Optional[GridSpec] = None,
              tol: float = 1e-10, centering_tol: float = 1e-8,
              direct_limit: int = 300000, rtol: float = 1e-12) -> Corrector:
    """
    Centered solution of L g_i = -b_i for every component

    The constant kernel of L is removed by a bordered system: the extra
    column (all ones) carries a multiplier that equals -<b_i>_mu, and the
    extra row imposes sum(g_i mu) w = 0.

    Raises:
        CenteringError: if b is not centered against mu
        SolverError: if a component residual exceeds tol
    """
    grid = grid or mu.grid
    if grid.resolution != mu.grid.resolution:
        raise ConfigError(f"Corrector grid {grid.resolution} differs from density grid {mu.grid.resolution}")
    drift = b.on_torus(grid)
    d = drift.shape[0]
    weight = grid.cell_volume
    generator = generator_matrix(drift, grid.spacing)
    size = generator.shape[0]

    mu_row = sparse.csr_matrix(mu.values.ravel()[None, :] * weight)
    bordered = sparse.bmat([[generator, sparse.csr_matrix(np.ones((size, 1)))],
                            [mu_row, None]], format='csc')
    solver = Factorized(bordered, direct_limit, rtol, label='corrector')

    values = np.zeros((d,) + grid.resolution)
    residuals = np.zeros(d)
    multipliers = np.zeros(d)
    for i in range(d):
        if not np.any(drift[i]):
            continue
        solution = solver.solve(np.concatenate([-drift[i].ravel(), [0.0]]))
        g_i, multipliers[i] = solution[:-1], solution[-1]
        if abs(multipliers[i]) > centering_tol:
            raise CenteringError(
                f"Drift '{b.name}' component {i + 1} is not centered: "
                f"<b>_mu = {-multipliers[i]:.3e} (tolerance {centering_tol:.1e})",
                residual=abs(multipliers[i]))
        residuals[i] = weighted_norm(generator @ g_i + drift[i].ravel(), weight) * _scaled(grid)
        if residuals[i] > tol:
            raise SolverError(f"Corrector component {i + 1} residual above tolerance",
                              residual=residuals[i], stage='torus_cell')
        values[i] = g_i.reshape(grid.resolution)

    gradients = np.stack([centered_gradient(values[i], grid.spacing) for i in range(d)])
    return Corrector(values=values, gradients=gradients, grid=grid,
                     residuals=residuals, multipliers=multipliers)


def effective_tensor(corr: Corrector, mu: TorusDensity) -> DiffusionTensor:
    """D_ij = sum_k <sigma_ik sigma_jk>_mu with sigma = I + grad g"""
    d = corr.values.shape[0]
    sigma = corr.sigma_tilde.reshape(d, d, -1)
    matrix = np.einsum('ikn,jkn,n->ij', sigma, sigma, mu.values.ravel()) * mu.weight
    return DiffusionTensor(matrix=0.5 * (matrix + matrix.T))


def plain_tensor(b: PeriodicDrift, grid: GridSpec, settings: SolverSettings) -> DiffusionTensor:
    mu = stationary_density(b, grid, settings.tolerance, settings.direct_limit, settings.iterative_rtol)
    corr = corrector(b, mu, grid, settings.tolerance, settings.centering_tolerance,
                     settings.direct_limit, settings.iterative_rtol)
    return effective_tensor(corr, mu)


def extrapolated_tensor(b: PeriodicDrift, grid: GridSpec,
                        settings: Optional[SolverSettings] = None,
                        fine: Optional[DiffusionTensor] = None) -> DiffusionTensor:
    """
    Richardson extrapolation (4 D(N) - D(N/2)) / 3 of the second-order tensor

    Axes with resolution below 16 are not halved.
    """
    settings = settings or SolverSettings()
    if fine is None:
        fine = plain_tensor(b, grid, settings)
    coarse = plain_tensor(b, grid.coarsened(), settings)
    matrix = (4.0 * fine.matrix - coarse.matrix) / 3.0
    return DiffusionTensor(matrix=0.5 * (matrix + matrix.T), fine=fine.matrix, coarse=coarse.matrix)


def solve_cell(b: PeriodicDrift, grid: GridSpec, settings: Optional[SolverSettings] = None,
               side: str = 'plus') -> CellSolution:
    """
    Full cell solve: density, centering check, corrector and tensor

    Raises:
        CenteringError: if |<b>_mu| exceeds the centering tolerance
    """
    settings = settings or SolverSettings()
    mu = stationary_density(b, grid, settings.tolerance, settings.direct_limit, settings.iterative_rtol)
    centering = check_centering(b, mu)
    if np.max(np.abs(centering)) > settings.centering_tolerance:
        raise CenteringError(
            f"Tail '{b.name}' ({side}) is not centered: <b>_mu = {centering.tolist()}",
            residual=float(np.max(np.abs(centering))))
    corr = corrector(b, mu, grid, settings.tolerance, settings.centering_tolerance,
                     settings.direct_limit, settings.iterative_rtol)
    raw = effective_tensor(corr, mu)
    raw.check()

    tensor = raw
    if settings.extrapolate:
        try:
            tensor = extrapolated_tensor(b, grid, settings, fine=raw)
            tensor.check()
        except ConfigError as exc:
            logger.warning(f"⚠️ No extrapolation for {side} cell: {exc}")
            tensor = raw

    logger.info(f"✅ Cell '{b.name}' ({side}) solved at {grid.resolution}: "
                f"D = {np.array2string(tensor.matrix, precision=8)}")
    return CellSolution(side=side, drift=b.on_torus(grid), density=mu, corrector=corr,
                        tensor=tensor, raw_tensor=raw, centering=centering)
