"""
Global compensator g and corrected drift b~ = b + L g on the strip
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fields.drift_field import InterfaceDrift
from fields.grid import GridSpec
from fields.profiles import SWITCHES
from homogenization.errors import DiscretizationError

logger = logging.getLogger(__name__)

BLEND_WIDTH = 1.0


@dataclass
class Compensator:
    """
    g(x) = chi(x1) g+(x mod 1) + (1 - chi(x1)) g-(x mod 1)

    chi switches from 0 to 1 across [-eta~, eta~] with eta~ = eta + 1.
    """

    plus: np.ndarray
    minus: np.ndarray
    grid: GridSpec
    half_width: float
    blend: str = 'smooth'

    def __post_init__(self):
        if self.blend not in SWITCHES:
            raise ValueError(f"Unknown blend profile {self.blend!r}; choose from {sorted(SWITCHES)}")
        self._interpolators = None

    @property
    def support_half_width(self) -> float:
        return self.half_width + BLEND_WIDTH

    @property
    def dimension(self) -> int:
        return self.plus.shape[0]

    def switch(self, x1: np.ndarray) -> np.ndarray:
        eta_tilde = self.support_half_width
        return SWITCHES[self.blend]((np.asarray(x1, dtype=float) + eta_tilde) / (2.0 * eta_tilde))

    def sup_norm(self) -> float:
        return float(max(np.abs(self.plus).max(initial=0.0), np.abs(self.minus).max(initial=0.0)))

    def on_strip(self, pad: int = 0) -> np.ndarray:
        """g at the strip nodes, with `pad` extra x1 nodes on each end; shape (d, M+1+2pad, ...)"""
        n = self.grid.resolution[0]
        index = np.arange(-pad, self.grid.strip_length + 1 + pad)
        x1 = (index - self.grid.strip_half_width * n) / n
        torus_rows = np.mod(index, n)
        chi = self.switch(x1).reshape((1, -1) + (1,) * (self.grid.dimension - 1))
        return chi * self.plus[:, torus_rows] + (1.0 - chi) * self.minus[:, torus_rows]

    def _build_interpolators(self):
        axes = [np.arange(n + 1) / n for n in self.grid.resolution]
        interpolators = []
        for table in (self.plus, self.minus):
            wrapped = table
            for k in range(1, table.ndim):
                wrapped = np.concatenate([wrapped, np.take(wrapped, [0], axis=k)], axis=k)
            interpolators.append([RegularGridInterpolator(axes, wrapped[i]) for i in range(table.shape[0])])
        self._interpolators = interpolators

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Multilinear periodic interpolation of g at arbitrary points (..., d)"""
        if self._interpolators is None:
            self._build_interpolators()
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, points.shape[-1])
        reduced = np.mod(flat, 1.0)
        chi = self.switch(flat[:, 0])[:, None]
        plus = np.stack([f(reduced) for f in self._interpolators[0]], axis=-1)
        minus = np.stack([f(reduced) for f in self._interpolators[1]], axis=-1)
        return (chi * plus + (1.0 - chi) * minus).reshape(points.shape)

    def describe(self) -> Dict[str, Any]:
        return {'blend': self.blend, 'support_half_width': self.support_half_width,
                'sup_norm': self.sup_norm()}


@dataclass
class CorrectedDrift:
    values: np.ndarray
    grid: GridSpec
    support_half_width: float
    leak: float

    def outside(self) -> np.ndarray:
        """Mask of strip x1 nodes with |x1| > eta~"""
        return np.abs(self.grid.strip_x1_nodes()) > self.support_half_width + 1e-12


def build_compensator(g_plus: np.ndarray, g_minus: np.ndarray, grid: GridSpec,
                      half_width: float, blend: str = 'smooth') -> Compensator:
    """Blend the two correctors (arrays of shape (d, *torus_shape)) across the interface"""
    if g_plus.shape != g_minus.shape:
        raise ValueError(f"Corrector shapes differ: {g_plus.shape} vs {g_minus.shape}")
    return Compensator(plus=np.asarray(g_plus, dtype=float), minus=np.asarray(g_minus, dtype=float),
                       grid=grid, half_width=half_width, blend=blend)


def corrected_drift(field: InterfaceDrift, compensator: Compensator, grid: GridSpec,
                    tolerance: float = 1e-8) -> CorrectedDrift:
    """
    b + 1/2 Lap_h g + (b . grad_h) g on the strip nodes

    Raises:
        DiscretizationError: if b~ exceeds tolerance outside I_eta~
    """
    if compensator.grid.resolution != grid.resolution:
        raise DiscretizationError(
            f"Compensator grid {compensator.grid.resolution} differs from strip grid {grid.resolution}")
    shape = grid.strip_shape
    drift = np.moveaxis(field(grid.strip_points()), -1, 0).reshape((field.dimension,) + shape)
    padded = compensator.on_strip(pad=1)
    core = padded[:, 1:-1]
    h = grid.spacing

    laplacian = (padded[:, 2:] - 2.0 * core + padded[:, :-2]) / h[0] ** 2
    transport = drift[0][None] * (padded[:, 2:] - padded[:, :-2]) / (2.0 * h[0])
    for k in range(1, grid.dimension):
        up = np.roll(core, -1, axis=k + 1)
        down = np.roll(core, 1, axis=k + 1)
        laplacian += (up - 2.0 * core + down) / h[k] ** 2
        transport += drift[k][None] * (up - down) / (2.0 * h[k])
    values = drift + 0.5 * laplacian + transport

    result = CorrectedDrift(values=values, grid=grid,
                            support_half_width=compensator.support_half_width, leak=0.0)
    outside = result.outside()
    leak = float(np.abs(values[:, outside]).max(initial=0.0))
    result.leak = leak
    if leak > tolerance:
        raise DiscretizationError(
            f"Corrected drift leaks outside |x1| <= {compensator.support_half_width:g}: "
            f"max |b~| = {leak:.3e}; refine the grid", stage='effective_model')
    logger.debug(f"Corrected drift ({compensator.blend}) leak {leak:.2e}")
    return result
