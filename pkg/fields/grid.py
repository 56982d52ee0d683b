"""
Uniform node grids on the torus T^d and on the truncated strip [-K_s, K_s] x T^(d-1)
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from homogenization.errors import ConfigError

MIN_RESOLUTION = 8


@dataclass(frozen=True)
class GridSpec:
    """
    Node grid description.

    Nodes sit at x_k = i / N_k on each axis; node i is the center of the
    cell [x_i - h/2, x_i + h/2). Along x1 the strip grid runs over the
    integers -K_s .. K_s so every unit cell boundary is a node.
    """

    resolution: Tuple[int, ...]
    strip_half_width: int

    def __post_init__(self):
        if len(self.resolution) < 2:
            raise ConfigError("Grid needs a resolution for at least two axes")
        for n in self.resolution:
            if int(n) != n or n < MIN_RESOLUTION:
                raise ConfigError(f"Resolution {n} below minimum {MIN_RESOLUTION}")
        if int(self.strip_half_width) != self.strip_half_width or self.strip_half_width < 1:
            raise ConfigError(f"Strip half-width must be a positive integer, got {self.strip_half_width}")

    @classmethod
    def build(cls, dimension: int, resolution: Union[int, Sequence[int]],
              strip_half_width: int) -> 'GridSpec':
        if isinstance(resolution, (int, np.integer)):
            resolution = (int(resolution),) * dimension
        resolution = tuple(int(n) for n in resolution)
        if len(resolution) != dimension:
            raise ConfigError(f"Got {len(resolution)} resolutions for dimension {dimension}")
        return cls(resolution=resolution, strip_half_width=int(strip_half_width))

    @classmethod
    def from_config(cls, section: Dict[str, Any], dimension: int, half_width: float) -> 'GridSpec':
        """Build from the `grid` config section; K_s defaults to ceil(eta) + 8"""
        strip = section.get('strip_half_width')
        if strip is None:
            strip = default_strip_half_width(half_width)
        grid = cls.build(dimension, section.get('resolution', 64), strip)
        grid.check_strip(half_width)
        return grid

    # ===== GEOMETRY =====
    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(1.0 / n for n in self.resolution)

    @property
    def cell_volume(self) -> float:
        """Quadrature weight of one node, h_1 * ... * h_d"""
        return float(np.prod(self.spacing))

    @property
    def transverse_shape(self) -> Tuple[int, ...]:
        return self.resolution[1:]

    @property
    def strip_length(self) -> int:
        """Number of x1 intervals across the strip"""
        return 2 * self.strip_half_width * self.resolution[0]

    @property
    def strip_shape(self) -> Tuple[int, ...]:
        return (self.strip_length + 1,) + self.transverse_shape

    def check_strip(self, half_width: float):
        if self.strip_half_width < half_width + 2:
            raise ConfigError(
                f"Strip half-width {self.strip_half_width} must be at least eta + 2 = {half_width + 2:g}")

    def axis_nodes(self, axis: int) -> np.ndarray:
        n = self.resolution[axis]
        return np.arange(n) / n

    def strip_x1_nodes(self) -> np.ndarray:
        n = self.resolution[0]
        return (np.arange(self.strip_length + 1) - self.strip_half_width * n) / n

    def torus_axes(self) -> List[np.ndarray]:
        return [self.axis_nodes(k) for k in range(self.dimension)]

    def strip_axes(self) -> List[np.ndarray]:
        return [self.strip_x1_nodes()] + [self.axis_nodes(k) for k in range(1, self.dimension)]

    def torus_points(self) -> np.ndarray:
        """All torus nodes as an (n, d) array in C order"""
        return _mesh_points(self.torus_axes())

    def strip_points(self) -> np.ndarray:
        return _mesh_points(self.strip_axes())

    def coarsened(self) -> 'GridSpec':
        """Grid with every axis of resolution >= 16 halved (odd axes are refused)"""
        coarse = []
        for n in self.resolution:
            if n >= 2 * MIN_RESOLUTION:
                if n % 2:
                    raise ConfigError(f"Cannot halve odd resolution {n}")
                coarse.append(n // 2)
            else:
                coarse.append(n)
        if tuple(coarse) == self.resolution:
            raise ConfigError(f"Resolution {self.resolution} too coarse to halve")
        return GridSpec(resolution=tuple(coarse), strip_half_width=self.strip_half_width)

    def with_strip(self, strip_half_width: int) -> 'GridSpec':
        return GridSpec(resolution=self.resolution, strip_half_width=strip_half_width)

    def to_dict(self) -> Dict[str, Any]:
        return {'resolution': list(self.resolution), 'strip_half_width': self.strip_half_width}


def default_strip_half_width(half_width: float, margin: int = 8) -> int:
    return int(math.ceil(half_width)) + margin


def _mesh_points(axes: List[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=-1)


def unit_cell_weights(grid: GridSpec, side: str, j: int) -> Optional[np.ndarray]:
    """
    Trapezoid weights along x1 selecting the unit cell C_j on one side.

    Returns a vector over the strip x1 nodes; nodes on the cell boundary
    carry weight h/2, interior nodes h.
    """
    n = grid.resolution[0]
    h = 1.0 / n
    centre = grid.strip_half_width * n
    if side == 'plus':
        lo = centre + j * n
    elif side == 'minus':
        lo = centre - (j + 1) * n
    else:
        raise ValueError(f"Unknown side {side!r}")
    hi = lo + n
    if lo < 0 or hi > grid.strip_length:
        return None
    weights = np.zeros(grid.strip_length + 1)
    weights[lo:hi + 1] = h
    weights[lo] = weights[hi] = 0.5 * h
    return weights
