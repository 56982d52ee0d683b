"""
Drift fields: periodic tails, interface drifts, validation and grid sampling
"""

import csv
import logging
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Any, Callable, Dict

import numpy as np

from fields.grid import GridSpec
from homogenization.errors import InvalidFieldError

logger = logging.getLogger(__name__)

# (n, d) points -> (n, d) drift values; must accept any leading shape (..., d)
Evaluator = Callable[[np.ndarray], np.ndarray]

VALIDATION_TOLERANCE = 1e-10


@dataclass(frozen=True)
class PeriodicDrift:
    """Drift on the torus T^d; every coordinate is reduced mod 1 before evaluation"""

    dimension: int
    evaluator: Evaluator
    name: str = 'periodic'

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _checked(self.evaluator(np.mod(x, 1.0)), x.shape, self.name)

    def on_torus(self, grid: GridSpec) -> np.ndarray:
        """Drift sampled at the torus nodes, shape (d, N_1, ..., N_d)"""
        values = self(grid.torus_points())
        return np.moveaxis(values, -1, 0).reshape((self.dimension,) + grid.resolution)


@dataclass(frozen=True)
class InterfaceDrift:
    """
    Drift on R x T^(d-1) that agrees with periodic tails away from the interface.

    `evaluator` is the raw callable; calling the field reduces the coordinates
    parallel to the interface mod 1 first.
    """

    dimension: int
    half_width: float
    evaluator: Evaluator
    plus: PeriodicDrift
    minus: PeriodicDrift
    name: str = 'interface'
    params: Dict[str, Any] = dataclass_field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 2:
            raise InvalidFieldError(f"Dimension must be at least 2, got {self.dimension}")
        if not self.half_width > 0:
            raise InvalidFieldError(f"Interface half-width must be positive, got {self.half_width}")
        if self.plus.dimension != self.dimension or self.minus.dimension != self.dimension:
            raise InvalidFieldError("Tail dimensions do not match the field dimension")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[..., 1:] = np.mod(x[..., 1:], 1.0)
        return _checked(self.evaluator(x), x.shape, self.name)

    def tail(self, side: str) -> PeriodicDrift:
        if side == 'plus':
            return self.plus
        if side == 'minus':
            return self.minus
        raise ValueError(f"Unknown side {side!r}")

    def describe(self) -> Dict[str, Any]:
        return {'name': self.name, 'dimension': self.dimension,
                'half_width': self.half_width, 'params': dict(self.params)}


@dataclass
class ValidationReport:
    periodicity_violation: float
    tail_violation: float
    tail_periodicity_violation: float
    sup_norm: float
    max_difference_quotient: float
    tolerance: float = VALIDATION_TOLERANCE

    @property
    def passed(self) -> bool:
        return (self.periodicity_violation < self.tolerance
                and self.tail_violation < self.tolerance
                and self.tail_periodicity_violation < self.tolerance
                and np.isfinite(self.sup_norm))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'periodicity_violation': self.periodicity_violation,
            'tail_violation': self.tail_violation,
            'tail_periodicity_violation': self.tail_periodicity_violation,
            'sup_norm': self.sup_norm,
            'max_difference_quotient': self.max_difference_quotient,
            'tolerance': self.tolerance,
            'passed': self.passed,
        }


@dataclass
class DriftTable:
    """Drift values at the strip nodes, in C order over (x1, x2, ..., xd)"""

    points: np.ndarray
    values: np.ndarray
    shape: tuple

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k].reshape(self.shape)


def _checked(values: np.ndarray, shape: tuple, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        values = np.broadcast_to(values, shape).astype(float)
    if not np.all(np.isfinite(values)):
        raise InvalidFieldError(f"Drift '{name}' produced non-finite values")
    return values


def _raw(evaluator: Evaluator, x: np.ndarray, name: str) -> np.ndarray:
    return _checked(evaluator(x), x.shape, name)


# ===== VALIDATION =====

def validate_drift(field: InterfaceDrift, grid: GridSpec) -> ValidationReport:
    """
    Check periodicity, tail agreement and boundedness of a drift by sampling.

    Raw evaluators are used so that a violation of periodicity in the
    transverse directions is visible before the internal mod-1 reduction.

    Raises:
        InvalidFieldError: if the evaluator returns non-finite values
    """
    points = grid.strip_points()
    values = _raw(field.evaluator, points, field.name)

    periodicity = 0.0
    for k in range(1, field.dimension):
        shifted = points.copy()
        shifted[:, k] += 1.0
        periodicity = max(periodicity, float(np.max(np.abs(
            _raw(field.evaluator, shifted, field.name) - values))))

    tail_gap = 0.0
    x1 = points[:, 0]
    for side, mask in (('plus', x1 > field.half_width), ('minus', x1 < -field.half_width)):
        if np.any(mask):
            tail_values = field.tail(side)(points[mask])
            tail_gap = max(tail_gap, float(np.max(np.abs(values[mask] - tail_values))))

    torus = grid.torus_points()
    tail_periodicity = 0.0
    for tail in (field.plus, field.minus):
        base = _raw(tail.evaluator, torus, tail.name)
        for k in range(field.dimension):
            shifted = torus.copy()
            shifted[:, k] += 1.0
            tail_periodicity = max(tail_periodicity, float(np.max(np.abs(
                _raw(tail.evaluator, shifted, tail.name) - base))))

    table = values.reshape(grid.strip_shape + (field.dimension,))
    quotient = 0.0
    for k, h in enumerate(grid.spacing):
        diff = np.abs(np.diff(table, axis=k)) / h
        if diff.size:
            quotient = max(quotient, float(np.max(diff)))

    report = ValidationReport(
        periodicity_violation=periodicity,
        tail_violation=tail_gap,
        tail_periodicity_violation=tail_periodicity,
        sup_norm=float(np.max(np.abs(values))) if values.size else 0.0,
        max_difference_quotient=quotient,
    )
    if report.passed:
        logger.debug(f"Field '{field.name}' validated: {report.to_dict()}")
    else:
        logger.warning(f"⚠️ Field '{field.name}' failed validation: {report.to_dict()}")
    return report


# ===== SAMPLING =====

def sample_on_grid(field: InterfaceDrift, grid: GridSpec) -> DriftTable:
    """Dense table of drift values at the strip nodes"""
    points = grid.strip_points()
    return DriftTable(points=points, values=field(points), shape=grid.strip_shape)


def export_drift_table(table: DriftTable, path: str):
    """Write a DriftTable as CSV with header x1,...,xd,b1,...,bd"""
    d = table.points.shape[1]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f'x{k + 1}' for k in range(d)] + [f'b{k + 1}' for k in range(d)]
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in np.hstack([table.points, table.values]):
            writer.writerow([repr(float(v)) for v in row])


# ===== TRANSFORMS =====

def reflect_field(field: InterfaceDrift) -> InterfaceDrift:
    """
    Mirror image under x1 -> -x1: b_hat_1(x) = -b_1(Rx), b_hat_j(x) = b_j(Rx).

    The tails swap sides; the reflected tails are evaluated at the reflected
    torus point so they stay 1-periodic.
    """
    def mirror(evaluator: Evaluator) -> Evaluator:
        def reflected(x: np.ndarray) -> np.ndarray:
            y = np.array(x, dtype=float)
            y[..., 0] = -y[..., 0]
            out = np.array(evaluator(y), dtype=float)
            out[..., 0] = -out[..., 0]
            return out
        return reflected

    plus = PeriodicDrift(field.dimension, mirror(field.minus.evaluator), f'{field.minus.name}_reflected')
    minus = PeriodicDrift(field.dimension, mirror(field.plus.evaluator), f'{field.plus.name}_reflected')
    return InterfaceDrift(
        dimension=field.dimension,
        half_width=field.half_width,
        evaluator=mirror(field.evaluator),
        plus=plus,
        minus=minus,
        name=f'{field.name}_reflected',
        params=dict(field.params),
    )


def tails_identical(field: InterfaceDrift, grid: GridSpec) -> bool:
    """True when b+ and b- agree at every torus node"""
    points = grid.torus_points()
    return bool(np.array_equal(field.plus(points), field.minus(points)))
