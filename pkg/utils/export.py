"""
JSON and CSV writers for run artifacts
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from utils.config_loader import config_hash

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-native values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_json(data: Dict[str, Any], path: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_plain(data), f, indent=2)
    logger.debug(f"Wrote {path}")
    return path


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.debug(f"Wrote {path}")
    return path


def provenance(config: Dict[str, Any], seed: Optional[int] = None, grid: Optional[Dict[str, Any]] = None,
               residuals: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Block attached to every JSON document"""
    return {
        'config_hash': config_hash(config),
        'seed': seed if seed is not None else config.get('simulation', {}).get('seed'),
        'grid': grid or {},
        'tolerances': {'solver': config.get('solver', {}), 'model': config.get('model', {}),
                       'strip': {k: v for k, v in config.get('strip', {}).items() if k != 'monte_carlo'}},
        'residuals': residuals or {},
    }


# ===== CELL ARTIFACTS =====

def write_torus_table(values: np.ndarray, points: np.ndarray, path: str, columns: List[str]) -> Path:
    """One row per torus node: coordinates then the value columns (values of shape (len(columns), *res))"""
    header = [f'x{k + 1}' for k in range(points.shape[1])] + list(columns)
    table = np.asarray(values, dtype=float).reshape(len(columns), -1).T
    return write_csv(header, ([repr(float(v)) for v in row] for row in np.hstack([points, table])), path)


def write_cell_masses(masses: Iterable[Any], path: str) -> Path:
    """Rows "side,j,mass" ordered by distance from the interface"""
    return write_csv(['side', 'j', 'mass'], ([m.side, m.j, repr(float(m.mass))] for m in masses), path)
