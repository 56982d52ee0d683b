"""
Monte Carlo point estimates with standard errors
"""

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass
class Estimate:
    value: float
    se: float
    n: int
    method: str
    seed: Optional[int] = None
    params: Dict[str, Any] = dataclass_field(default_factory=dict)
    warnings: List[str] = dataclass_field(default_factory=list)

    @classmethod
    def from_samples(cls, samples: np.ndarray, method: str, seed: Optional[int] = None,
                     params: Optional[Dict[str, Any]] = None) -> 'Estimate':
        """Sample mean (compensated sum) and standard error of the mean"""
        samples = np.asarray(samples, dtype=float).ravel()
        n = samples.size
        if n == 0:
            return cls(float('nan'), float('nan'), 0, method, seed, dict(params or {}),
                       ['no samples'])
        mean = math.fsum(samples) / n
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n, method, seed, dict(params or {}))

    @classmethod
    def from_count(cls, count: int, n: int, method: str, seed: Optional[int] = None,
                   params: Optional[Dict[str, Any]] = None) -> 'Estimate':
        """Binomial proportion count / n"""
        p = count / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n, method, seed, dict(params or {}))

    def within(self, target: float, k: float = 3.0, floor: float = 1e-12) -> bool:
        return abs(self.value - target) <= k * self.se + floor

    def to_dict(self) -> Dict[str, Any]:
        return {'value': self.value, 'se': self.se, 'n': self.n, 'method': self.method,
                'seed': self.seed, 'params': self.params, 'warnings': list(self.warnings)}
