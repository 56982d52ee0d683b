"""
Simulation parameters read from the `simulation` config section
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from homogenization.errors import ConfigError
from simulation.limit_sim import BACKENDS
from simulation.random_streams import DEFAULT_BLOCK_SIZE


@dataclass(frozen=True)
class SimulationSettings:
    seed: int = 20240611
    threads: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE
    eps_list: Tuple[float, ...] = (0.1, 0.05, 0.025)
    horizon: float = 1.0
    dt: Optional[float] = None
    n_paths: int = 10000
    x0: Optional[Tuple[float, ...]] = None
    delta: float = 0.4
    limit_backend: str = 'grid_walk'
    limit_dt: float = 1e-4
    save_points: int = 100
    export_thin: int = 10
    export_paths: int = 200

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]]) -> 'SimulationSettings':
        """
        Raises:
            ConfigError: if the eps schedule is empty or not decreasing, or the backend is unknown
        """
        section = section or {}
        eps_list = tuple(float(e) for e in section.get('eps_list', (0.1, 0.05, 0.025)))
        if not eps_list or any(e <= 0 for e in eps_list):
            raise ConfigError(f"eps_list must hold positive values, got {list(eps_list)}")
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ConfigError(f"eps_list must be strictly decreasing, got {list(eps_list)}")
        backend = section.get('limit_backend', 'grid_walk')
        if backend not in BACKENDS:
            raise ConfigError(f"Unknown limit backend {backend!r}; choose from {BACKENDS}")
        dt = section.get('dt')
        x0 = section.get('x0')
        return cls(seed=int(section.get('seed', 20240611)),
                   threads=max(1, int(section.get('threads', 1))),
                   block_size=int(section.get('block_size', DEFAULT_BLOCK_SIZE)),
                   eps_list=eps_list,
                   horizon=float(section.get('horizon', 1.0)),
                   dt=None if dt is None else float(dt),
                   n_paths=int(section.get('n_paths', 10000)),
                   x0=None if x0 is None else tuple(float(v) for v in x0),
                   delta=float(section.get('delta', 0.4)),
                   limit_backend=backend,
                   limit_dt=float(section.get('limit_dt', 1e-4)),
                   save_points=int(section.get('save_points', 100)),
                   export_thin=int(section.get('export_thin', 10)),
                   export_paths=int(section.get('export_paths', 200)))

    @property
    def smallest_eps(self) -> float:
        return self.eps_list[-1]

    def fan_out(self) -> Dict[str, int]:
        """Keyword arguments shared by every simulator call"""
        return {'block_size': self.block_size, 'threads': self.threads}
