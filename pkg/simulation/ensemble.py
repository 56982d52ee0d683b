"""
Path ensembles produced by the simulators
"""

import csv
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np


def save_schedule(steps: int, save_points: Optional[int]) -> np.ndarray:
    """Step indices at which states are stored: 0, every k-th step, and the last step"""
    if not save_points or save_points >= steps:
        return np.arange(steps + 1)
    every = max(1, steps // save_points)
    return np.unique(np.r_[np.arange(0, steps + 1, every), steps])


@dataclass
class PathEnsemble:
    """
    Stored states of n paths; block b of the ensemble used the counter-based
    stream (seed, stream, b) of simulation.random_streams.
    """

    times: np.ndarray
    states: np.ndarray
    dt: float
    seed: int
    stream: str
    block_size: int
    eps: Optional[float] = None
    local_time: Optional[np.ndarray] = None
    events: Dict[str, np.ndarray] = dataclass_field(default_factory=dict)
    params: Dict[str, Any] = dataclass_field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[2]

    @property
    def initial(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1]

    def describe(self) -> Dict[str, Any]:
        return {'n_paths': self.n_paths, 'stored_times': int(self.times.size), 'dt': self.dt,
                'eps': self.eps, 'seed': self.seed, 'stream': self.stream,
                'block_size': self.block_size, 'params': self.params}

    def to_csv(self, path: str, thin: int = 1, max_paths: Optional[int] = None):
        """Rows: path id, t, x1..xd[, local_time]"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n = self.n_paths if max_paths is None else min(max_paths, self.n_paths)
        columns = np.arange(0, self.times.size, max(1, int(thin)))
        if columns[-1] != self.times.size - 1:
            columns = np.r_[columns, self.times.size - 1]
        header = ['path', 't'] + [f'x{k + 1}' for k in range(self.dimension)]
        if self.local_time is not None:
            header.append('local_time')
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for i in range(n):
                for c in columns:
                    row = [i, repr(float(self.times[c]))] + [repr(float(v)) for v in self.states[i, c]]
                    if self.local_time is not None:
                        row.append(repr(float(self.local_time[i, c])))
                    writer.writerow(row)
